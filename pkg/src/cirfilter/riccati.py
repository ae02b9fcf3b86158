"""Full-information survival probabilities for a CIR intensity.

For a known intensity level ``lam`` the probability of no default over a
horizon ``dt`` is ``exp(-alpha mu0 phi(dt) - lam psi(dt))``.  Both functions
are evaluated with ``exp(-gamma dt)`` so no term overflows on long horizons.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .model import ModelParams

__all__ = ["RiccatiPair", "riccati", "survival_full_info"]


class RiccatiPair(NamedTuple):
    phi: float | np.ndarray
    psi: float | np.ndarray


def riccati(dt, params: ModelParams) -> RiccatiPair:
    """Return ``(phi(dt), psi(dt))``; vectorised over ``dt >= 0``.

    ``psi`` solves ``psi' = 1 - alpha psi - beta**2 psi**2 / 2`` with
    ``psi(0) = 0`` and ``phi' = psi``.
    """
    dt = np.asarray(dt, dtype=float)
    if np.any(dt < 0):
        raise ValueError("dt must be nonnegative")
    a, g = params.alpha, params.tau
    one_minus_e = -np.expm1(-g * dt)
    # (g - a) e^{-g dt} + g + a, written relative to its t=0 value 2g
    rel_denom = -(g - a) * one_minus_e / (2.0 * g)
    psi = one_minus_e / (g * (1.0 + rel_denom))
    log_arg = 0.5 * dt * (a - g) - np.log1p(rel_denom)
    phi = -2.0 / params.rho * log_arg
    if dt.ndim == 0:
        return RiccatiPair(float(phi), float(psi))
    return RiccatiPair(phi, psi)


def survival_full_info(lambda_s, dt, params: ModelParams):
    """P(no default in (s, s+dt] | lambda_s), on the event of survival to s."""
    phi, psi = riccati(dt, params)
    out = np.exp(-params.alpha * params.mu0 * phi - np.asarray(lambda_s, dtype=float) * psi)
    return float(out) if np.ndim(out) == 0 else out
