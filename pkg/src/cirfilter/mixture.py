"""Posterior of the intensity as a finite mixture of Gamma laws.

After ``n`` jumps the conditional MGF ``q_n(s) (Q / (Q - s)) ** (2 theta + n)``
equals ``sum_i pi_i (Q / (Q - s)) ** (2 theta + n - i)``: component ``i`` is
``Gamma(2 theta + n - i, Q)``.  Matching coefficients of ``s`` gives the
weights by back-substitution from ``i = n`` down to ``0``.

Nonnegativity of the weights is checked, never enforced.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .filter import FilterState
from .model import OutOfDomain

__all__ = [
    "NEGATIVE_TOL",
    "NegativeWeight",
    "GammaMixture",
    "mixture_from_state",
    "weights_from_coefficients",
    "mixture_mgf",
    "mixture_pdf",
    "mixture_cdf",
    "mixture_mean",
    "mixture_second_moment",
]

NEGATIVE_TOL = -1e-12


class NegativeWeight(UserWarning):
    pass


@dataclass(frozen=True)
class GammaMixture:
    n: int
    rate: float
    weights: np.ndarray
    shapes: np.ndarray

    @property
    def valid(self) -> bool:
        """All weights nonnegative up to ``NEGATIVE_TOL``."""
        return bool(np.all(self.weights >= NEGATIVE_TOL))


def weights_from_coefficients(R: np.ndarray, Q: float) -> np.ndarray:
    """Solve ``R_j = (-1)^j Q^-j sum_{i>=j} C(i, j) pi_i`` for ``pi``."""
    n = len(R) - 1
    pi = np.zeros(n + 1)
    for j in range(n, -1, -1):
        tail = sum(math.comb(i, j) * pi[i] for i in range(j + 1, n + 1))
        pi[j] = (-1) ** j * R[j] * Q**j - tail
    return pi


def mixture_from_state(state: FilterState) -> GammaMixture:
    R = state.q
    Q = state.Q
    weights = weights_from_coefficients(R, Q)
    shapes = state.shape - np.arange(state.n + 1, dtype=float)
    mix = GammaMixture(state.n, Q, weights, shapes)
    if not mix.valid:
        warnings.warn(
            f"negative mixing weight {weights.min():.3e} at t={state.t}, n={state.n}, "
            f"jumps={state.jump_times}",
            NegativeWeight,
            stacklevel=2,
        )
    return mix


def mixture_mgf(mix: GammaMixture, s):
    s = np.asarray(s, dtype=float)
    if np.any(s >= mix.rate):
        raise OutOfDomain(f"mixture MGF is defined for s < rate={mix.rate!r}")
    base = mix.rate / (mix.rate - s[..., None])
    out = (mix.weights * base**mix.shapes).sum(-1)
    return float(out) if out.ndim == 0 else out


def mixture_pdf(mix: GammaMixture, x):
    x = np.asarray(x, dtype=float)
    xs = x[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logpdf = mix.shapes * np.log(mix.rate) + (mix.shapes - 1.0) * np.log(xs) - mix.rate * xs - special.gammaln(
            mix.shapes
        )
    dens = np.where(xs > 0, np.exp(logpdf), 0.0)
    out = (mix.weights * dens).sum(-1)
    return float(out) if out.ndim == 0 else out


def mixture_cdf(mix: GammaMixture, x):
    x = np.asarray(x, dtype=float)
    out = (mix.weights * special.gammainc(mix.shapes, mix.rate * np.maximum(x, 0.0)[..., None])).sum(-1)
    return float(out) if out.ndim == 0 else out


def mixture_mean(mix: GammaMixture) -> float:
    return float(np.dot(mix.weights, mix.shapes) / mix.rate)


def mixture_second_moment(mix: GammaMixture) -> float:
    return float(np.dot(mix.weights, mix.shapes * (mix.shapes + 1.0)) / mix.rate**2)
