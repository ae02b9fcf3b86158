"""Parameter and observation types shared across the package.

The latent intensity follows the square-root diffusion

    d lambda_t = -alpha (lambda_t - mu0) dt + beta sqrt(lambda_t) dW_t

and the initial intensity is Gamma distributed.  Gamma laws are always
parametrised by (shape, rate): ``Gamma(a, b)`` has mean ``a / b`` and moment
generating function ``(b / (b - s)) ** a`` for ``s < b``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np

__all__ = [
    "CirFilterError",
    "NonPositiveParameter",
    "NonMonotoneJumps",
    "OutOfDomain",
    "TimeRegression",
    "DegenerateState",
    "FellerWarning",
    "ModelParams",
    "GammaLaw",
    "JumpRecord",
    "validate_params",
    "params_from_json",
]


class CirFilterError(Exception):
    """Base class for errors raised by this package."""


class NonPositiveParameter(CirFilterError, ValueError):
    def __init__(self, name: str, value: float):
        super().__init__(f"parameter {name!r} must be positive and finite, got {value!r}")
        self.name = name
        self.value = value


class NonMonotoneJumps(CirFilterError, ValueError):
    pass


class OutOfDomain(CirFilterError, ValueError):
    pass


class TimeRegression(CirFilterError, ValueError):
    pass


class DegenerateState(CirFilterError, ArithmeticError):
    pass


class FellerWarning(UserWarning):
    """alpha * mu0 < beta**2 / 2: the latent intensity may touch zero."""


def _check_positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise NonPositiveParameter(name, value)
    return value


@dataclass(frozen=True)
class ModelParams:
    """CIR coefficients with the derived constants used throughout.

    ``rho = beta**2``, ``tau = sqrt(alpha**2 + 2 beta**2)`` and
    ``theta = mu0 alpha / rho``.  ``tau`` is also the ``gamma`` constant of
    the full-information survival formula.  Derived values are computed once
    here and read by every other module.
    """

    alpha: float
    mu0: float
    beta: float
    rho: float = field(init=False)
    tau: float = field(init=False)
    theta: float = field(init=False)
    strictly_positive: bool = field(init=False)

    def __post_init__(self):
        alpha = _check_positive("alpha", self.alpha)
        mu0 = _check_positive("mu0", self.mu0)
        beta = _check_positive("beta", self.beta)
        rho = beta * beta
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "tau", math.sqrt(alpha * alpha + 2.0 * rho))
        object.__setattr__(self, "theta", mu0 * alpha / rho)
        object.__setattr__(self, "strictly_positive", alpha * mu0 >= 0.5 * rho)

    def to_dict(self) -> dict[str, float]:
        return {"alpha": self.alpha, "mu0": self.mu0, "beta": self.beta}

    @property
    def stationary_mean(self) -> float:
        return self.mu0

    @property
    def stationary_variance(self) -> float:
        return self.mu0 * self.rho / (2.0 * self.alpha)

    def mean_at(self, lambda0, t):
        """E[lambda_t | lambda_0]."""
        decay = np.exp(-self.alpha * np.asarray(t, dtype=float))
        return lambda0 * decay + self.mu0 * (1.0 - decay)


@dataclass(frozen=True)
class GammaLaw:
    """Gamma distribution in the shape/rate convention."""

    shape: float
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "shape", _check_positive("shape", self.shape))
        object.__setattr__(self, "rate", _check_positive("rate", self.rate))

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def variance(self) -> float:
        return self.shape / self.rate**2

    def mgf(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s >= self.rate):
            raise OutOfDomain(f"Gamma MGF requires s < rate={self.rate}")
        out = (self.rate / (self.rate - s)) ** self.shape
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class JumpRecord:
    """Observed jump times ``T_1 < T_2 < ...``; ``T_0 = 0`` is implicit."""

    times: tuple[float, ...] = ()

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        for t in times:
            if not math.isfinite(t) or t <= 0.0:
                raise NonMonotoneJumps(f"jump times must be positive and finite, got {t!r}")
        for a, b in zip(times, times[1:]):
            if not b > a:
                raise NonMonotoneJumps(
                    f"jump times must be strictly increasing, got {a!r} then {b!r}"
                )
        object.__setattr__(self, "times", times)

    @classmethod
    def from_iterable(cls, times: Iterable[float]) -> "JumpRecord":
        return cls(tuple(times))

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self):
        return iter(self.times)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)

    def count_up_to(self, t: float) -> int:
        """Number of jumps in ``(0, t]``."""
        return int(np.searchsorted(self.as_array(), t, side="right"))


def validate_params(raw: Mapping[str, Any]) -> tuple[ModelParams, GammaLaw]:
    """Build model parameters and the Gamma prior ``Gamma(2 theta, phi)``.

    Raises :class:`NonPositiveParameter` naming the first offending field.
    A violated positivity condition ``alpha mu0 >= beta**2 / 2`` is only
    reported through :class:`FellerWarning` and the ``strictly_positive``
    flag.
    """
    for name in ("alpha", "mu0", "beta", "phi"):
        if name not in raw:
            raise KeyError(f"missing parameter {name!r}")
        _check_positive(name, raw[name])
    params = ModelParams(raw["alpha"], raw["mu0"], raw["beta"])
    if not params.strictly_positive:
        warnings.warn(
            f"alpha*mu0={params.alpha * params.mu0:g} < beta^2/2={params.rho / 2:g}",
            FellerWarning,
            stacklevel=2,
        )
    prior = GammaLaw(2.0 * params.theta, float(raw["phi"]))
    return params, prior


def params_from_json(text: str) -> tuple[ModelParams, GammaLaw]:
    return validate_params(json.loads(text))
