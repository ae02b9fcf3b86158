"""Closed-form recursive filter for a Cox process with CIR intensity.

The unnormalised filter ``g(s, t)`` (a conditional MGF times a likelihood
factor) is propagated exactly.  On the interval ``[T_n, T_{n+1})``

    g(s, t) = K(t) p_n(s, t) (A(t) - s C(t)) ** -(2 theta + n)

with ``A(t), C(t)`` obtained from the affine maps :func:`abc_A`,
:func:`abc_C` and ``p_n`` a polynomial of degree ``n``.  The conditional MGF
is ``g(s, t) / g(0, t)``, so every factor independent of ``s`` cancels.  In
particular ``K(t)`` and the reference intensity (notionally the constant 1)
are never computed; the polynomial is stored normalised to ``p_n(0) = 1``.

Between jumps the polynomial at time ``t`` is the snapshot taken at the last
jump pushed through a Moebius substitution,

    p_n(s, t) = B(s, d)**n p_n(C(-2/rho, d, s) / B(s, d), T_n),  d = t - T_n,

which is expanded on coefficient vectors.  At a jump ``g`` is replaced by its
``s``-derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Iterator

import numpy as np
from numpy.polynomial import polynomial as P

from .model import (
    DegenerateState,
    GammaLaw,
    JumpRecord,
    ModelParams,
    NonPositiveParameter,
    OutOfDomain,
    TimeRegression,
)
from .riccati import riccati

__all__ = [
    "abc_A",
    "abc_B",
    "abc_C",
    "abc",
    "moebius_compose",
    "FilterState",
    "init",
    "advance",
    "jump_update",
    "conditional_mgf",
    "conditional_mean",
    "conditional_second_moment",
    "conditional_survival",
    "unnormalized_g",
    "run_filter",
    "state_at",
    "toy_filter_mgf",
    "toy_filter_mean",
]


def abc_A(x, t, y, params: ModelParams):
    e = np.exp(-params.tau * t)
    return x * ((params.tau - params.alpha) * e + params.tau + params.alpha) - 2.0 * y * np.expm1(
        -params.tau * t
    )


def abc_B(s, t, params: ModelParams):
    e = np.exp(-params.tau * t)
    return params.rho * s * np.expm1(-params.tau * t) + (params.tau - params.alpha) * e + (
        params.tau + params.alpha
    )


def abc_C(x, t, y, params: ModelParams):
    e = np.exp(-params.tau * t)
    return y * ((params.alpha + params.tau) * e + params.tau - params.alpha) - params.rho * x * np.expm1(
        -params.tau * t
    )


def abc(kind: str, *args, params: ModelParams):
    """Dispatch to ``A(x, t, y)``, ``B(s, t)`` or ``C(x, t, y)`` by name."""
    funcs = {"A": abc_A, "B": abc_B, "C": abc_C}
    try:
        func = funcs[kind.upper()]
    except KeyError:
        raise ValueError(f"unknown kind {kind!r}, expected one of A, B, C") from None
    return func(*args, params)


def _linear_parts(dt: float, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient vectors (constant first) of ``C(-2/rho, dt, s)`` and ``B(s, dt)`` in ``s``."""
    num = np.array([abc_C(-2.0 / params.rho, dt, 0.0, params), abc_C(0.0, dt, 1.0, params)])
    den = np.array([abc_B(0.0, dt, params), params.rho * np.expm1(-params.tau * dt)])
    return num, den


def moebius_compose(coeffs: np.ndarray, num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """Coefficients of ``den(s)**n * p(num(s) / den(s))`` for ``p`` of degree ``n``.

    ``num`` and ``den`` are linear polynomials given constant-term first, as
    is ``coeffs``.  The result has length ``n + 1``.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    n = len(coeffs) - 1
    num_pows = [np.array([1.0])]
    den_pows = [np.array([1.0])]
    for _ in range(n):
        num_pows.append(P.polymul(num_pows[-1], num))
        den_pows.append(P.polymul(den_pows[-1], den))
    out = np.zeros(n + 1)
    for k, c in enumerate(coeffs):
        if c == 0.0:
            continue
        term = P.polymul(num_pows[k], den_pows[n - k])
        out[: len(term)] += c * term
    return out


@dataclass(frozen=True)
class FilterState:
    """Posterior summary at time ``t`` after ``n`` observed jumps.

    ``snapshot_A``/``snapshot_C`` hold the pre-jump values at the last jump
    ``T_n`` (``(phi, 1)`` before any jump), and the current
    ``script_A``/``script_C`` are the affine maps applied to them over
    ``t - T_n``.  ``poly_snapshot`` is ``p_n(., T_n)`` normalised so its
    constant coefficient is 1.
    """

    t: float
    n: int
    jump_times: tuple[float, ...]
    script_A: float
    script_C: float
    snapshot_A: float
    snapshot_C: float
    poly_snapshot: np.ndarray = field(repr=False)
    params: ModelParams = field(repr=False)
    phi0: float

    @property
    def last_jump(self) -> float:
        return self.jump_times[-1] if self.jump_times else 0.0

    @property
    def Q(self) -> float:
        """Common Gamma rate ``A(t) / C(t)`` of the posterior mixture."""
        return self.script_A / self.script_C

    @property
    def shape(self) -> float:
        return 2.0 * self.params.theta + self.n

    @cached_property
    def current_poly(self) -> np.ndarray:
        """Unnormalised ``p_n(., t)`` expanded from the snapshot."""
        if self.n == 0:
            return np.array([1.0])
        num, den = _linear_parts(self.t - self.last_jump, self.params)
        return moebius_compose(self.poly_snapshot, num, den)

    @cached_property
    def q(self) -> np.ndarray:
        """Coefficients ``R_0 = 1, R_1, ..., R_n`` of ``q_n(., t)``."""
        p = self.current_poly
        if not p[0] > 0.0:
            raise DegenerateState(f"p_n(0, t) = {p[0]!r} is not positive")
        return p / p[0]


def init(params: ModelParams, phi: float | GammaLaw) -> FilterState:
    """Filter state at ``t = 0`` for the prior ``Gamma(2 theta, phi)``."""
    if isinstance(phi, GammaLaw):
        if not math.isclose(phi.shape, 2.0 * params.theta, rel_tol=1e-12):
            raise ValueError("the exact filter requires a Gamma(2 theta, phi) prior")
        phi = phi.rate
    phi = float(phi)
    if not math.isfinite(phi) or phi <= 0:
        raise NonPositiveParameter("phi", phi)
    return FilterState(
        t=0.0,
        n=0,
        jump_times=(),
        script_A=float(abc_A(phi, 0.0, 1.0, params)),
        script_C=float(abc_C(phi, 0.0, 1.0, params)),
        snapshot_A=phi,
        snapshot_C=1.0,
        poly_snapshot=np.array([1.0]),
        params=params,
        phi0=phi,
    )


def advance(state: FilterState, new_t: float) -> FilterState:
    """Propagate to ``new_t`` assuming no jump in ``(state.t, new_t]``."""
    new_t = float(new_t)
    if new_t < state.t:
        raise TimeRegression(f"cannot move filter from t={state.t} back to t={new_t}")
    if new_t == state.t:
        return state
    dt = new_t - state.last_jump
    a = float(abc_A(state.snapshot_A, dt, state.snapshot_C, state.params))
    c = float(abc_C(state.snapshot_A, dt, state.snapshot_C, state.params))
    if not (a > 0.0 and c > 0.0):
        raise DegenerateState(f"non-positive recursion values A={a!r}, C={c!r}")
    return replace(state, t=new_t, script_A=a, script_C=c)


def jump_update(state: FilterState) -> FilterState:
    """Condition on a jump observed at the current time ``state.t``."""
    if state.jump_times and state.t <= state.last_jump:
        raise ValueError(f"jump at t={state.t} does not follow last jump at {state.last_jump}")
    if state.t <= 0.0:
        raise ValueError("jump times must be positive")
    a, c = state.script_A, state.script_C
    p = state.q
    dp = P.polyder(p) if len(p) > 1 else np.zeros(0)
    # d/ds [p(s) (a - s c)^-k] = [k c p(s) + p'(s) (a - s c)] (a - s c)^-(k+1).
    # The s**(n+1) coefficient cancels, so the snapshot has degree n at the
    # jump and reaches degree n + 1 only once time moves past it.
    new = np.zeros(len(p) + 1)
    new[: len(p)] += state.shape * c * p
    new[: len(dp)] += a * dp
    new[1 : len(dp) + 1] -= c * dp
    if not new[0] > 0.0:
        raise DegenerateState(f"jump update produced a degenerate polynomial {new!r}")
    new = new / new[0]
    t = state.t
    return replace(
        state,
        n=state.n + 1,
        jump_times=state.jump_times + (t,),
        snapshot_A=a,
        snapshot_C=c,
        script_A=float(abc_A(a, 0.0, c, state.params)),
        script_C=float(abc_C(a, 0.0, c, state.params)),
        poly_snapshot=new,
    )


def conditional_mgf(state: FilterState, s):
    """``E[exp(s lambda_t) | jumps up to t]`` for ``s < Q``; vectorised in ``s``."""
    s = np.asarray(s, dtype=float)
    Q = state.Q
    if np.any(s >= Q):
        raise OutOfDomain(f"conditional MGF is defined for s < Q={Q!r}")
    out = P.polyval(s, state.q) * (Q / (Q - s)) ** state.shape
    return float(out) if out.ndim == 0 else out


def conditional_mean(state: FilterState) -> float:
    """``E[lambda_t | jumps up to t]`` = ``q'(0) + (2 theta + n) / Q``."""
    q = state.q
    r1 = q[1] if len(q) > 1 else 0.0
    return float(r1 + state.shape / state.Q)


def conditional_second_moment(state: FilterState) -> float:
    q = state.q
    r1 = q[1] if len(q) > 1 else 0.0
    r2 = q[2] if len(q) > 2 else 0.0
    k, Q = state.shape, state.Q
    return float(2.0 * r2 + 2.0 * r1 * k / Q + k * (k + 1.0) / Q**2)


def conditional_survival(state: FilterState, dt):
    """P(no jump in ``(t, t + dt]`` | jumps up to ``t``)."""
    phi, psi = riccati(dt, state.params)
    p = state.params
    out = np.exp(-p.alpha * p.mu0 * np.asarray(phi)) * conditional_mgf(state, -np.asarray(psi))
    return float(out) if np.ndim(out) == 0 else out


def unnormalized_g(state: FilterState, s):
    """``g(s, t)`` up to a factor that is constant on the current interval.

    Unlike the MGF this keeps the ``t``-dependence of ``K(t)`` and of
    ``p_n(0, t)``, so it satisfies the between-jump transport equation.
    """
    s = np.asarray(s, dtype=float)
    p = state.params
    scale = np.exp(p.theta * (p.alpha - p.tau) * (state.t - state.last_jump))
    return scale * P.polyval(s, state.current_poly) * (state.script_A - s * state.script_C) ** (
        -state.shape
    )


def run_filter(
    params: ModelParams,
    phi: float,
    jumps: JumpRecord | Iterable[float],
    query_times: Iterable[float],
) -> Iterator[tuple[float, str, FilterState]]:
    """Walk the filter through ``jumps``, yielding states at ``query_times``.

    Yields ``(t, tag, state)`` where ``tag`` is ``""`` for an ordinary query
    point and ``"-"``/``"+"`` for the pre/post-jump pair emitted at every
    jump time inside the query range.  Query times must be sorted; a state
    at a jump time reflects that jump.
    """
    if not isinstance(jumps, JumpRecord):
        jumps = JumpRecord(tuple(jumps))
    queries = [float(q) for q in query_times]
    if any(b < a for a, b in zip(queries, queries[1:])):
        raise ValueError("query times must be sorted")
    horizon = queries[-1] if queries else 0.0
    state = init(params, phi)
    events = sorted(
        [(t, 0) for t in jumps.times if t <= horizon] + [(t, 1) for t in queries]
    )
    for t, kind in events:
        if kind == 0:
            state = advance(state, t)
            yield t, "-", state
            state = jump_update(state)
            yield t, "+", state
        else:
            state = advance(state, t)
            yield t, "", state


def state_at(params: ModelParams, phi: float, jumps, t: float) -> FilterState:
    """Filter state at ``t`` given all jumps in ``(0, t]``."""
    if not isinstance(jumps, JumpRecord):
        jumps = JumpRecord(tuple(jumps))
    state = init(params, phi)
    for tj in jumps.times:
        if tj > t:
            break
        state = jump_update(advance(state, tj))
    return advance(state, t)


def toy_filter_mgf(a: float, b: float, t: float, n: int, s):
    """Posterior MGF for a constant intensity with ``Gamma(a, b)`` prior.

    After ``n`` jumps by time ``t`` the posterior is ``Gamma(a + n, b + t)``.
    """
    s = np.asarray(s, dtype=float)
    rate = b + t
    if np.any(s >= rate):
        raise OutOfDomain(f"toy filter MGF is defined for s < b + t = {rate!r}")
    out = (rate / (rate - s)) ** (a + n)
    return float(out) if out.ndim == 0 else out


def toy_filter_mean(a: float, b: float, t: float, n: int) -> float:
    return (a + n) / (b + t)
