"""Independent numerical oracles for the exact filter.

Two routes that share no algebra with the closed form:

* a bootstrap particle filter for point-process observations, and
* a method-of-lines solver for the between-jump transport equation of the
  unnormalised filter, with the at-jump step done by numerically
  differentiating the grid solution in ``s``.

Plus plain Monte Carlo estimators for survival probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp

from .model import CirFilterError, GammaLaw, JumpRecord, ModelParams
from .simulation import cir_transition, draw_initial_intensity, integrated_hazard

__all__ = [
    "Degeneracy",
    "StepFailure",
    "ParticleCloud",
    "ParticleTrajectory",
    "particle_filter",
    "systematic_resample",
    "Transport",
    "cir_transport",
    "toy_transport",
    "PdeGrid",
    "make_s_grid",
    "fd_weights",
    "derivative_matrix",
    "pde_between_jumps",
    "pde_filter",
    "mc_survival_full_info",
    "mc_no_jump_frequency",
]


class Degeneracy(CirFilterError, FloatingPointError):
    pass


class StepFailure(CirFilterError, RuntimeError):
    pass


# ---------------------------------------------------------------------------
# particle filter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParticleCloud:
    particles: np.ndarray
    weights: np.ndarray
    time: float

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights**2))


@dataclass(frozen=True)
class ParticleTrajectory:
    """Estimates at the query times, with standard errors.

    ``mgf[k, j]`` estimates ``E[exp(s_j lambda_{t_k}) | jumps]``.
    """

    times: np.ndarray
    mean: np.ndarray
    mean_se: np.ndarray
    s_values: np.ndarray
    mgf: np.ndarray
    mgf_se: np.ndarray
    min_ess: np.ndarray
    final: ParticleCloud


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Row-wise systematic resampling of a ``(batches, particles)`` weight array."""
    w = np.atleast_2d(weights)
    b, m = w.shape
    cum = np.cumsum(w, axis=1)
    cum /= cum[:, -1:]
    u = (rng.random((b, 1)) + np.arange(m)) / m
    offsets = np.arange(b)[:, None]
    idx = np.searchsorted((cum + offsets).ravel(), (u + offsets).ravel(), side="left")
    idx = np.minimum(idx.reshape(b, m) - offsets * m, m - 1)
    return idx


def _ratio_estimate(z: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Combine per-batch estimates ``x[b, ...]`` weighted by evidence ``z[b]``.

    Returns the ratio estimator and its delta-method standard error across
    batches.
    """
    v = z / z.mean()
    shape = (-1,) + (1,) * (x.ndim - 1)
    v = v.reshape(shape)
    est = (v * x).sum(0) / v.sum(0)
    b = len(z)
    var = ((v * (x - est)) ** 2).sum(0) / (v.sum(0) ** 2) * b / (b - 1)
    return est, np.sqrt(var)


def particle_filter(
    jumps: JumpRecord | Sequence[float],
    params: ModelParams | None,
    prior: GammaLaw,
    n_particles: int,
    query_times: Iterable[float],
    seed: int = 0,
    s_values: Sequence[float] = (),
    substep: float = 0.02,
    n_batches: int = 50,
    resample_threshold: float = 0.5,
) -> ParticleTrajectory:
    """Bootstrap particle filter for the intensity given Cox jump times.

    Particles move by exact CIR transitions on a sub-grid that contains every
    jump and query time; between sub-grid points log-weights decrease by the
    trapezoidal hazard and at each jump they gain ``log lambda``.  With
    ``params=None`` the intensity is frozen (constant-intensity model) and no
    resampling is done, since frozen particles cannot regain diversity.

    The particles are split into ``n_batches`` independent filters.  Batch
    estimates are pooled with weights proportional to each batch's
    likelihood estimate and the standard error is taken from the spread
    across batches, which accounts for resampling-induced correlation.
    """
    if n_particles < 1000:
        raise ValueError("n_particles must be at least 1000")
    if not isinstance(jumps, JumpRecord):
        jumps = JumpRecord(tuple(jumps))
    queries = np.asarray(sorted(float(q) for q in query_times))
    if queries.size and queries[0] < 0:
        raise ValueError("query times must be nonnegative")
    s_values = np.asarray(s_values, dtype=float)
    b = int(n_batches)
    m = n_particles // b
    rng = np.random.default_rng(seed)

    lam = draw_initial_intensity(prior, rng, size=(b, m))
    logw = np.zeros((b, m))
    log_z = np.zeros(b)

    horizon = float(queries[-1]) if queries.size else 0.0
    jump_set = [t for t in jumps.times if t <= horizon]
    knots = sorted(set([0.0, *jump_set, *queries.tolist()]))
    n_q = len(queries)
    mean = np.empty(n_q)
    mean_se = np.empty(n_q)
    mgf = np.empty((n_q, len(s_values)))
    mgf_se = np.empty((n_q, len(s_values)))
    min_ess = np.empty(n_q)
    jumps_iter = iter(jump_set)
    next_jump = next(jumps_iter, None)
    qi = 0

    def normalised():
        shift = logw.max(axis=1, keepdims=True)
        w = np.exp(logw - shift)
        return w, shift[:, 0]

    def record(k):
        w, shift = normalised()
        wsum = w.sum(axis=1)
        ess = wsum**2 / (w**2).sum(axis=1)
        # batch evidence up to a common factor
        lz = log_z + shift + np.log(wsum / m)
        z = np.exp(lz - lz.max())
        wn = w / wsum[:, None]
        stats = [(wn * lam).sum(axis=1)]
        for s in s_values:
            stats.append((wn * np.exp(s * lam)).sum(axis=1))
        est, se = _ratio_estimate(z, np.stack(stats, axis=1))
        mean[k], mean_se[k] = est[0], se[0]
        mgf[k], mgf_se[k] = est[1:], se[1:]
        min_ess[k] = ess.min()

    while qi < n_q and queries[qi] == 0.0:
        record(qi)
        qi += 1
    for t0, t1 in zip(knots[:-1], knots[1:]):
        n_sub = max(1, int(math.ceil((t1 - t0) / substep - 1e-9)))
        h = (t1 - t0) / n_sub
        for _ in range(n_sub):
            if params is None:
                logw -= h * lam
            else:
                new = cir_transition(rng, lam, h, params)
                logw -= 0.5 * h * (lam + new)
                lam = new
        if next_jump is not None and t1 == next_jump:
            with np.errstate(divide="ignore"):
                logw += np.log(lam)
            next_jump = next(jumps_iter, None)
        if not np.all(np.isfinite(logw.max(axis=1))):
            raise Degeneracy(f"all particle weights vanished in some batch at t={t1}")
        while qi < n_q and queries[qi] == t1:
            record(qi)
            qi += 1
        if params is not None and resample_threshold > 0:
            w, shift = normalised()
            wsum = w.sum(axis=1)
            ess = wsum**2 / (w**2).sum(axis=1)
            rows = np.nonzero(ess < resample_threshold * m)[0]
            if rows.size:
                idx = systematic_resample(w[rows], rng)
                lam[rows] = np.take_along_axis(lam[rows], idx, axis=1)
                log_z[rows] += shift[rows] + np.log(wsum[rows] / m)
                logw[rows] = 0.0

    w, shift = normalised()
    lz = log_z + shift + np.log(w.sum(axis=1) / m)
    pooled = (w / w.sum(axis=1, keepdims=True)) * np.exp(lz - lz.max())[:, None]
    final = ParticleCloud(lam.ravel().copy(), (pooled / pooled.sum()).ravel(), horizon)
    return ParticleTrajectory(queries, mean, mean_se, s_values, mgf, mgf_se, min_ess, final)


# ---------------------------------------------------------------------------
# method-of-lines transport solver
# ---------------------------------------------------------------------------


class Transport(NamedTuple):
    """``dg/dt = source(s) g + speed(s) dg/ds`` on an ``s`` grid."""

    speed: Callable[[np.ndarray], np.ndarray]
    source: Callable[[np.ndarray], np.ndarray]


def cir_transport(params: ModelParams) -> Transport:
    a, rho, mu0 = params.alpha, params.rho, params.mu0
    return Transport(
        speed=lambda s: 0.5 * rho * s * s - a * s - 1.0,
        source=lambda s: s * mu0 * a,
    )


def toy_transport() -> Transport:
    """All CIR coefficients zero: ``dg/dt = -dg/ds``."""
    return Transport(speed=lambda s: -np.ones_like(s), source=lambda s: np.zeros_like(s))


@dataclass(frozen=True)
class PdeGrid:
    s_nodes: np.ndarray
    values: np.ndarray
    t: float

    @property
    def zero_index(self) -> int:
        return int(np.argmin(np.abs(self.s_nodes)))

    def mgf(self) -> np.ndarray:
        """``g(s, t) / g(0, t)`` on the grid; needs a node at ``s = 0``."""
        g0 = self.values[self.zero_index]
        if not g0 > 0:
            raise StepFailure(f"g(0, t) = {g0!r} is not positive at t={self.t}")
        return self.values / g0


def make_s_grid(s_lo: float, s_hi: float, n_nodes: int) -> np.ndarray:
    """Uniform grid over about ``[s_lo, s_hi]`` with ``s = 0`` exactly on a node."""
    if not s_lo < 0 < s_hi:
        raise ValueError("grid must straddle s = 0")
    n_left = int(round((n_nodes - 1) * (-s_lo) / (s_hi - s_lo)))
    h = -s_lo / n_left
    return h * (np.arange(n_nodes) - n_left)


def fd_weights(offsets: Sequence[float], order: int = 1) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative at offset 0 (unit spacing)."""
    offsets = np.asarray(offsets, dtype=float)
    k = len(offsets)
    vander = np.vander(offsets, k, increasing=True).T
    rhs = np.zeros(k)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(vander, rhs)


def derivative_matrix(n: int, h: float, bias: np.ndarray | None = None, width: int = 5) -> sparse.csr_matrix:
    """Sparse ``d/ds`` on ``n`` uniform nodes with ``width``-point stencils.

    ``bias[i] > 0`` selects an upwind stencil reaching one node further left
    than right (information arriving from smaller ``s``), ``bias[i] < 0`` the
    mirror image, ``0`` a centred stencil.  Stencils are shifted inside the
    grid at the ends.
    """
    half = width // 2
    rows, cols, vals = [], [], []
    bias = np.zeros(n) if bias is None else np.asarray(bias)
    cache = {}
    for i in range(n):
        lo = i - half - (1 if bias[i] > 0 else -1 if bias[i] < 0 else 0)
        lo = min(max(lo, 0), n - width)
        offs = tuple(range(lo - i, lo - i + width))
        if offs not in cache:
            cache[offs] = fd_weights(offs) / h
        rows.extend([i] * width)
        cols.extend(range(lo, lo + width))
        vals.extend(cache[offs])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def pde_between_jumps(
    s_nodes: np.ndarray,
    initial: np.ndarray,
    transport: Transport,
    t_span: tuple[float, float],
    t_eval: Sequence[float] | None = None,
    inflow: Callable[[np.ndarray, float], np.ndarray] | None = None,
    rtol: float = 1e-11,
    atol: float = 0.0,
) -> list[PdeGrid]:
    """Integrate the transport equation with 4th-order upwind-biased differences.

    Characteristics move with velocity ``-speed(s)``; each node uses the
    stencil biased towards where its information comes from.  If
    ``inflow(s, t)`` is given, it supplies exact values at three ghost nodes
    beyond each end of the grid, so inflow boundaries keep their upwind
    stencil.  Returns grids at ``t_eval`` (default: the end of ``t_span``).
    """
    s = np.asarray(s_nodes, dtype=float)
    g0 = np.asarray(initial, dtype=float)
    h = s[1] - s[0]
    velocity = -transport.speed(s)
    source = transport.source(s)
    t_eval = [t_span[1]] if t_eval is None else list(t_eval)
    if inflow is None:
        D = derivative_matrix(len(s), h, bias=np.sign(velocity))
        speed = transport.speed(s)

        def rhs(t, g):
            return source * g + speed * (D @ g)

        y0 = g0
    else:
        ghost = 3
        ext = np.concatenate([s[0] - h * np.arange(ghost, 0, -1), s, s[-1] + h * np.arange(1, ghost + 1)])
        vel_ext = -transport.speed(ext)
        D = derivative_matrix(len(ext), h, bias=np.sign(vel_ext))[ghost:-ghost]
        speed = transport.speed(s)
        left, right = ext[:ghost], ext[-ghost:]

        def rhs(t, g):
            full = np.concatenate([inflow(left, t), g, inflow(right, t)])
            return source * g + speed * (D @ full)

        y0 = g0
    if atol == 0.0:
        atol = 1e-14 * float(np.max(np.abs(g0)))
    sol = solve_ivp(rhs, t_span, y0, method="DOP853", t_eval=t_eval, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise StepFailure(sol.message)
    return [PdeGrid(s, sol.y[:, k].copy(), float(t)) for k, t in enumerate(sol.t)]


def pde_filter(
    params: ModelParams,
    phi: float,
    jumps: Sequence[float],
    eval_times: Sequence[float],
    s_nodes: np.ndarray,
    rtol: float = 1e-11,
) -> list[PdeGrid]:
    """Numerical filter: PDE between jumps, grid differentiation at jumps.

    Starts from the Gamma prior MGF ``(phi / (phi - s)) ** (2 theta)``.  At a
    jump the grid solution is replaced by its 4th-order finite-difference
    ``s``-derivative (reference intensity 1).  Returns grids at
    ``eval_times``; the conditional MGF is ``grid.mgf()``.
    """
    s = np.asarray(s_nodes, dtype=float)
    if np.max(s) >= phi:
        raise ValueError("grid must lie below the prior rate phi")
    eval_times = sorted(float(t) for t in eval_times)
    horizon = eval_times[-1]
    transport = cir_transport(params)
    D_central = derivative_matrix(len(s), s[1] - s[0])
    jump_list = [float(tj) for tj in jumps if tj <= horizon]
    bounds = [0.0, *jump_list, horizon] if not jump_list or jump_list[-1] < horizon else [0.0, *jump_list]
    g = (phi / (phi - s)) ** (2.0 * params.theta)
    found: dict[float, PdeGrid] = {}
    for k, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        if a in eval_times:
            found[a] = PdeGrid(s, g.copy(), a)
        b_is_jump = k < len(jump_list)
        inner = [te for te in eval_times if a < te < b or (te == b and not b_is_jump)]
        grids = pde_between_jumps(s, g, transport, (a, b), t_eval=sorted(set(inner + [b])), rtol=rtol)
        for pg in grids:
            if pg.t in inner:
                found[pg.t] = pg
        g = grids[-1].values
        if b_is_jump:
            g = D_central @ g
    if bounds[-1] in eval_times and bounds[-1] not in found:
        found[bounds[-1]] = PdeGrid(s, g.copy(), bounds[-1])
    return [found[te] for te in eval_times]


# ---------------------------------------------------------------------------
# plain Monte Carlo
# ---------------------------------------------------------------------------


def mc_survival_full_info(
    params: ModelParams, lambda0: float, horizon: float, n_paths: int, step: float = 1e-2, seed: int = 0
) -> tuple[float, float]:
    """Estimate ``E[exp(-int_0^horizon lambda)] | lambda_0`` and its standard error."""
    _, hazard = integrated_hazard(params, lambda0, horizon, step, n_paths, seed)
    x = np.exp(-hazard)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n_paths))


def mc_no_jump_frequency(
    params: ModelParams, prior: GammaLaw, horizon: float, n_paths: int, step: float = 1e-2, seed: int = 0
) -> tuple[float, float]:
    """Fraction of simulated Cox paths (``lambda_0`` from ``prior``) without a jump by ``horizon``.

    A path has no jump iff its first exponential threshold exceeds the
    integrated hazard.
    """
    ss = np.random.SeedSequence(seed)
    s_init, s_path, s_exp = ss.spawn(3)
    lam0 = draw_initial_intensity(prior, np.random.default_rng(s_init), size=n_paths)
    _, hazard = integrated_hazard(params, lam0, horizon, step, n_paths, int(s_path.generate_state(1)[0]))
    first = np.random.default_rng(s_exp).standard_exponential(n_paths)
    hit = (first > hazard).astype(float)
    p = hit.mean()
    return float(p), float(math.sqrt(p * (1.0 - p) / n_paths))
