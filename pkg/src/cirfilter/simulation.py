"""Ground-truth simulation of CIR intensities and Cox-process jump times.

Intensity paths use the exact noncentral chi-square transition of the CIR
diffusion, so the grid step only affects the trapezoidal hazard used to
place jumps.  Jumps are generated by time change: the k-th jump is the
first time the integrated hazard reaches the k-th partial sum of standard
exponentials.

Multi-path simulations are split into fixed-size chunks, each drawing from
its own child of ``SeedSequence(seed)``.  Results therefore depend only on
``seed`` and never on how many threads process the chunks.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import GammaLaw, JumpRecord, ModelParams

__all__ = [
    "InvalidGrid",
    "IntensityPath",
    "SimPath",
    "cir_transition",
    "simulate_cir",
    "simulate_cir_paths",
    "simulate_cox_jumps",
    "draw_initial_intensity",
    "simulate_scenario",
    "integrated_hazard",
    "CHUNK",
]

CHUNK = 8192


class InvalidGrid(ValueError):
    pass


@dataclass(frozen=True)
class IntensityPath:
    grid: np.ndarray
    intensity: np.ndarray
    step: float
    seed: int | None = None

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])


@dataclass(frozen=True)
class SimPath:
    """An intensity path together with the jumps it generated."""

    grid: np.ndarray
    intensity: np.ndarray
    jumps: JumpRecord
    seed: int
    step: float

    @property
    def path(self) -> IntensityPath:
        return IntensityPath(self.grid, self.intensity, self.step, self.seed)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CIRFILTER_THREADS", "1")))
    except ValueError:
        return 1


def _make_grid(horizon: float, step: float) -> np.ndarray:
    if not (step > 0 and horizon > 0) or step >= horizon:
        raise InvalidGrid(f"need 0 < step < horizon, got step={step}, horizon={horizon}")
    n = int(np.ceil(horizon / step - 1e-9))
    grid = np.linspace(0.0, horizon, n + 1)
    return grid


def cir_transition(rng: np.random.Generator, lam, dt: float, params: ModelParams, scheme: str = "exact"):
    """Draw ``lambda_{t+dt}`` given ``lambda_t = lam`` (vectorised).

    ``scheme="exact"`` samples the scaled noncentral chi-square law;
    ``scheme="euler"`` is a full-truncation Euler step kept for
    cross-checks only (it returns the truncated, possibly negative state).
    """
    lam = np.asarray(lam, dtype=float)
    if scheme == "exact":
        decay = np.exp(-params.alpha * dt)
        c = params.rho * (-np.expm1(-params.alpha * dt)) / (4.0 * params.alpha)
        df = 4.0 * params.theta
        nonc = np.maximum(lam, 0.0) * decay / c
        return c * rng.noncentral_chisquare(df, nonc)
    if scheme == "euler":
        pos = np.maximum(lam, 0.0)
        z = rng.standard_normal(lam.shape)
        return lam + params.alpha * (params.mu0 - pos) * dt + params.beta * np.sqrt(pos * dt) * z
    raise ValueError(f"unknown scheme {scheme!r}")


def simulate_cir(
    params: ModelParams,
    lambda0: float,
    horizon: float,
    step: float = 1e-3,
    seed: int = 0,
    scheme: str = "exact",
) -> IntensityPath:
    """One CIR path on a uniform grid over ``[0, horizon]``."""
    if lambda0 < 0:
        raise ValueError("lambda0 must be nonnegative")
    grid = _make_grid(horizon, step)
    rng = np.random.default_rng(seed)
    lam = np.empty(len(grid))
    lam[0] = lambda0
    state = float(lambda0)
    for i in range(1, len(grid)):
        state = float(cir_transition(rng, state, grid[i] - grid[i - 1], params, scheme))
        lam[i] = max(state, 0.0)
    return IntensityPath(grid, lam, float(grid[1] - grid[0]), seed)


def _chunked(n_paths: int, seed: int, work: Callable[[np.random.Generator, slice], object]) -> list:
    n_chunks = max(1, -(-n_paths // CHUNK))
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    jobs = [(np.random.default_rng(ss), slice(i * CHUNK, min((i + 1) * CHUNK, n_paths))) for i, ss in enumerate(children)]
    threads = _threads()
    if threads == 1 or len(jobs) == 1:
        return [work(rng, sl) for rng, sl in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: work(*job), jobs))


def simulate_cir_paths(
    params: ModelParams,
    lambda0,
    horizon: float,
    step: float,
    n_paths: int,
    seed: int = 0,
    scheme: str = "exact",
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate ``n_paths`` paths; returns ``(grid, intensity[n_paths, len(grid)])``.

    ``lambda0`` is a scalar or one starting value per path.
    """
    grid = _make_grid(horizon, step)
    lam0 = np.broadcast_to(np.asarray(lambda0, dtype=float), (n_paths,))
    out = np.empty((n_paths, len(grid)))
    out[:, 0] = lam0

    def work(rng, sl):
        state = lam0[sl].copy()
        for i in range(1, len(grid)):
            state = cir_transition(rng, state, grid[i] - grid[i - 1], params, scheme)
            out[sl, i] = np.maximum(state, 0.0)

    if n_paths:
        _chunked(n_paths, seed, work)
    return grid, out


def integrated_hazard(
    params: ModelParams,
    lambda0,
    horizon: float,
    step: float,
    n_paths: int,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Terminal intensity and trapezoidal ``int_0^horizon lambda dt`` per path.

    Streams over the grid without storing paths, for large Monte Carlo runs.
    """
    grid = _make_grid(horizon, step)
    lam0 = np.broadcast_to(np.asarray(lambda0, dtype=float), (n_paths,))
    lam_T = np.empty(n_paths)
    hazard = np.empty(n_paths)

    def work(rng, sl):
        state = lam0[sl].copy()
        acc = np.zeros_like(state)
        for i in range(1, len(grid)):
            dt = grid[i] - grid[i - 1]
            new = cir_transition(rng, state, dt, params)
            acc += 0.5 * dt * (state + new)
            state = new
        lam_T[sl] = state
        hazard[sl] = acc

    if n_paths:
        _chunked(n_paths, seed, work)
    return lam_T, hazard


def simulate_cox_jumps(path: IntensityPath, seed: int = 0) -> JumpRecord:
    """Jump times of a Cox process driven by ``path``.

    Between grid points the intensity is linear, so the cumulative hazard is
    the trapezoid rule and jump times solve a quadratic exactly.
    """
    grid = np.asarray(path.grid, dtype=float)
    lam = np.asarray(path.intensity, dtype=float)
    h = np.diff(grid)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (lam[:-1] + lam[1:]))])
    total = cum[-1]
    if total <= 0.0:
        return JumpRecord(())
    rng = np.random.default_rng(seed)
    thresholds = []
    level = 0.0
    while True:
        batch = level + np.cumsum(rng.standard_exponential(max(16, int(total - level) + 16)))
        keep = batch[batch < total]
        thresholds.append(keep)
        if len(keep) < len(batch):
            break
        level = batch[-1]
    e = np.concatenate(thresholds)
    if e.size == 0:
        return JumpRecord(())
    cell = np.clip(np.searchsorted(cum, e, side="right") - 1, 0, len(h) - 1)
    r = e - cum[cell]
    lam0 = lam[cell]
    curv = (lam[cell + 1] - lam0) / (2.0 * h[cell])
    disc = np.sqrt(np.maximum(lam0 * lam0 + 4.0 * curv * r, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(lam0 + disc > 0, 2.0 * r / (lam0 + disc), 0.0)
    times = grid[cell] + np.clip(u, 0.0, h[cell])
    return JumpRecord(tuple(times))


def draw_initial_intensity(law: GammaLaw, seed: int | np.random.Generator = 0, size=None):
    """Sample ``Gamma(shape, rate)``; numpy uses scale ``= 1 / rate``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.gamma(law.shape, 1.0 / law.rate, size=size)


def simulate_scenario(
    params: ModelParams,
    start: float | GammaLaw,
    horizon: float,
    step: float = 1e-3,
    seed: int = 0,
) -> SimPath:
    """Intensity path plus Cox jumps; ``start`` is ``lambda_0`` or its Gamma law."""
    seeds = np.random.SeedSequence(seed).generate_state(3)
    if isinstance(start, GammaLaw):
        lambda0 = float(draw_initial_intensity(start, int(seeds[0])))
    else:
        lambda0 = float(start)
    path = simulate_cir(params, lambda0, horizon, step, int(seeds[1]))
    jumps = simulate_cox_jumps(path, int(seeds[2]))
    return SimPath(path.grid, path.intensity, jumps, seed, path.step)
