import numpy as np
import pytest
from scipy import stats

from cirfilter.model import GammaLaw, ModelParams
from cirfilter.simulation import (
    IntensityPath,
    InvalidGrid,
    draw_initial_intensity,
    simulate_cir,
    simulate_cir_paths,
    simulate_cox_jumps,
    simulate_scenario,
)


def test_vanishing_volatility_follows_the_mean_ode():
    params = ModelParams(0.8, 0.5, 1e-6)
    path = simulate_cir(params, 2.0, 5.0, step=0.01, seed=1)
    expected = params.mean_at(2.0, path.grid)
    np.testing.assert_allclose(path.intensity, expected, rtol=1e-4)


def test_mean_at_horizon(fig1):
    params, _ = fig1
    _, lam = simulate_cir_paths(params, 1.5, 10.0, 0.5, 20_000, seed=3)
    terminal = lam[:, -1]
    se = terminal.std(ddof=1) / np.sqrt(len(terminal))
    assert abs(terminal.mean() - params.mean_at(1.5, 10.0)) < 4 * se


def test_stationary_moments(param_set):
    params, _ = param_set
    start = draw_initial_intensity(GammaLaw(2 * params.theta, 2 * params.alpha / params.rho), seed=5, size=40_000)
    _, lam = simulate_cir_paths(params, start, 4.0, 1.0, 40_000, seed=6)
    terminal = lam[:, -1]
    assert terminal.mean() == pytest.approx(params.stationary_mean, rel=0.03)
    assert terminal.var() == pytest.approx(params.stationary_variance, rel=0.06)
    assert np.all(lam >= 0)


def test_deterministic_given_seed(fig1, monkeypatch):
    params, _ = fig1
    a = simulate_cir_paths(params, 0.4, 2.0, 0.1, 20_000, seed=11)[1]
    monkeypatch.setenv("CIRFILTER_THREADS", "4")
    b = simulate_cir_paths(params, 0.4, 2.0, 0.1, 20_000, seed=11)[1]
    np.testing.assert_array_equal(a, b)
    c = simulate_cir_paths(params, 0.4, 2.0, 0.1, 20_000, seed=12)[1]
    assert not np.array_equal(a, c)


def test_gamma_initial_draw_uses_rate():
    x = draw_initial_intensity(GammaLaw(1.6, 4.0), seed=2, size=200_000)
    assert x.mean() == pytest.approx(0.4, rel=0.01)
    assert x.var() == pytest.approx(0.1, rel=0.02)


def test_bad_grid(fig1):
    with pytest.raises(InvalidGrid):
        simulate_cir(fig1[0], 0.4, 1.0, step=1.0)
    with pytest.raises(InvalidGrid):
        simulate_cir(fig1[0], 0.4, 1.0, step=0.0)


def _constant_path(lam, horizon, step=0.01):
    grid = np.linspace(0.0, horizon, int(round(horizon / step)) + 1)
    return IntensityPath(grid, np.full(len(grid), lam), step)


def test_constant_intensity_gaps_are_exponential():
    jumps = simulate_cox_jumps(_constant_path(2.0, 5000.0), seed=4)
    gaps = np.diff(np.concatenate([[0.0], jumps.as_array()]))
    assert stats.kstest(gaps, stats.expon(scale=0.5).cdf).pvalue > 0.01


def test_constant_intensity_counts_are_poisson():
    counts = [len(simulate_cox_jumps(_constant_path(1.5, 4.0), seed=k)) for k in range(3000)]
    counts = np.array(counts)
    assert counts.mean() == pytest.approx(6.0, abs=4 * np.sqrt(6.0 / 3000))
    assert counts.var() == pytest.approx(6.0, rel=0.1)


def test_zero_intensity_has_no_jumps():
    assert len(simulate_cox_jumps(_constant_path(0.0, 10.0), seed=0)) == 0


def test_jumps_inside_horizon_and_increasing(fig1):
    params, prior = fig1
    sim = simulate_scenario(params, prior, 20.0, step=0.01, seed=8)
    times = sim.jumps.as_array()
    assert np.all(np.diff(times) > 0) and (times.size == 0 or (times[0] > 0 and times[-1] <= 20.0))


def test_cir_driven_count_matches_integrated_intensity(fig1):
    params, _ = fig1
    counts, hazards = [], []
    for k in range(1500):
        sim = simulate_scenario(params, 0.6, 5.0, step=0.01, seed=100 + k)
        counts.append(len(sim.jumps))
        hazards.append(np.trapezoid(sim.intensity, sim.grid))
    counts, hazards = np.array(counts), np.array(hazards)
    diff = counts - hazards
    assert abs(diff.mean()) < 4 * diff.std(ddof=1) / np.sqrt(len(diff))
