import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from cirfilter.filter import conditional_mean, conditional_mgf, conditional_second_moment, state_at
from cirfilter.mixture import (
    GammaMixture,
    NegativeWeight,
    mixture_cdf,
    mixture_from_state,
    mixture_mean,
    mixture_mgf,
    mixture_pdf,
    mixture_second_moment,
    weights_from_coefficients,
)
from cirfilter.model import ModelParams, OutOfDomain

pos = st.floats(min_value=0.1, max_value=2.0)
jump_lists = st.lists(st.floats(min_value=0.05, max_value=5.0), min_size=0, max_size=6, unique=True).map(sorted)


@settings(max_examples=150, deadline=None)
@given(st.builds(ModelParams, pos, pos, pos), st.floats(0.5, 5.0), jump_lists, st.floats(0.01, 2.0))
def test_mixture_reproduces_filter(params, phi, jumps, extra):
    state = state_at(params, phi, jumps, (jumps[-1] if jumps else 0.0) + extra)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeWeight)
        mix = mixture_from_state(state)
    assert abs(mix.weights.sum() - 1.0) < 1e-12
    s = np.linspace(-3.0, 0.5 * state.Q, 9)
    np.testing.assert_allclose(mixture_mgf(mix, s), conditional_mgf(state, s), rtol=1e-10)
    assert mixture_mean(mix) == pytest.approx(conditional_mean(state), rel=1e-10)
    assert mixture_second_moment(mix) == pytest.approx(conditional_second_moment(state), rel=1e-10)


def test_reference_weights(fig1):
    params, phi = fig1
    state = state_at(params, phi, [1.0, 2.0], 2.0)
    mix = mixture_from_state(state)
    np.testing.assert_allclose(mix.shapes, [3.6, 2.6, 1.6])
    assert mix.weights[2] == pytest.approx(0.0, abs=1e-14)
    for t in np.linspace(2.0, 3.99, 40):
        mix = mixture_from_state(state_at(params, phi, [1.0, 2.0, 3.0], t))
        assert mix.valid and abs(mix.weights.sum() - 1.0) < 1e-12


def test_density_and_distribution(fig1):
    params, phi = fig1
    mix = mixture_from_state(state_at(params, phi, [1.0, 2.0, 3.0], 3.5))
    total, _ = integrate.quad(lambda x: mixture_pdf(mix, x), 0.0, np.inf, limit=200)
    assert total == pytest.approx(1.0, abs=1e-9)
    first, _ = integrate.quad(lambda x: x * mixture_pdf(mix, x), 0.0, np.inf, limit=200)
    assert first == pytest.approx(mixture_mean(mix), rel=1e-8)
    part, _ = integrate.quad(lambda x: mixture_pdf(mix, x), 0.0, 0.7)
    assert mixture_cdf(mix, 0.7) == pytest.approx(part, rel=1e-9)
    assert mixture_cdf(mix, 0.0) == 0.0 and mixture_pdf(mix, -1.0) == 0.0


def test_back_substitution_on_known_mixture():
    pi = np.array([0.2, 0.5, 0.3])
    Q = 2.5
    # R_j = (-1)^j Q^-j sum_i C(i, j) pi_i
    R = np.array([1.0, -(0.5 + 2 * 0.3) / Q, 0.3 / Q**2])
    np.testing.assert_allclose(weights_from_coefficients(R, Q), pi, atol=1e-15)


def test_negative_weight_is_reported_not_clamped():
    mix = GammaMixture(1, 2.0, np.array([1.2, -0.2]), np.array([3.0, 2.0]))
    assert not mix.valid
    with pytest.raises(OutOfDomain):
        mixture_mgf(mix, 2.0)


def test_randomised_nonnegativity(rng):
    worst = 0.0
    for _ in range(200):
        params = ModelParams(*rng.uniform(0.1, 2.0, size=3))
        jumps = np.sort(rng.uniform(0.05, 6.0, size=rng.integers(0, 7)))
        t = (jumps[-1] if jumps.size else 0.0) + rng.uniform(0.0, 2.0)
        mix = mixture_from_state(state_at(params, rng.uniform(0.5, 5.0), jumps, t))
        worst = min(worst, mix.weights.min())
    print(f"most negative weight over 200 random states: {worst:.3e}")
    assert worst >= -1e-12
