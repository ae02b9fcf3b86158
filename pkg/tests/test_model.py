import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cirfilter.model import (
    FellerWarning,
    GammaLaw,
    JumpRecord,
    ModelParams,
    NonMonotoneJumps,
    NonPositiveParameter,
    OutOfDomain,
    params_from_json,
    validate_params,
)

positive = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False, allow_infinity=False)


def test_reference_derived_constants():
    params, prior = validate_params({"alpha": 0.5, "mu0": 0.4, "beta": 0.5, "phi": 4.0})
    assert params.rho == 0.25
    assert params.tau == pytest.approx(math.sqrt(0.75), rel=1e-15)
    assert params.theta == pytest.approx(0.8, rel=1e-15)
    assert params.strictly_positive
    assert prior.shape == pytest.approx(1.6) and prior.rate == 4.0


def test_zero_beta_rejected_with_field_name():
    with pytest.raises(NonPositiveParameter) as info:
        validate_params({"alpha": 1, "mu0": 1, "beta": 0, "phi": 1})
    assert info.value.name == "beta"


@pytest.mark.parametrize("field", ["alpha", "mu0", "beta", "phi"])
@pytest.mark.parametrize("bad", [-1.0, 0.0, math.inf, math.nan])
def test_bad_values_rejected(field, bad):
    raw = {"alpha": 1, "mu0": 1, "beta": 1, "phi": 1, field: bad}
    with pytest.raises(NonPositiveParameter) as info:
        validate_params(raw)
    assert info.value.name == field


def test_feller_violation_is_only_a_warning():
    with pytest.warns(FellerWarning):
        params, _ = validate_params({"alpha": 0.5, "mu0": 0.1, "beta": 0.5, "phi": 1})
    assert not params.strictly_positive


def test_feller_boundary_counts_as_positive():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        params, _ = validate_params({"alpha": 0.5, "mu0": 0.25, "beta": 0.5, "phi": 1})
    assert params.strictly_positive


@given(positive, positive, positive)
def test_tau_identities(alpha, mu0, beta):
    p = ModelParams(alpha, mu0, beta)
    assert p.tau > p.alpha
    assert p.theta > 0
    assert p.tau**2 - p.alpha**2 == pytest.approx(2 * p.rho, rel=1e-12, abs=1e-12 * p.tau**2)
    assert (p.alpha + p.tau) * (p.tau - p.alpha) == pytest.approx(2 * p.rho, rel=1e-12, abs=1e-12 * p.tau**2)


@given(positive, positive, positive, positive)
def test_json_round_trip(alpha, mu0, beta, phi):
    p, prior = validate_params({"alpha": alpha, "mu0": mu0, "beta": beta, "phi": phi}) if alpha * mu0 >= beta**2 / 2 else (None, None)
    if p is None:
        return
    text = json.dumps({**p.to_dict(), "phi": prior.rate})
    q, prior2 = params_from_json(text)
    assert (q.rho, q.tau, q.theta) == (p.rho, p.tau, p.theta)
    assert prior2 == prior


def test_params_are_immutable(fig1):
    params, _ = fig1
    with pytest.raises(AttributeError):
        params.alpha = 1.0


def test_gamma_law_mgf_and_domain():
    law = GammaLaw(1.6, 4.0)
    assert law.mean == pytest.approx(0.4)
    assert law.mgf(2.0) == pytest.approx(2**1.6, rel=1e-15)
    assert law.mgf(0.0) == 1.0
    with pytest.raises(OutOfDomain):
        law.mgf(4.0)


def test_jump_record_validation():
    rec = JumpRecord((0.5, 1.0, 2.5))
    assert len(rec) == 3 and rec.count_up_to(1.0) == 2 and rec.count_up_to(0.1) == 0
    for bad in [(1.0, 1.0), (2.0, 1.0), (0.0, 1.0), (-1.0,)]:
        with pytest.raises(NonMonotoneJumps):
            JumpRecord(bad)
    np.testing.assert_array_equal(JumpRecord().as_array(), [])
