import math

import pytest
from hypothesis import given, strategies as st

from critwave.exponents import (
    critical_exponent,
    lp_bound_exponent,
    make_params,
    quadratic_residual,
    verify_critical_identities,
)


def test_goldens():
    assert critical_exponent(3) == pytest.approx(1 + math.sqrt(2), rel=1e-12)
    assert critical_exponent(4) == pytest.approx(2.0, rel=1e-12)


def test_n2_root_by_substitution():
    p = critical_exponent(2)
    assert p == pytest.approx(3.561552813, abs=1e-9)
    assert abs(p * p - 3 * p - 2) < 1e-12 * p * p


@pytest.mark.parametrize("n", range(2, 11))
def test_quadratic_residual(n):
    assert abs(quadratic_residual(n, critical_exponent(n))) < 1e-12


@given(st.integers(min_value=2, max_value=64))
def test_root_positive_and_residual_small(n):
    p = critical_exponent(n)
    assert p > 1
    assert abs(quadratic_residual(n, p)) < 1e-12


def test_strictly_decreasing():
    ps = [critical_exponent(n) for n in range(2, 11)]
    assert all(a > b for a, b in zip(ps, ps[1:]))


@pytest.mark.parametrize("n", range(2, 11))
def test_two_forms_of_q(n):
    p = critical_exponent(n)
    assert abs(((n - 1) / 2 - 1 / p) - (n - 1 - 2 / (p - 1))) < 1e-10


@pytest.mark.parametrize("n", [0, 1, -3, 65])
def test_rejects_bad_dimension(n):
    with pytest.raises(ValueError):
        critical_exponent(n)


def test_make_params_examples():
    prm = make_params(4, 2)
    assert prm.q == 1 and prm.p_conj == 2
    prm = make_params(3, 1 + math.sqrt(2))
    assert prm.q == pytest.approx(2 - math.sqrt(2), abs=1e-12)
    assert prm.q == pytest.approx(3 - 1 - 2 / (prm.p - 1), abs=1e-12)
    prm = make_params(2, critical_exponent(2))
    assert prm.q == pytest.approx(0.219224, abs=1e-6)
    assert 1 / prm.p + 1 / prm.p_conj == pytest.approx(1, abs=1e-12)


@pytest.mark.parametrize("p", [1.0, 0.5, -2.0])
def test_make_params_rejects_small_p(p):
    with pytest.raises(ValueError):
        make_params(4, p)


def test_identities_exact_for_n4():
    report = verify_critical_identities(make_params(4, 2))
    assert set(report) >= {
        "q_consistency",
        "space_time_power",
        "boundary_layer_power",
        "weighted_volume_power",
        "lower_bound_power",
    }
    assert all(v == 0 for v in report.values())


def test_identities_n3():
    report = verify_critical_identities(make_params(3, critical_exponent(3)))
    assert max(abs(v) for v in report.values()) < 1e-12


def test_off_critical_is_flagged():
    report = verify_critical_identities(make_params(4, 2.5))
    # q = 3/2 - 1/2.5 = 1.1; 1 - 1.1 + 3 - 3 * 2.5 / 2 = -0.85
    assert report["lower_bound_power"] == pytest.approx(-0.85, abs=1e-12)
    assert max(abs(v) for v in report.values()) > 0.1


def test_lp_bound_exponent():
    assert lp_bound_exponent(4, 2) == 0
    assert lp_bound_exponent(3, 1 + math.sqrt(2)) == pytest.approx(1 - math.sqrt(2))
