import math

import numpy as np
import pytest

from critwave.blowup_ode import (
    ComparisonProblem,
    Side,
    StiffnessError,
    SubsolutionConfig,
    comparison_check,
    dopri,
    integrate_second_order,
    lifespan_upper_bound,
    riccati_blowup_time,
    riccati_h3,
    riccati_numerical_blowup,
    scaled_sides,
    transform_chain_check,
    verify_subsolution,
)

one = lambda t: 1.0
zero = lambda t: 0.0


def random_poly(rng):
    """Positive coefficient: constant plus a random polynomial with nonnegative coefficients."""
    coeffs = np.concatenate([[rng.uniform(0.2, 2.0)], rng.uniform(0, 0.5, rng.integers(0, 3))])
    return lambda t, c=coeffs: float(np.polynomial.polynomial.polyval(t, c))


def random_problem(rng):
    h0 = rng.uniform(0.1, 1.0)
    # nonnegative slopes keep both solutions positive, as the comparison principle assumes
    hs = rng.uniform(0.0, 1.0)
    return ComparisonProblem(
        a=random_poly(rng),
        b=random_poly(rng),
        alpha=rng.uniform(0, 2),
        K_init=h0 + rng.uniform(1e-3, 1.0),
        K_slope_init=hs + rng.choice([0.0, rng.uniform(0, 1.0)]),
        h_init=h0,
        h_slope_init=hs,
        t_end=rng.uniform(0.5, 3.0),
        K_side=rng.choice([Side.EQUALITY, Side.SUPER]),
        h_side=rng.choice([Side.EQUALITY, Side.SUB]),
        margin=rng.uniform(0, 0.3),
    )


# ---------------------------------------------------------------- integrator


def test_damped_linear_closed_form():
    tr = integrate_second_order(one, zero, 1.7, 1.0, 1.0, 5.0)
    assert not tr.blew_up
    assert np.max(np.abs(tr.values - (2 - np.exp(-tr.times)))) < 1e-8
    assert np.max(np.abs(tr.slopes - np.exp(-tr.times))) < 1e-8


def test_dopri_exponential():
    t, y, tb = dopri(lambda t, y: -y, 0.0, [1.0], 3.0, rtol=1e-10, atol=1e-12)
    assert tb is None
    assert abs(y[-1, 0] - math.exp(-3)) < 1e-9
    assert np.all(np.diff(t) > 0)


def test_blowup_self_convergence():
    coarse = integrate_second_order(one, one, 1.0, 1.0, 10.0, 10.0)
    fine = integrate_second_order(one, one, 1.0, 1.0, 10.0, 10.0, rtol=1e-10, atol=1e-12)
    assert coarse.blew_up and fine.blew_up
    assert abs(coarse.blowup_time - fine.blowup_time) / fine.blowup_time < 0.01
    assert np.all(np.isfinite(coarse.values))


def test_blowup_time_of_pure_power():
    # y' = y^2, y(0) = 1 blows up at t = 1; threshold 1e12 is reached at 1 - 1e-12
    _, _, tb = dopri(lambda t, y: y * y, 0.0, [1.0], 2.0, rtol=1e-10, atol=1e-12)
    assert tb == pytest.approx(1.0, abs=1e-6)


def test_super_margin_dominates_equality():
    eq = integrate_second_order(one, one, 1.0, 1.0, 0.5, 0.4, rtol=1e-11, atol=1e-13)
    sup = integrate_second_order(one, one, 1.0, 1.0, 0.5, 0.4, side=Side.SUPER, margin=0.1, rtol=1e-11, atol=1e-13)
    grid = np.linspace(0.05, 0.4, 30)
    assert np.all(np.interp(grid, sup.times, sup.slopes) > np.interp(grid, eq.times, eq.slopes))
    prob = ComparisonProblem(one, one, 1.0, 1.0, 0.5, 1.0, 0.5, 0.4, Side.SUPER, Side.EQUALITY, 0.1)
    assert comparison_check(prob).holds


def test_nonpositive_coefficient_rejected():
    with pytest.raises(ValueError):
        integrate_second_order(lambda t: 1.0 - t, one, 1.0, 1.0, 0.0, 2.0)
    with pytest.raises(ValueError):
        integrate_second_order(one, lambda t: -1.0, 1.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        integrate_second_order(one, one, 1.0, 0.0, 0.0, 1.0)


def test_stiffness_distinct_from_blowup():
    # y' = -1000 sign(y) chatters around zero once y reaches it: the
    # solution stays bounded while the step size collapses
    with pytest.raises(StiffnessError):
        dopri(lambda t, y: -1e3 * np.sign(y), 0.0, [1.0], 1.0, atol=1e-30)


# ---------------------------------------------------------------- comparison


def test_comparison_random_suite():
    rng = np.random.default_rng(20240)
    failures = []
    for _ in range(100):
        prob = random_problem(rng)
        assert prob.admissible()
        v = comparison_check(prob)
        if not v.holds:
            failures.append((prob, v.counterexample))
        assert v.samples > 0
    assert not failures


def test_comparison_degenerate_input():
    prob = ComparisonProblem(one, one, 1.0, 1.0, 0.2, 1.0, 0.2, 1.0)
    assert not prob.admissible()
    v = comparison_check(prob)
    assert not v.admissible
    assert not v.holds
    assert v.counterexample is not None


def test_comparison_larger_b_holds():
    prob = ComparisonProblem(one, one, 1.0, 1.0, 0.3, 0.9, 0.3, 1.0)
    assert comparison_check(prob).holds
    # K with a strictly larger b: emulate through the SUPER side
    bigger = ComparisonProblem(one, one, 1.0, 1.0, 0.3, 0.9, 0.3, 1.0, Side.SUPER, Side.EQUALITY, 0.5)
    assert comparison_check(bigger).holds


def test_comparison_detects_violation():
    # K starts above but with a much smaller slope: not admissible, fails early
    prob = ComparisonProblem(one, one, 0.5, 1.0, -2.0, 0.9, 1.0, 1.0)
    v = comparison_check(prob)
    assert not v.holds and v.counterexample > 0


def test_comparison_runs_to_blowup():
    prob = ComparisonProblem(one, one, 1.0, 2.0, 5.0, 1.0, 1.0, 10.0)
    v = comparison_check(prob)
    assert v.holds and v.blew_up and v.t_reached < 10.0


# ---------------------------------------------------------------- Riccati


def test_riccati_examples():
    assert riccati_blowup_time(SubsolutionConfig(s0=0, delta=0.1, C0=4, p=2)) == pytest.approx(20.0, rel=1e-15)
    assert riccati_blowup_time(SubsolutionConfig(s0=5, delta=1, C0=4, p=3)) == pytest.approx(6.0, rel=1e-15)


def test_riccati_rejects_p_le_one():
    with pytest.raises(ValueError):
        riccati_blowup_time(SubsolutionConfig(p=1.0))


def test_riccati_h3_solves_ode():
    cfg = SubsolutionConfig(s0=0, delta=0.1, C0=4, p=2)
    s = np.linspace(0, 19, 50)
    ds = 1e-6
    slope = (riccati_h3(cfg, s + ds) - riccati_h3(cfg, s - ds)) / (2 * ds)
    assert np.allclose(slope, cfg.delta * riccati_h3(cfg, s) ** 1.5, rtol=1e-6)
    assert riccati_h3(cfg, 0.0) == pytest.approx(1.0)


def _random_configs(count, seed):
    rng = np.random.default_rng(seed)
    return [
        SubsolutionConfig(
            s0=rng.uniform(0, 10), delta=rng.uniform(0.05, 2.0), C0=rng.uniform(0.5, 8.0), p=rng.uniform(2, 4)
        )
        for _ in range(count)
    ]


def test_riccati_numerical_matches_closed_form():
    for cfg in _random_configs(20, 7):
        s1 = riccati_blowup_time(cfg)
        assert abs(riccati_numerical_blowup(cfg) - s1) / s1 < 0.01


def test_riccati_tightened_tolerance():
    for cfg in _random_configs(20, 7):
        s1 = riccati_blowup_time(cfg)
        assert abs(riccati_numerical_blowup(cfg, rtol=1e-11, atol=1e-13) - s1) / s1 < 1e-3


# ---------------------------------------------------------------- subsolution


def test_subsolution_default_admissible():
    rep = verify_subsolution(SubsolutionConfig(), 1.0)
    assert rep.regime_ok
    assert rep.admissible
    assert set(rep.margins) == {"linear_term", "riccati_terms", "second_derivative", "initial_slope", "subsolution"}
    assert rep.margins["linear_term"] == pytest.approx(0.5)
    assert rep.s1 == pytest.approx(64 + 2 / (1e-3 * 0.5), rel=1e-14)


def test_subsolution_small_s0_inadmissible():
    rep = verify_subsolution(SubsolutionConfig(s0=1.0), 1.0)
    # (1/8) * 1 * 1 * (1/4) = 1/32 < 1
    assert rep.margins["linear_term"] == pytest.approx(1 - 32)
    assert not rep.admissible
    assert rep.worst < 0


def test_subsolution_margins_improve_as_eps_decreases():
    cfg = SubsolutionConfig()
    reps = [verify_subsolution(cfg, e) for e in (1.0, 0.7, 0.4, 0.1)]
    for key in reps[0].margins:
        vals = [r.margins[key] for r in reps]
        assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:])), key


def test_subsolution_rejects_eps_above_one():
    with pytest.raises(ValueError):
        verify_subsolution(SubsolutionConfig(), 1.5)


# ---------------------------------------------------------------- lifespan bound


def test_lifespan_examples():
    b = lifespan_upper_bound(1.0, 20.0, 2.0)
    assert b.value == pytest.approx(math.exp(20) - 2, rel=1e-15)
    assert b.value == pytest.approx(4.8517e8, rel=1e-4)
    assert not b.overflow
    for s1 in (0.5, 3.0, 11.0):
        assert lifespan_upper_bound(1.0, s1, 3.7).value == pytest.approx(math.exp(s1) - 2)
    # p = 2: the exponent is eps^-2
    assert lifespan_upper_bound(0.5, 1.0, 2.0).value == pytest.approx(math.exp(4) - 2)


def test_lifespan_monotone_decreasing():
    eps = np.linspace(0.3, 1.0, 40)
    vals = [lifespan_upper_bound(e, 2.0, 2.0).value for e in eps]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_lifespan_overflow_flag():
    b = lifespan_upper_bound(0.01, 20.0, 2.0)
    assert b.overflow and b.value == math.inf


@pytest.mark.parametrize("eps,s1", [(0.0, 1.0), (1.2, 1.0), (0.5, 0.0)])
def test_lifespan_errors(eps, s1):
    with pytest.raises(ValueError):
        lifespan_upper_bound(eps, s1, 2.0)


# ---------------------------------------------------------------- transformation chain


def test_chain_log_function():
    rep = transform_chain_check(lambda t: np.log(2 + t), np.linspace(0, 20, 30), step=1e-3)
    assert rep["chain_first"] < 1e-7 and rep["chain_second"] < 1e-5


def test_chain_square_function():
    rep = transform_chain_check(lambda t: (2 + t) ** 2, np.linspace(0, 5, 30))
    assert rep["chain_first"] < 1e-7 and rep["chain_second"] < 1e-5
    assert rep["scaling_lhs"] < 1e-4 and rep["scaling_rhs"] < 1e-10
    assert rep["inequality_preserved"]


def test_scaling_direct_substitution():
    # H0 = tau^2: mapped sides equal eps^-p times the unscaled ones
    p, eps, K0 = 2.0, 0.5, 1.0
    lam = eps ** (-p * (p - 1))
    s = np.linspace(0.1, 3.0, 25)
    lhs, rhs = scaled_sides(lambda x: x * x, lambda x: 2 * x, lambda x: 2 + 0 * x, s, p, eps, K0)
    tau = lam * s
    lhs0 = 2 + 4 * tau
    rhs0 = K0 * tau ** (1 - p) * tau ** (2 * p)
    assert np.max(np.abs(lhs - eps**-p * lhs0) / np.abs(lhs)) < 1e-10
    assert np.max(np.abs(rhs - eps**-p * rhs0) / np.abs(rhs)) < 1e-10
