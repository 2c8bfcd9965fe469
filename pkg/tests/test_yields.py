import math

import numpy as np
import pytest

from longrisk import CashFlowSpec, DiscountCurve, GrowthSpec, fixture2, one_state, principal_eigen, random_model
from longrisk.errors import (
    CurveTooShort,
    HorizonOrder,
    MomentBoundsViolation,
    NonPositiveCashFlow,
    NotPowerDecay,
    ReducibleGrowthChain,
    ValidationError,
)
from longrisk.model import build_model
from longrisk.yields import (
    exp_yield,
    forward_rate,
    growth_limits,
    growth_yield,
    karamata_fit,
    log_power_table,
    power_yield,
    power_yield_sweep,
    yield_sweep,
    zero_coupon_rate,
)

from oracles import fix2_state_price

POWER_TENORS = np.logspace(0, 4, 200)


def power_curve():
    return DiscountCurve.from_function(lambda t: (1.0 + t) ** -2.0, POWER_TENORS)


def growth_fixture():
    return GrowthSpec(np.exp(0.01 + 0.01 * np.tile([0.0, 1.0], (2, 1))))


# -- Karamata -------------------------------------------------------------------

def test_karamata_exponential():
    c = DiscountCurve.from_function(lambda t: np.exp(-0.03 * t), np.arange(1.0, 201.0))
    fit = karamata_fit(c)
    assert fit.lambda_ == pytest.approx(0.03, abs=1e-9)
    np.testing.assert_allclose(fit.L_values, 1.0, atol=1e-9)
    assert fit.decay_class == "Exponential"
    assert fit.gamma is None


def test_karamata_power():
    fit = karamata_fit(power_curve(), t_probe=5.0)
    assert abs(fit.lambda_) <= 1e-4
    assert fit.decay_class == "Power"
    assert fit.gamma == pytest.approx(2.0, abs=0.02)
    assert {"lambda", "gamma", "L_values", "regularity_score"} <= set(fit.to_dict())


def test_karamata_slowly_varying_correction():
    tenors = np.arange(1.0, 201.0)
    c = DiscountCurve.from_function(lambda t: np.exp(-0.03 * t) * (1.0 + 1.0 / (1.0 + t)), tenors)
    fit = karamata_fit(c)
    assert fit.lambda_ == pytest.approx(0.03, abs=1e-3)
    assert fit.regularity_score >= 0.99
    # oracle: L(e^T) = 1 + 1/(1+T) when lambda is exact; the tail must flatten
    tail = fit.L_values[-20:]
    assert np.ptp(tail) < 1e-3
    assert fit.decay_class == "Exponential"


def test_karamata_roundtrip():
    c = DiscountCurve.from_function(lambda t: np.exp(-0.02 * t) * (2.0 + np.sin(np.log(t))) / 3.0, np.arange(5.0, 501.0))
    fit = karamata_fit(c, 10.0)
    rebuilt = DiscountCurve(c.tenors, np.exp(-fit.lambda_ * c.tenors) * fit.L_values)
    assert karamata_fit(rebuilt, 10.0).lambda_ == pytest.approx(fit.lambda_, abs=1e-9)


def test_karamata_guards():
    short = DiscountCurve.from_function(lambda t: np.exp(-0.03 * t), np.arange(1.0, 7.0))
    with pytest.raises(CurveTooShort):
        karamata_fit(short)
    narrow = DiscountCurve.from_function(lambda t: np.exp(-0.03 * t), np.linspace(10.0, 50.0, 20))
    with pytest.raises(CurveTooShort):
        karamata_fit(narrow)
    c = DiscountCurve.from_function(lambda t: np.exp(-0.03 * t), np.arange(1.0, 201.0))
    with pytest.raises(ValidationError):
        karamata_fit(c, t_probe=150.0)


# -- power yields -------------------------------------------------------------------

def test_power_yield_unit_cash_flow():
    v = power_yield(power_curve(), 0.0, 1e4, t_probe=5.0)
    # analytic substitution: -log P / log T = 2 log(1 + T) / log T
    assert v == pytest.approx(2.0 * math.log1p(1e4) / math.log(1e4), rel=1e-10)
    assert abs(v - 2.0) <= 0.05


def test_power_yield_bounded_moments():
    curve = power_curve()
    fit = karamata_fit(curve, 5.0)
    T = 1e4
    m1 = 1.5 + 0.5 * math.sin(T)
    m2 = 1.0 + 0.5 * math.cos(T)
    v = power_yield(curve, 0.0, T, m1=m1, m2=m2, moment_bounds=(0.5, 2.0), fit=fit)
    expected = (math.log(m1) - math.log(m2) + 2.0 * math.log1p(T)) / math.log(T)
    assert v == pytest.approx(expected, rel=1e-10)
    # moments in [lo, hi] shift the yield by at most log(hi / lo) / log T
    assert abs(v - 2.0) <= math.log(4.0) / math.log(T) + 1e-4
    near = power_yield(curve, 0.0, T, m1=1.2, m2=1.1, moment_bounds=(0.5, 2.0), fit=fit)
    assert abs(near - 2.0) <= 0.1


def test_power_yield_guards():
    expo = DiscountCurve.from_function(lambda t: np.exp(-0.03 * t), np.arange(1.0, 201.0))
    with pytest.raises(NotPowerDecay):
        power_yield(expo, 0.0, 150.0)
    curve = power_curve()
    with pytest.raises(MomentBoundsViolation):
        power_yield(curve, 0.0, 1e3, m1=3.0, m2=1.0, moment_bounds=(0.5, 2.0), t_probe=5.0)
    with pytest.raises(MomentBoundsViolation):
        power_yield(curve, 0.0, 1e3, m1=1.5, t_probe=5.0)
    with pytest.raises(ValidationError):
        power_yield(curve, 0.0, 2e4, t_probe=5.0)


def test_power_yield_sweep_converges():
    # a constant prefactor leaves a log(3) / log T bias that the sweep extrapolates away
    curve = DiscountCurve.from_function(lambda t: 3.0 * (1.0 + t) ** -2.0, POWER_TENORS)
    rep = power_yield_sweep(curve, 0.0, [100, 1000, 10000], t_probe=5.0)
    gaps = np.abs(rep.varrho - 2.0)
    assert np.all(np.diff(gaps) < 0)
    assert gaps[-1] > 0.1
    # what remains is the 2 log(1 + 1/T) / log T term, largest at T = 100
    assert abs(rep.limit_estimate - 2.0) <= 1e-2 < gaps[-1]


# -- model-mode yields --------------------------------------------------------------

def test_log_power_table_matches_matrix_power():
    A = fix2_state_price()
    tab = log_power_table(A, np.array([1.0, 2.0]), 30)
    for tau in (0, 1, 7, 30):
        np.testing.assert_allclose(np.exp(tab[tau]), np.linalg.matrix_power(A, tau) @ [1.0, 2.0], rtol=1e-13)


def test_zero_coupon_one_state():
    assert zero_coupon_rate(one_state(), None, 0, 40, 0) == pytest.approx(0.05, abs=1e-15)


def test_zero_coupon_fixture2_approaches_lambda(fix2):
    m, sol = fix2
    gaps = [abs(zero_coupon_rate(m, sol, 0, T, 0) - sol.lambda_) for T in (10, 20, 40, 80)]
    assert gaps[-1] <= gaps[0]
    assert np.all(np.diff(gaps) < 0)


def test_zero_coupon_one_period_short_rate(fix2):
    m, sol = fix2
    for x, r in enumerate((0.01, 0.05)):
        assert zero_coupon_rate(m, sol, 4, 5, x) == pytest.approx(r, abs=1e-15)
    with pytest.raises(HorizonOrder):
        zero_coupon_rate(m, sol, 5, 5, 0)


def test_zero_coupon_error_is_order_one_over_tau(fix2):
    """tau (rate - lambda) -> -log(pi(x) J): the yield gap decays like 1/tau, not exponentially."""
    m, sol = fix2
    from longrisk import certify_ergodicity

    cert = certify_ergodicity(m, sol)
    for x in range(2):
        tau = 400
        scaled = tau * (zero_coupon_rate(m, sol, 0, tau, x) - sol.lambda_)
        assert scaled == pytest.approx(-math.log(sol.pi[x] * cert.J), rel=1e-6)


def test_forward_rate_constancy(fix2):
    """Forward rates, unlike zero-coupon rates, reach lambda exponentially fast."""
    m, sol = fix2
    rates = [forward_rate(m, 500 - t, x) for x in range(2) for t in (0, 1, 5)]
    assert max(rates) - min(rates) <= 1e-6
    assert max(abs(r - sol.lambda_) for r in rates) <= 1e-6


def test_exp_yield_one_state(one):
    m, sol = one
    for T in (1, 10, 100):
        rL, rP = exp_yield(m, sol, CashFlowSpec([1.0]), 0, T, 0)
        assert rL == pytest.approx(0.05, abs=1e-14)
        assert rP == pytest.approx(0.05, abs=1e-14)


def test_exp_yield_fixture2_matches_eigen_formula(fix2):
    m, sol = fix2
    C = np.array([1.0, 2.0])
    Q = np.asarray(sol.eigen_transition)
    for tau in (5, 10, 20, 40, 80):
        Qt = np.linalg.matrix_power(Q, tau)
        oracle_L = sol.lambda_ + math.log((Qt @ C)[0] / (sol.pi[0] * (Qt @ (C / sol.pi))[0])) / tau
        Pt = np.linalg.matrix_power(m.transition, tau)
        At = np.linalg.matrix_power(fix2_state_price(), tau)
        oracle_P = math.log((Pt @ C)[0] / (At @ C)[0]) / tau
        rL, rP = exp_yield(m, sol, C, 0, tau, 0)
        assert rL == pytest.approx(oracle_L, abs=1e-12)
        assert rP == pytest.approx(oracle_P, abs=1e-12)


def test_exp_yield_gap_order_one_over_tau(fix2):
    m, sol = fix2
    taus = np.array([5, 10, 20, 40, 80])
    gaps = np.array([abs(exp_yield(m, sol, [1.0, 2.0], 0, int(T), 0)[0] - sol.lambda_) for T in taus])
    K = np.max(gaps * taus)
    assert np.all(gaps <= K / taus + 1e-15)
    # regression of gap on 1/tau is near perfect
    design = np.column_stack([1.0 / taus, np.ones_like(taus, dtype=float)])
    coef, res, *_ = np.linalg.lstsq(design, gaps, rcond=None)
    r2 = 1.0 - res[0] / np.sum((gaps - gaps.mean()) ** 2)
    assert r2 >= 0.99


def test_eigen_relation_exact(fix2):
    m, sol = fix2
    tab = log_power_table(m.state_price, sol.pi, 100)
    target = np.log(sol.pi)[None, :] - sol.lambda_ * np.arange(101)[:, None]
    np.testing.assert_allclose(tab, target, atol=1e-10)


def test_L_mean_of_inverse_pi(fix2):
    """log E^L[1/pi_T] / tau tends to zero like 1/tau."""
    m, sol = fix2
    Q = np.asarray(sol.eigen_transition)
    vals = []
    for tau in (10, 20, 40, 80, 160):
        e = (np.linalg.matrix_power(Q, tau) @ (1.0 / sol.pi))[0]
        vals.append(abs(math.log(e)) / tau)
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] * 160 == pytest.approx(vals[-2] * 80, rel=1e-6)


def test_exp_yield_errors(fix2):
    m, sol = fix2
    with pytest.raises(HorizonOrder):
        exp_yield(m, sol, [1.0, 2.0], 3, 3, 0)
    with pytest.raises(NonPositiveCashFlow):
        exp_yield(m, sol, [1.0, -2.0], 0, 3, 0)


def test_yield_sweep_report(fix2):
    m, sol = fix2
    rep = yield_sweep(m, sol, [1.0, 2.0], 0, [25, 50, 100, 200])
    assert rep.limit_target == sol.lambda_
    assert rep.gap_at_max == pytest.approx(abs(rep.rho_L[-1] - sol.lambda_))
    # the 1/tau extrapolation removes the leading bias
    assert abs(rep.limit_estimate - sol.lambda_) < rep.gap_at_max / 10
    assert len(list(rep.rows())) == 4


# -- growth -------------------------------------------------------------------------

def test_growth_constant_cancels(one):
    m, sol = one
    g = GrowthSpec([[math.exp(0.02)]])
    for T in (5, 50, 500):
        assert growth_yield(m, g, 0, T, 0, "L", sol) == pytest.approx(0.05, abs=1e-14)


def test_growth_yield_L_oracle(fix2):
    m, sol = fix2
    g = growth_fixture()
    AG = fix2_state_price() * g.growth
    gaps = []
    for tau in (10, 20, 40, 80):
        At = np.linalg.matrix_power(AG, tau)
        oracle = sol.lambda_ + math.log((At @ sol.pi)[0] / sol.pi[0] / (At @ np.ones(2))[0]) / tau
        val = growth_yield(m, g, 0, tau, 0, "L", sol)
        assert val == pytest.approx(oracle, abs=1e-12)
        gaps.append(abs(val - sol.lambda_))
    assert gaps[-1] < gaps[0]


def test_growth_wedge_under_P(fix2):
    m, sol = fix2
    g = growth_fixture()
    AG = fix2_state_price() * g.growth
    lam_G = -math.log(max(abs(np.linalg.eigvals(AG))))
    limits = growth_limits(m, g)
    assert limits["L"] == pytest.approx(sol.lambda_, abs=1e-12)
    assert limits["P"] == pytest.approx(lam_G, abs=1e-12)
    assert abs(limits["P"] - sol.lambda_) > 1e-2
    assert growth_yield(m, g, 0, 400, 0, "P", sol) == pytest.approx(lam_G, abs=1e-3)
    PG = m.transition * g.growth
    expected_limit = lam_G + math.log(max(abs(np.linalg.eigvals(PG))))
    assert limits["P-expected"] == pytest.approx(expected_limit, abs=1e-12)
    assert growth_yield(m, g, 0, 2000, 0, "P-expected", sol) == pytest.approx(expected_limit, abs=1e-3)


def test_growth_reducible():
    m = build_model([[1.0, 0.0], [0.5, 0.5]], np.full((2, 2), 0.97))
    with pytest.raises(ReducibleGrowthChain):
        growth_yield(m, GrowthSpec(np.ones((2, 2))), 0, 10, 0, "P")
    with pytest.raises(ValidationError):
        growth_yield(fixture2(), growth_fixture(), 0, 10, 0, "Q")


def test_long_rate_limit_independent_of_state_random():
    m = random_model(6, seed=61)
    sol = principal_eigen(m)
    rates = [forward_rate(m, 400, x) for x in range(6)]
    assert np.ptp(rates) <= 1e-9
    assert rates[0] == pytest.approx(sol.lambda_, abs=1e-9)
