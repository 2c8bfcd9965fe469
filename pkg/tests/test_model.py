import json
import math

import numpy as np
import pytest

from longrisk import (
    CashFlowSpec,
    DiscountCurve,
    GrowthSpec,
    apply_pricing_operator,
    bond_price,
    build_model,
    fixture2,
    growth_indexed_model,
    load_curve,
    load_model,
    one_state,
    random_model,
)
from longrisk.errors import (
    CurveTooShort,
    DimensionMismatch,
    NonPositiveCashFlow,
    NonPositiveGrowth,
    NonPositivePrice,
    NonPositiveSDF,
    NonStochasticRow,
    ParseError,
    StateOutOfRange,
    ValidationError,
)
from longrisk.model import path_sdf, save_curve, save_model

from oracles import FIX2_P, bond_by_enumeration, fix2_state_price


def test_one_state_state_price():
    m = build_model([[1.0]], [[math.exp(-0.05)]])
    assert m.n_states == 1
    assert m.state_price[0, 0] == pytest.approx(0.951229424500714, abs=1e-15)


def test_fixture2_one_period_bonds():
    m = fixture2()
    # row sums of A by hand: 0.9 e^-0.01 + 0.1 e^-0.01 and 0.2 e^-0.05 + 0.8 e^-0.05
    expected = [0.9 * math.exp(-0.01) + 0.1 * math.exp(-0.01), 0.2 * math.exp(-0.05) + 0.8 * math.exp(-0.05)]
    np.testing.assert_allclose(m.state_price.sum(axis=1), expected, rtol=1e-15)
    np.testing.assert_allclose(m.state_price, fix2_state_price(), rtol=1e-15)


def test_short_row_rejected():
    with pytest.raises(NonStochasticRow):
        build_model([[0.5, 0.4]], [[1.0, 1.0]])


def test_row_sum_tolerance_boundary():
    build_model([[0.5, 0.5 + 5e-13], [0.5, 0.5]], np.ones((2, 2)))
    with pytest.raises(NonStochasticRow):
        build_model([[0.5, 0.5 + 1e-11], [0.5, 0.5]], np.ones((2, 2)))


def test_negative_probability_rejected():
    with pytest.raises(ValidationError):
        build_model([[1.1, -0.1], [0.5, 0.5]], np.ones((2, 2)))


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        build_model([[1.0, 0.0], [0.0, 1.0]], [[1.0]])


def test_sdf_nonpositive_on_reachable():
    with pytest.raises(NonPositiveSDF):
        build_model([[0.5, 0.5], [0.5, 0.5]], [[1.0, 0.0], [1.0, 1.0]])


def test_sdf_zero_allowed_off_support():
    m = build_model([[1.0, 0.0], [0.5, 0.5]], [[0.9, 0.0], [0.9, 0.9]])
    assert m.state_price[0, 1] == 0.0


def test_reducible_accepted_but_flagged():
    m = build_model([[1.0, 0.0], [0.0, 1.0]], np.full((2, 2), 0.99))
    assert not m.irreducible


def test_model_is_immutable():
    m = fixture2()
    with pytest.raises(ValueError):
        m.transition[0, 0] = 0.5


def test_pricing_operator_identity_at_zero():
    m = random_model(4, seed=1)
    f = np.array([0.3, -1.0, 2.0, 5.0])
    np.testing.assert_array_equal(apply_pricing_operator(m, f, 0), f)


def test_pricing_operator_one_period_fixture2():
    np.testing.assert_allclose(apply_pricing_operator(fixture2(), [1, 1], 1), np.exp([-0.01, -0.05]), rtol=1e-15)


def test_pricing_operator_scalar_power():
    assert apply_pricing_operator(one_state(), [1.0], 10)[0] == pytest.approx(math.exp(-0.5), rel=1e-14)


def test_pricing_operator_rejects_bad_input():
    with pytest.raises(ValidationError):
        apply_pricing_operator(fixture2(), [1.0, np.nan], 2)
    with pytest.raises(ValidationError):
        apply_pricing_operator(fixture2(), [1.0], 2)
    with pytest.raises(ValidationError):
        apply_pricing_operator(fixture2(), [1.0, 1.0], -1)


def test_bond_price_one_state():
    assert bond_price(one_state(), 7, 0) == pytest.approx(math.exp(-0.35), rel=1e-14)


def test_bond_price_by_path_enumeration():
    m = fixture2()
    P, s = FIX2_P.tolist(), m.sdf.tolist()
    for t in (2, 3, 5):
        for x in (0, 1):
            assert bond_price(m, t, x) == pytest.approx(bond_by_enumeration(P, s, t, x), rel=1e-14)


def test_bond_price_at_zero_and_range():
    m = random_model(3, seed=4)
    assert all(bond_price(m, 0, x) == 1.0 for x in range(3))
    with pytest.raises(StateOutOfRange):
        bond_price(m, 1, 3)


def test_bond_price_long_horizon_positive():
    m = fixture2()
    assert 0.0 < bond_price(m, 20000, 0) < 1e-100


def test_growth_constant_shift():
    g = GrowthSpec(np.full((2, 2), math.exp(0.02)))
    gm = growth_indexed_model(fixture2(), g)
    np.testing.assert_allclose(gm.sdf, [[math.exp(0.01)] * 2, [math.exp(-0.03)] * 2], rtol=1e-15)
    np.testing.assert_array_equal(gm.transition, fixture2().transition)


def test_growth_identity():
    m = fixture2()
    gm = growth_indexed_model(m, GrowthSpec(np.ones((2, 2))))
    np.testing.assert_array_equal(gm.sdf, m.sdf)


def test_growth_state_dependent():
    m = fixture2()
    g = np.exp(0.01 + 0.01 * np.array([[0.0, 1.0], [0.0, 1.0]]))
    gm = growth_indexed_model(m, GrowthSpec(g))
    expected = [[math.exp(-0.01 + 0.01), math.exp(-0.01 + 0.02)], [math.exp(-0.05 + 0.01), math.exp(-0.05 + 0.02)]]
    np.testing.assert_allclose(gm.sdf, expected, rtol=1e-15)


def test_growth_errors():
    with pytest.raises(DimensionMismatch):
        growth_indexed_model(fixture2(), GrowthSpec(np.ones((3, 3))))
    with pytest.raises(NonPositiveGrowth):
        growth_indexed_model(fixture2(), GrowthSpec([[1.0, -1.0], [1.0, 1.0]]))


def test_cash_flow_spec():
    c = CashFlowSpec.from_function(lambda x: 1.0 + x, 3)
    np.testing.assert_array_equal(c.values, [1.0, 2.0, 3.0])
    assert c.sup_norm == 3.0
    assert c(2) == 3.0
    with pytest.raises(NonPositiveCashFlow):
        CashFlowSpec([1.0, 0.0])
    with pytest.raises(NonPositiveCashFlow):
        CashFlowSpec([1.0, np.inf])


def test_discount_curve_validation():
    DiscountCurve([1, 2, 3, 4], [0.9, 0.8, 0.7, 0.6])
    with pytest.raises(CurveTooShort):
        DiscountCurve([1, 2, 3], [0.9, 0.8, 0.7])
    with pytest.raises(ValidationError):
        DiscountCurve([1, 3, 2, 4], [0.9, 0.8, 0.7, 0.6])
    with pytest.raises(NonPositivePrice):
        DiscountCurve([1, 2, 3, 4], [0.9, 0.8, 0.0, 0.6])
    with pytest.raises(ValidationError):
        DiscountCurve([1, 2, 3, 4], [0.9, 0.95, 0.7, 0.6])


def test_path_sdf_multiplicative():
    m = random_model(4, seed=9)
    path = [0, 1, 1, 3, 2, 2, 0]
    S = path_sdf(m, path)
    assert S[0] == 1.0
    t = 3
    tail = path_sdf(m, path[t:])
    np.testing.assert_allclose(S[t:], S[t] * tail, rtol=1e-14)
    brute = np.prod([m.sdf[a, b] for a, b in zip(path[:-1], path[1:])])
    assert S[-1] == pytest.approx(brute, rel=1e-14)


def test_model_file_roundtrip(tmp_path):
    m = random_model(3, seed=2)
    g = GrowthSpec(np.full((3, 3), 1.01))
    p = tmp_path / "m.json"
    save_model(m, p, g)
    d = json.loads(p.read_text())
    assert set(d) >= {"n_states", "transition", "sdf", "growth"}
    m2, g2 = load_model(p)
    np.testing.assert_array_equal(m2.transition, m.transition)
    np.testing.assert_array_equal(m2.sdf, m.sdf)
    np.testing.assert_array_equal(g2.growth, g.growth)


def test_model_file_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ParseError):
        load_model(p)
    p.write_text(json.dumps({"n_states": 2, "transition": [[1.0]]}))
    with pytest.raises(ParseError):
        load_model(p)
    p.write_text(json.dumps({"n_states": 3, "transition": [[1.0, 0.0], [0.0, 1.0]], "sdf": [[1, 1], [1, 1]]}))
    with pytest.raises(DimensionMismatch):
        load_model(p)
    with pytest.raises(ParseError):
        load_model(tmp_path / "missing.json")


def test_curve_file_roundtrip(tmp_path):
    c = DiscountCurve.from_function(lambda t: np.exp(-0.03 * t), np.arange(1.0, 11.0))
    p = tmp_path / "c.csv"
    save_curve(c, p)
    assert p.read_text().splitlines()[0] == "tenor,price"
    c2 = load_curve(p)
    np.testing.assert_array_equal(c2.prices, c.prices)


def test_curve_file_errors(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("maturity,price\n1,0.9\n")
    with pytest.raises(ParseError):
        load_curve(p)
    p.write_text("tenor,price\n1,abc\n")
    with pytest.raises(ParseError):
        load_curve(p)
