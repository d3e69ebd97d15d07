import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpfi.model import (
    AffinePath,
    MarketError,
    MarketSpec,
    StrategyProfile,
    TimeGrid,
    UncertaintyModel,
    check_assumptions,
    discounted_revenue,
    eval_observed_demand,
    feasibility_check,
    grad_xi_magnitude,
    make_seller,
    robust_demand_bound,
)

from .conftest import monopoly_market, two_seller_market


@pytest.fixture(scope="module")
def market():
    return two_seller_market(n=10)


# ---------------------------------------------------------------- grid and paths

def test_grid_nodes_and_weights():
    g = TimeGrid(1.0, 10.0, 10)
    assert g.nodes[0] == 1.0 and g.nodes[-1] == 10.0
    assert np.allclose(np.diff(g.nodes), 1.0)
    assert g.weights[0] == g.weights[-1] == 0.5
    assert np.all(g.weights[1:-1] == 1.0)
    assert math.isclose(g.weights.sum(), 9.0)


@pytest.mark.parametrize("args", [(1.0, 1.0, 5), (2.0, 1.0, 5), (0.0, 1.0, 1), (0.0, float("inf"), 3)])
def test_grid_rejects_bad_input(args):
    with pytest.raises(MarketError):
        TimeGrid(*args)


@given(st.floats(-50, 50), st.floats(0.1, 50), st.integers(2, 400))
def test_weights_sum_to_horizon(t0, length, n):
    g = TimeGrid(t0, t0 + length, n)
    assert math.isclose(g.weights.sum(), length, rel_tol=1e-12)


def test_affine_path_exact():
    p = AffinePath(180, -4)
    assert p.value(1) == 176
    assert np.array_equal(p.value(np.arange(1, 11)), 180 - 4 * np.arange(1, 11))


# ---------------------------------------------------------------- validation

def test_seller_validation():
    g = TimeGrid(1, 10, 5)
    with pytest.raises(MarketError):
        make_seller(1000, 50, {}, -1.0, grid=g)
    with pytest.raises(MarketError):
        make_seller(1000, 50, {}, 100.0, pi_min=5, pi_max=5, grid=g)
    with pytest.raises(MarketError):
        make_seller(1000, 50, {}, 100.0, d_min=0.0, grid=g)


def test_market_rejects_bad_gamma_reference():
    g = TimeGrid(1, 10, 5)
    s = make_seller(1000, 50, {3: 1.0}, 100.0, grid=g)
    with pytest.raises(MarketError):
        MarketSpec(g, 0.0, [s], UncertaintyModel(3.0, 0.8))


def test_unknown_seller_raises(market):
    with pytest.raises(KeyError):
        eval_observed_demand(market, 5, (10, 10), 3.1, 1.0)


def test_non_finite_input_raises(market):
    with pytest.raises(ValueError):
        eval_observed_demand(market, 0, (10, float("nan")), 3.1, 1.0)
    with pytest.raises(ValueError):
        eval_observed_demand(market, 0, (10, 10), float("inf"), 1.0)


# ---------------------------------------------------------------- demand functions

def test_observed_demand_example(market):
    assert math.isclose(eval_observed_demand(market, 0, (10, 10), 3.1, 1.0), 4898.0)


def test_observed_demand_zero_xi(market):
    assert eval_observed_demand(market, 0, (12.3, 7.0), 0.0, 4.0) == 0.0


def test_observed_demand_zero_at_choke(market):
    t, p2 = 2.0, 10.0
    choke = (3000 + (36 - 2 * t) * p2) / (180 - 4 * t)
    assert abs(eval_observed_demand(market, 0, (choke, p2), 3.7, t)) < 1e-9


def test_grad_magnitude_example(market):
    assert math.isclose(grad_xi_magnitude(market, 0, (10, 10), 1.0), 1580.0)


def test_grad_magnitude_increases_past_choke(market):
    choke = (3000 + 34 * 10) / 176
    vals = [grad_xi_magnitude(market, 0, (choke + d, 10), 1.0) for d in (0.0, 0.5, 1.0, 2.0)]
    assert vals[0] < 1e-9
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_robust_bound_example(market):
    assert math.isclose(robust_demand_bound(market, 0, (10, 10), 1.0), 3634.0)


def test_robust_bound_tau_zero_is_nominal():
    m = two_seller_market(n=10, tau=0.0)
    for t in (1.0, 4.5, 10.0):
        assert math.isclose(robust_demand_bound(m, 1, (14, 9), t), eval_observed_demand(m, 1, (14, 9), 3 + 0.1 * t, t))


def test_robust_bound_zero_at_choke(market):
    choke = (3000 + 34 * 10) / 176
    assert abs(robust_demand_bound(market, 0, (choke, 10), 1.0)) < 1e-9


# ---------------------------------------------------------------- revenue

def test_revenue_constant_integrand(market):
    prof = StrategyProfile(np.full((2, 10), 2.0), np.full((2, 10), 3.0))
    assert np.allclose(discounted_revenue(market, prof), 54.0)


def test_revenue_zero_plans(market):
    prof = StrategyProfile(np.full((2, 10), 2.0), np.zeros((2, 10)))
    assert np.all(discounted_revenue(market, prof) == 0)


def test_revenue_discounted_closed_form():
    g = TimeGrid(0.0, 1.0, 2001)
    m = MarketSpec(g, 1.0, [make_seller(10, 1, {}, 1.0, grid=g)], UncertaintyModel(1.0, 0.0))
    prof = StrategyProfile(np.ones((1, g.n)), np.ones((1, g.n)))
    assert abs(discounted_revenue(m, prof)[0] - (1 - math.exp(-1))) < 1e-6


def test_revenue_length_mismatch(market):
    with pytest.raises(ValueError):
        discounted_revenue(market, StrategyProfile(np.ones((2, 9)), np.ones((2, 9))))


@given(st.floats(0.1, 10), st.floats(0.1, 10))
def test_revenue_bilinear(kp, kd):
    m = two_seller_market(n=10)
    rng = np.random.default_rng(1)
    p, d = rng.uniform(0, 20, (2, 10)), rng.uniform(0, 500, (2, 10))
    base = discounted_revenue(m, StrategyProfile(p, d))
    assert np.allclose(discounted_revenue(m, StrategyProfile(kp * p, d)), kp * base)
    assert np.allclose(discounted_revenue(m, StrategyProfile(p, kd * d)), kd * base)


@given(st.floats(-100, 100), st.floats(-10, 10))
def test_trapezoid_exact_for_affine(a, b):
    g = TimeGrid(1.0, 10.0, 17)
    exact = a * 9 + 0.5 * b * (100 - 1)
    assert math.isclose(g.integrate(a + b * g.nodes), exact, rel_tol=1e-12, abs_tol=1e-9)


# ---------------------------------------------------------------- assumptions

def test_assumptions_pass_for_reference_market(market):
    rep = check_assumptions(market)
    assert rep.all_passed, rep.to_dict()


def test_negative_beta_fails_a4():
    g = TimeGrid(1, 10, 10)
    m = MarketSpec(g, 0.0, [make_seller(1000, -1, {}, 100, pi_max=50, grid=g)], UncertaintyModel(3.0, 0.8))
    rep = check_assumptions(m)
    assert not rep["A4"].passed
    assert rep["A4"].witness["t"] == 1.0


def test_large_tau_fails_positivity():
    rep = check_assumptions(two_seller_market(n=10, tau=5.0))
    assert not rep["xi_positive"].passed
    assert rep["xi_positive"].witness["value"] < 0


def test_negative_gamma_reported():
    rep = check_assumptions(two_seller_market(n=10, gammas=((-1, 0), (36, -2))))
    assert not rep["gamma_nonnegative"].passed


# ---------------------------------------------------------------- feasibility

def _flat_profile(m, price=0.0):
    n = m.grid.n
    plans = np.array([[sp.inventory_K / m.grid.length] * n for sp in m.sellers])
    return StrategyProfile(np.full_like(plans, price), plans)


def test_feasible_profile_has_no_violations():
    m = two_seller_market(n=10)
    assert feasibility_check(m, _flat_profile(m), "robust", 1e-9) == []


def test_scaled_plan_breaks_inventory():
    m = two_seller_market(n=10)
    p = _flat_profile(m)
    bad = StrategyProfile(p.prices, 1.5 * p.plans)
    viol = [v for v in feasibility_check(m, bad, "robust", 1e-9) if v.constraint == "inventory"]
    assert len(viol) == 2
    for v, sp in zip(viol, m.sellers):
        assert math.isclose(v.amount, 0.5 * sp.inventory_K)


def test_single_price_violation_reported():
    m = two_seller_market(n=10)
    p = _flat_profile(m, price=5.0)
    prices = p.prices.copy()
    prices[1, 4] = m.sellers[1].pi_max + 1
    viol = feasibility_check(m, StrategyProfile(prices, p.plans), "robust", 1e-9)
    box = [v for v in viol if v.constraint.startswith("price")]
    assert len(box) == 1 and box[0].seller == 1 and box[0].node == 4


def test_feasibility_bad_mode():
    m = two_seller_market(n=10)
    with pytest.raises(ValueError):
        feasibility_check(m, _flat_profile(m), "optimistic", 1e-6)


# ---------------------------------------------------------------- properties

@given(
    st.integers(0, 1), st.floats(0, 40), st.floats(0, 40), st.floats(1, 10), st.floats(-1, 1),
)
def test_robust_dominance(s, p1, p2, t, u):
    m = two_seller_market(n=10)
    xi = 3 + 0.1 * t + 0.8 * u
    bound = robust_demand_bound(m, s, (p1, p2), t)
    obs = eval_observed_demand(m, s, (p1, p2), xi, t)
    assert bound <= obs + 1e-12 * max(1.0, abs(obs))


@given(st.floats(0, 15), st.floats(0, 15), st.floats(0, 30), st.floats(1, 10))
def test_robust_constraint_monotone_in_own_price(a, b, p2, t):
    m = two_seller_market(n=10)
    lo, hi = min(a, b), max(a, b)
    g_lo = robust_demand_bound(m, 0, (lo, p2), t)
    g_hi = robust_demand_bound(m, 0, (hi, p2), t)
    if g_hi >= 0:  # base factor nonnegative over [lo, hi]
        assert g_lo >= g_hi - 1e-9


@given(st.lists(st.floats(0, 15), min_size=10, max_size=10), st.lists(st.floats(0, 15), min_size=10, max_size=10),
       st.floats(0, 15))
def test_discrete_own_price_monotonicity(p_a, p_b, comp):
    m = monopoly_market(n=10, alpha=3000, beta=150)
    g = m.grid
    pa, pb = np.array(p_a), np.array(p_b)
    if np.allclose(pa, pb):
        return
    h = lambda p: (3000 - 150 * p) * 3.0
    lhs = np.dot(g.weights * np.exp(-g.nodes), (h(pa) - h(pb)) * (pa - pb))
    assert lhs < 0
