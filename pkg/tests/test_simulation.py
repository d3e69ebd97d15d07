import math

import numpy as np
import pytest

from dpfi.model import AffinePath, ROBUST, StrategyProfile, TimeGrid, UncertaintyModel, discounted_revenue
from dpfi.simulation import (
    DistributionSpec,
    PolicySolver,
    ScenarioCell,
    SimulationError,
    SellerStats,
    build_scenario,
    histogram,
    realized_profit,
    realized_sales,
    robustness_cell,
    run_scenario,
    sample_xi,
    sample_xi_block,
    sensitivity_sweep,
    swept_market,
)
from dpfi.solver import solve_equilibrium

from .conftest import monopoly_market, two_seller_market

UNIFORM, SKEWED = DistributionSpec(1, 1), DistributionSpec(1, 3)


@pytest.fixture(scope="module")
def small():
    return two_seller_market(n=16)


@pytest.fixture(scope="module")
def small_policies(small):
    return PolicySolver(small)


# ---------------------------------------------------------------- distributions and draws

def test_distribution_parse_and_label():
    d = DistributionSpec.parse("beta:1,3")
    assert (d.a, d.b) == (1.0, 3.0) and d.label == "beta(1,3)" and d.mean == 0.25


@pytest.mark.parametrize("text", ["beta", "beta:1", "beta:0,1", "normal:0,1", "beta:x,1"])
def test_distribution_parse_errors(text):
    with pytest.raises(SimulationError):
        DistributionSpec.parse(text)


def test_zero_tau_draws_are_nominal():
    g = TimeGrid(1, 10, 12)
    unc = UncertaintyModel(AffinePath(3, 0.1), 0.0)
    for k in range(5):
        assert np.array_equal(sample_xi(unc, UNIFORM, g, k, seed=9), 3 + 0.1 * g.nodes)


def _shock_block(dist, n_draws):
    mk = monopoly_market(n=10, xi0=3.0, tau=0.8)
    block = sample_xi_block(mk, dist, n_draws, seed=20240601)[:, 0, :]
    return (block - 3.0) / 0.8


def test_uniform_shock_moments():
    z = _shock_block(UNIFORM, 100_000)
    assert z.min() >= -1 and z.max() <= 1
    se = z.std() / math.sqrt(z.size)
    assert abs(z.mean()) <= 3 * se


def test_skewed_shock_mean():
    z = _shock_block(SKEWED, 100_000)
    se = z.std() / math.sqrt(z.size)
    assert abs(z.mean() + 0.5) <= 3 * se


def test_draws_are_order_independent():
    g = TimeGrid(1, 10, 8)
    unc = UncertaintyModel(AffinePath(3.0), 0.8)
    late = sample_xi(unc, UNIFORM, g, 500, seed=1)
    _ = [sample_xi(unc, UNIFORM, g, k, seed=1) for k in range(10)]
    assert np.array_equal(late, sample_xi(unc, UNIFORM, g, 500, seed=1))
    assert not np.array_equal(late, sample_xi(unc, UNIFORM, g, 500, seed=2))
    assert not np.array_equal(late, sample_xi(unc, UNIFORM, g, 500, seed=1, seller=1))


# ---------------------------------------------------------------- sales and profit

def test_robust_plans_always_met(small, small_policies):
    eq = small_policies(0.8).profile
    lo = np.broadcast_to(3 + 0.1 * small.grid.nodes - 0.8, (2, small.grid.n))
    for xi in (lo, lo + 0.8, lo + 1.6):
        assert np.array_equal(realized_sales(eq, small, xi), eq.plans)


def test_low_shock_caps_sales_at_observed_demand(small, small_policies):
    eq = small_policies(0.8).profile
    xi = np.full((2, small.grid.n), 1.0)
    sales = realized_sales(eq, small, xi)
    assert np.all(sales < eq.plans)
    base = 3000 - (180 - 4 * small.grid.nodes) * eq.prices[0] + (36 - 2 * small.grid.nodes) * eq.prices[1]
    assert np.allclose(sales[0], base)


def test_negative_demand_clamped(small):
    prof = StrategyProfile(np.vstack([np.full(16, 100.0), np.full(16, 1.0)]), np.full((2, 16), 10.0))
    sales = realized_sales(prof, small, np.full((2, 16), 3.0))
    assert np.all(sales[0] == 0) and np.all(sales[1] == 10.0)


def test_sales_shape_mismatch(small):
    prof = StrategyProfile(np.ones((2, 16)), np.ones((2, 16)))
    with pytest.raises(SimulationError):
        realized_sales(prof, small, np.ones((2, 15)))


def test_profit_matches_revenue_when_plans_met(small, small_policies):
    eq = small_policies(0.8).profile
    assert np.allclose(realized_profit(eq.prices, eq.plans, 0.0, small.grid), discounted_revenue(small, eq))


def test_profit_examples():
    g = TimeGrid(1, 10, 10)
    assert np.allclose(realized_profit(np.full((2, 10), 2.0), np.full((2, 10), 3.0), 0.0, g), 54.0)
    assert np.all(realized_profit(np.full((2, 10), 2.0), np.zeros((2, 10)), 0.0, g) == 0)


# ---------------------------------------------------------------- cells and scenarios

def test_cell_labels():
    c = ScenarioCell.from_label("NR", 0.8)
    assert c.policies == (0.0, 0.8) and c.label(0.8) == "NR"
    assert ScenarioCell((0.0, 0.3)).label(0.8) == "N,R(0.3)"
    with pytest.raises(SimulationError):
        ScenarioCell.from_label("NX", 0.8)


def test_robustness_cells():
    assert robustness_cell("I", 0.3, 0.8).policies == (0.0, 0.3)
    assert robustness_cell("II", 0.3, 0.8).policies == (0.8, 0.3)
    assert robustness_cell("III", 0.3, 0.8).policies == (0.3, 0.3)
    with pytest.raises(SimulationError):
        robustness_cell("IV", 0.3, 0.8)


@pytest.mark.parametrize("label,tau", [("RR", 0.8), ("NN", 0.0)])
def test_consistent_cells_post_the_equilibrium(small, small_policies, label, tau):
    posted = build_scenario(small, ScenarioCell.from_label(label, 0.8), policies=small_policies)
    eq = solve_equilibrium(small.with_tau(tau), ROBUST).profile
    assert np.array_equal(posted.prices, eq.prices) and np.array_equal(posted.plans, eq.plans)


def test_mixed_cell_takes_each_sellers_own_paths(small, small_policies):
    posted = build_scenario(small, ScenarioCell.from_label("NR", 0.8), policies=small_policies)
    assert np.array_equal(posted.prices[0], small_policies(0.0).profile.prices[0])
    assert np.array_equal(posted.prices[1], small_policies(0.8).profile.prices[1])


def test_policy_above_true_magnitude_rejected(small, small_policies):
    with pytest.raises(SimulationError):
        build_scenario(small, ScenarioCell((0.9, 0.8)), policies=small_policies)


def test_robust_cell_has_zero_spread(small, small_policies):
    rep = run_scenario(small, ScenarioCell.from_label("RR", 0.8), SKEWED, 500, 3, policies=small_policies)
    for st in rep.stats:
        assert st.sd == 0.0 and st.min == st.max == st.mean


def test_single_draw(small, small_policies):
    rep = run_scenario(small, ScenarioCell.from_label("NN", 0.8), UNIFORM, 1, 3, policies=small_policies)
    for st in rep.stats:
        assert st.sd == 0.0 and st.min == st.max == st.mean


def test_zero_draws_rejected(small, small_policies):
    with pytest.raises(SimulationError):
        run_scenario(small, ScenarioCell.from_label("NN", 0.8), UNIFORM, 0, 3, policies=small_policies)


def test_scenarios_deterministic(small, small_policies):
    cell = ScenarioCell.from_label("NR", 0.8)
    a = run_scenario(small, cell, UNIFORM, 300, 11, policies=small_policies)
    b = run_scenario(small, cell, UNIFORM, 300, 11, policies=PolicySolver(small))
    assert np.array_equal(a.profits, b.profits)
    assert a.to_csv() == b.to_csv()


def test_sales_never_exceed_inventory(small, small_policies):
    rep = run_scenario(small, ScenarioCell.from_label("NN", 0.8), UNIFORM, 500, 5, policies=small_policies)
    K = np.array([2500, 3000])
    assert np.all(rep.total_sales <= K * (1 + 1e-6))


def test_stats_and_histogram():
    x = np.random.default_rng(0).normal(size=5000)
    st = SellerStats.of(x)
    assert math.isclose(st.sd, np.std(x)) and st.min <= st.mean <= st.max
    assert 10 <= len(st.counts) <= 200 and st.counts.sum() == 5000
    edges, counts = histogram(np.full(20, 7.0))
    assert len(counts) == 10 and counts.sum() == 20


# ---------------------------------------------------------------- sweeps

def test_swept_market_replaces_intercept(small):
    m = swept_market(small, 0, "beta", 150)
    assert m.sellers[0].beta.a == 150 and m.sellers[0].beta.b == -4
    assert m.sellers[0].pi_max >= small.sellers[0].pi_max
    with pytest.raises(SimulationError):
        swept_market(small, 0, "delta", 1.0)


def test_sweep_records_failures(small):
    pts = sensitivity_sweep(small, 0, "beta", [170, -1000])
    assert pts[0].result is not None and pts[0].error is None
    assert pts[1].result is None and pts[1].error
