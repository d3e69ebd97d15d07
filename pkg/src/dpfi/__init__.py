"""Robust competitive dynamic pricing with fixed inventories."""

from .model import (
    AffinePath,
    MarketSpec,
    SellerParams,
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
from .rules import PricingRule
from .solver import SolverConfig, SolverResult, solve_equilibrium

__all__ = [
    "AffinePath", "MarketSpec", "SellerParams", "StrategyProfile", "TimeGrid", "UncertaintyModel",
    "check_assumptions", "discounted_revenue", "eval_observed_demand", "feasibility_check", "grad_xi_magnitude",
    "make_seller", "robust_demand_bound", "PricingRule", "SolverConfig", "SolverResult", "solve_equilibrium",
]
