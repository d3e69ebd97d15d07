"""Monte Carlo evaluation of posted price/plan policies under demand uncertainty.

A policy is a robust magnitude ``tau_bar`` (0 is the nominal policy).  Each
seller posts the paths it computes believing every seller uses its own policy;
realized sales are capped by both the plan and the observed demand.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .model import (
    ROBUST,
    MarketSpec,
    StrategyProfile,
    TimeGrid,
    UncertaintyModel,
    base_factor_paths,
    check_assumptions,
    choke_price,
    coefficient_tables,
)
from .solver import ConvergenceError, InfeasibleMarketError, SolverConfig, SolverResult, solve_equilibrium

log = logging.getLogger(__name__)


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class DistributionSpec:
    """Beta(a, b) law of the standardized shock; beta(1,1) is uniform."""

    a: float = 1.0
    b: float = 1.0
    family: str = "beta"

    def __post_init__(self):
        if self.family != "beta":
            raise SimulationError(f"unsupported distribution family {self.family!r}")
        if not (self.a > 0 and self.b > 0):
            raise SimulationError("beta parameters must be positive")

    @classmethod
    def parse(cls, text: str) -> "DistributionSpec":
        m = re.fullmatch(r"\s*(\w+)\s*:\s*([^,]+),\s*([^,]+)\s*", text)
        if not m:
            raise SimulationError(f"cannot parse distribution {text!r}; expected family:a,b")
        try:
            return cls(float(m.group(2)), float(m.group(3)), m.group(1))
        except ValueError as exc:
            raise SimulationError(str(exc)) from exc

    @property
    def label(self) -> str:
        return f"{self.family}({self.a:g},{self.b:g})"

    @property
    def mean(self) -> float:
        return self.a / (self.a + self.b)

    def to_dict(self) -> dict:
        return {"family": self.family, "a": self.a, "b": self.b}


NOMINAL_POLICY = 0.0


def _stream(seed: int, seller: int, draw_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(seller), int(draw_index)])))


def sample_xi(uncertainty: UncertaintyModel, dist: DistributionSpec, grid: TimeGrid, draw_index: int, seed: int,
              seller: int = 0) -> np.ndarray:
    """One path xi_i = xi0(t_i) + tau (2 B_i - 1) with B_i iid Beta(a, b)."""
    xi0 = np.asarray(uncertainty.xi0.value(grid.nodes), float) * np.ones(grid.n)
    if uncertainty.tau == 0:
        return xi0
    shocks = _stream(seed, seller, draw_index).beta(dist.a, dist.b, size=grid.n)
    return xi0 + uncertainty.tau * (2.0 * shocks - 1.0)


def sample_xi_block(market: MarketSpec, dist: DistributionSpec, n_draws: int, seed: int) -> np.ndarray:
    """Array (n_draws, sellers, nodes) of draws; row k equals sample_xi(..., draw_index=k)."""
    g = market.grid
    out = np.empty((int(n_draws), market.n_sellers, g.n))
    for s, unc in enumerate(market.uncertainty):
        for k in range(int(n_draws)):
            out[k, s] = sample_xi(unc, dist, g, k, seed, s)
    return out


def realized_sales(posted: StrategyProfile, market: MarketSpec, xi) -> np.ndarray:
    """max(0, min(plan, observed demand)) per seller and node; ``xi`` may carry leading draw axes."""
    posted.check_shape(market)
    xi = np.asarray(xi, float)
    if xi.shape[-2:] != posted.prices.shape:
        raise SimulationError(f"xi shape {xi.shape} does not match profile {posted.prices.shape}")
    base = base_factor_paths(coefficient_tables(market), posted.prices)
    return np.maximum(0.0, np.minimum(posted.plans, base * xi))


def realized_profit(prices, sales, rho: float, grid: TimeGrid) -> np.ndarray:
    """Trapezoidal exp(-rho t) * price * sales per seller (leading draw axes allowed)."""
    prices = np.asarray(prices, float)
    sales = np.asarray(sales, float)
    if sales.shape[-2:] != prices.shape or prices.shape[-1] != grid.n:
        raise SimulationError("prices and sales must both be (sellers, nodes) on the grid")
    w = grid.weights * np.exp(-rho * grid.nodes)
    return np.sum(w * prices * sales, axis=-1)


@dataclass(frozen=True)
class ScenarioCell:
    """Robust magnitude used by each seller's policy (0 = nominal)."""

    policies: tuple

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(float(p) for p in self.policies))
        if any(p < 0 for p in self.policies):
            raise SimulationError("policy magnitudes must be nonnegative")

    @classmethod
    def from_label(cls, label: str, tau: float) -> "ScenarioCell":
        """'NR' -> (0, tau)."""
        try:
            return cls(tuple({"N": 0.0, "R": tau}[c] for c in label.upper()))
        except KeyError:
            raise SimulationError(f"cell label {label!r} must use only N and R") from None

    def label(self, tau_true: float | None = None) -> str:
        parts = []
        for p in self.policies:
            if p == 0:
                parts.append("N")
            elif tau_true is not None and np.isclose(p, tau_true):
                parts.append("R")
            else:
                parts.append(f"R({p:g})")
        return "".join(parts) if all(len(x) == 1 for x in parts) else ",".join(parts)


class PolicySolver:
    """Solves and caches the all-sellers-use-this-magnitude equilibrium per magnitude."""

    def __init__(self, market: MarketSpec, cfg: SolverConfig | None = None, rules=()):
        self.market = market
        self.cfg = cfg or SolverConfig()
        self.rules = tuple(rules or ())
        self._cache: dict = {}

    def __call__(self, tau_bar: float) -> SolverResult:
        key = round(float(tau_bar), 12)
        if key not in self._cache:
            self._cache[key] = solve_equilibrium(self.market.with_tau(key), ROBUST, self.rules, self.cfg)
        return self._cache[key]

    @property
    def results(self) -> dict:
        return dict(self._cache)


def _true_tau(market: MarketSpec) -> np.ndarray:
    return np.array([u.tau for u in market.uncertainty])


def build_scenario(market: MarketSpec, cell: ScenarioCell, cfg: SolverConfig | None = None,
                   policies: PolicySolver | None = None) -> StrategyProfile:
    """Posted profile: seller s's own paths from the equilibrium where all play s's policy."""
    if len(cell.policies) != market.n_sellers:
        raise SimulationError("cell needs one policy per seller")
    tau = _true_tau(market)
    if any(p > t + 1e-12 for p, t in zip(cell.policies, tau)):
        raise SimulationError("policy magnitude exceeds the true magnitude")
    solve = policies or PolicySolver(market, cfg)
    prices = np.empty((market.n_sellers, market.grid.n))
    plans = np.empty_like(prices)
    for s, p in enumerate(cell.policies):
        eq = solve(p).profile
        prices[s] = eq.prices[s]
        plans[s] = eq.plans[s]
    return StrategyProfile(prices, plans)


def histogram(values, min_bins: int = 10, max_bins: int = 200) -> tuple:
    """Freedman-Diaconis bins with a floor of ``min_bins``."""
    x = np.asarray(values, float)
    lo, hi = float(x.min()), float(x.max())
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        edges = np.linspace(lo - 0.5, hi + 0.5, min_bins + 1)
    else:
        fd = np.histogram_bin_edges(x, bins="fd")
        nb = int(np.clip(len(fd) - 1, min_bins, max_bins))
        edges = np.linspace(lo, hi, nb + 1)
    counts, edges = np.histogram(x, bins=edges)
    return edges, counts


@dataclass
class SellerStats:
    min: float
    max: float
    mean: float
    sd: float
    edges: np.ndarray
    counts: np.ndarray

    @classmethod
    def of(cls, profits) -> "SellerStats":
        x = np.asarray(profits, float)
        if x.min() == x.max():
            mean, sd = float(x[0]), 0.0
        else:
            mean = float(np.mean(x))
            sd = float(np.sqrt(np.mean((x - mean) ** 2)))
        edges, counts = histogram(x)
        # keep min <= mean <= max despite summation round-off
        mean = min(max(mean, float(x.min())), float(x.max()))
        return cls(float(x.min()), float(x.max()), mean, sd, edges, counts)

    def to_dict(self) -> dict:
        return {"min": self.min, "max": self.max, "mean": self.mean, "sd": self.sd,
                "bin_edges": self.edges.tolist(), "counts": self.counts.tolist()}


@dataclass
class ScenarioReport:
    cell: ScenarioCell
    label: str
    dist: DistributionSpec
    n_draws: int
    seed: int
    profits: np.ndarray  # (n_draws, sellers)
    stats: list
    posted: StrategyProfile
    total_sales: np.ndarray = field(default=None)  # (n_draws, sellers)

    def to_dict(self, include_draws: bool = False) -> dict:
        out = {
            "cell": self.label,
            "policies": list(self.cell.policies),
            "distribution": self.dist.to_dict(),
            "n_draws": self.n_draws,
            "seed": self.seed,
            "sellers": [st.to_dict() for st in self.stats],
        }
        if include_draws:
            out["profits"] = self.profits.tolist()
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["draw_index", "seller", "profit"])
        for k in range(self.profits.shape[0]):
            for s in range(self.profits.shape[1]):
                wr.writerow([k, s + 1, repr(float(self.profits[k, s]))])
        return buf.getvalue()

    def summary_rows(self) -> list:
        return [
            {"cell": self.label, "distribution": self.dist.label, "seller": s + 1, "min": st.min,
             "max": st.max, "mean": st.mean, "sd": st.sd}
            for s, st in enumerate(self.stats)
        ]


def evaluate_policy(market: MarketSpec, posted: StrategyProfile, xi_block, cell: ScenarioCell, dist, seed,
                    label: str | None = None) -> ScenarioReport:
    sales = realized_sales(posted, market, xi_block)
    profits = realized_profit(posted.prices, sales, market.rho, market.grid)
    total = np.sum(market.grid.weights * sales, axis=-1)
    stats = [SellerStats.of(profits[:, s]) for s in range(market.n_sellers)]
    tau = float(np.max(_true_tau(market)))
    return ScenarioReport(cell, label or cell.label(tau), dist, int(xi_block.shape[0]), int(seed), profits, stats,
                          posted, total)


def run_scenario(market: MarketSpec, cell: ScenarioCell, dist: DistributionSpec, n_draws: int, seed: int,
                 cfg: SolverConfig | None = None, policies: PolicySolver | None = None,
                 xi_block=None) -> ScenarioReport:
    """Simulate ``n_draws`` demand paths against the cell's posted profile."""
    if int(n_draws) < 1:
        raise SimulationError("n_draws must be at least 1")
    posted = build_scenario(market, cell, cfg, policies)
    if xi_block is None:
        xi_block = sample_xi_block(market, dist, n_draws, seed)
    return evaluate_policy(market, posted, xi_block, cell, dist, seed)


MATRIX_CELLS = ("NN", "NR", "RN", "RR")


def scenario_matrix(market: MarketSpec, dists, n_draws: int, seed: int, cfg: SolverConfig | None = None,
                    policies: PolicySolver | None = None) -> dict:
    """The four nominal/robust cells for two sellers, per distribution label.

    All cells under one distribution share the same draws.
    """
    if market.n_sellers != 2:
        raise SimulationError("the policy matrix is defined for two sellers")
    tau = float(np.max(_true_tau(market)))
    solve = policies or PolicySolver(market, cfg)
    out = {}
    for dist in dists:
        block = sample_xi_block(market, dist, n_draws, seed)
        out[dist.label] = [
            run_scenario(market, ScenarioCell.from_label(c, tau), dist, n_draws, seed, policies=solve, xi_block=block)
            for c in MATRIX_CELLS
        ]
    return out


SWEEP_COEFFICIENTS = ("alpha", "beta", "gamma")


@dataclass
class SweepPoint:
    value: float
    result: SolverResult | None
    error: str | None = None

    @property
    def revenues(self):
        return None if self.result is None else self.result.revenues


def swept_market(market: MarketSpec, seller: int, coefficient: str, value: float) -> MarketSpec:
    """Replace the intercept of one affine coefficient, keeping its slope.

    For ``gamma`` every cross coefficient of ``seller`` is replaced.
    """
    if coefficient not in SWEEP_COEFFICIENTS:
        raise SimulationError(f"coefficient must be one of {SWEEP_COEFFICIENTS}")
    sp_ = market.seller(seller)
    if coefficient == "gamma":
        new = {r: type(p)(float(value), p.b) for r, p in sp_.gamma.items()}
        return market.with_seller(seller, gamma=new)
    path = getattr(sp_, coefficient)
    changed = market.with_seller(seller, **{coefficient: type(path)(float(value), path.b)})
    # the price cap follows the default sizing rule so the sweep never makes it bind
    cap = max(sp_.pi_max, math.ceil(1.2 * choke_price(changed, seller)))
    return changed.with_seller(seller, pi_max=float(cap))


def sensitivity_sweep(market: MarketSpec, seller: int, coefficient: str, values, cfg: SolverConfig | None = None,
                      rules=()) -> list:
    """One robust equilibrium per swept intercept; failures are recorded and skipped."""
    points = []
    for v in values:
        try:
            m = swept_market(market, seller, coefficient, v)
            report = check_assumptions(m)
            if not report.all_passed:
                raise SimulationError("assumptions fail: " + ", ".join(c.name for c in report.failures()))
            points.append(SweepPoint(float(v), solve_equilibrium(m, ROBUST, rules, cfg)))
        except (SimulationError, ConvergenceError, InfeasibleMarketError, ValueError) as exc:
            log.warning("sweep point %s=%g failed: %s", coefficient, v, exc)
            points.append(SweepPoint(float(v), None, str(exc)))
    return points


ROBUSTNESS_CASES = ("I", "II", "III")


def robustness_cell(case: str, tau_bar: float, tau_true: float) -> ScenarioCell:
    """Seller 2 uses tau_bar; seller 1 is nominal (I), fully robust (II) or also tau_bar (III)."""
    first = {"I": 0.0, "II": tau_true, "III": tau_bar}.get(case)
    if first is None:
        raise SimulationError(f"case must be one of {ROBUSTNESS_CASES}")
    return ScenarioCell((first, tau_bar))


def robustness_sweep(market: MarketSpec, case: str, tau_bar_values, dist: DistributionSpec, n_draws: int, seed: int,
                     cfg: SolverConfig | None = None, policies: PolicySolver | None = None) -> list:
    """Reports per tau_bar for the given case; every point reuses the same draws."""
    if market.n_sellers != 2:
        raise SimulationError("robustness cases are defined for two sellers")
    tau = float(np.max(_true_tau(market)))
    if any(not 0 <= v <= tau + 1e-12 for v in tau_bar_values):
        raise SimulationError("tau_bar values must lie in [0, true tau]")
    solve = policies or PolicySolver(market, cfg)
    block = sample_xi_block(market, dist, n_draws, seed)
    out = []
    for v in tau_bar_values:
        cell = robustness_cell(case, float(v), tau)
        rep = run_scenario(market, cell, dist, n_draws, seed, policies=solve, xi_block=block)
        rep.label = f"case {case}, tau_bar={float(v):g}"
        out.append(rep)
    return out
