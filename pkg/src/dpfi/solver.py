"""Generalized robust Nash equilibrium by projection fixed-point iteration.

The market game is discretized on the time grid.  The shared feasible set
stacks, for every seller, price boxes, a demand floor, the inventory equality
(trapezoidal quadrature) and one linear demand row per node.  The iteration is

    u <- Proj[u + alpha * W * F(u)]

where F is the stacked revenue gradient (discounted plan on price positions,
discounted price on plan positions) and W holds the quadrature weights, so a
fixed point solves the quadrature form of the variational inequality.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from . import rules as _rules
from .model import (
    NOMINAL,
    ROBUST,
    MarketSpec,
    StrategyProfile,
    TimeGrid,
    _check_mode,
    base_factor_paths,
    coefficient_tables,
    demand_multiplier,
    discounted_revenue,
)
from .qp import Polyhedron, ProjectionError, project

log = logging.getLogger(__name__)


class InfeasibleMarketError(ValueError):
    """The shared feasible set is empty."""


class ConvergenceError(RuntimeError):
    """The fixed-point loop stopped without meeting its tolerance."""

    def __init__(self, msg, trace=None, last=None):
        super().__init__(msg)
        self.trace = list(trace or [])
        self.last = last


class DivergenceError(ConvergenceError):
    pass


@dataclass
class Discretization:
    """Node tables of every coefficient plus the flat index map.

    Flat layout: for each seller, its n prices then its n plans.
    """

    market: MarketSpec
    tables: dict

    @property
    def grid(self) -> TimeGrid:
        return self.market.grid

    @property
    def S(self) -> int:
        return self.market.n_sellers

    @property
    def n(self) -> int:
        return self.market.grid.n

    @property
    def N(self) -> int:
        return 2 * self.S * self.n

    def price_index(self, s: int, i: int) -> int:
        return s * 2 * self.n + i

    def plan_index(self, s: int, i: int) -> int:
        return s * 2 * self.n + self.n + i

    def locate(self, k: int) -> tuple:
        s, rem = divmod(int(k), 2 * self.n)
        kind, i = divmod(rem, self.n)
        return s, ("price", "plan")[kind], i

    def split(self, u) -> tuple:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.N,):
            raise ValueError(f"decision vector has shape {u.shape}, expected ({self.N},)")
        blocks = u.reshape(self.S, 2, self.n)
        return blocks[:, 0, :].copy(), blocks[:, 1, :].copy()

    def join(self, prices, plans) -> np.ndarray:
        return np.stack([np.asarray(prices, float), np.asarray(plans, float)], axis=1).reshape(-1)

    def to_flat(self, profile: StrategyProfile) -> np.ndarray:
        profile.check_shape(self.market)
        return self.join(profile.prices, profile.plans)

    def to_profile(self, u) -> StrategyProfile:
        return StrategyProfile(*self.split(u))

    def node_weights(self) -> np.ndarray:
        """Quadrature weight of every flat position."""
        return np.tile(self.tables["weights"], 2 * self.S)


def discretize(market: MarketSpec) -> Discretization:
    return Discretization(market, coefficient_tables(market))


@dataclass
class FeasibleSet:
    disc: Discretization
    mode: str
    lb: np.ndarray
    ub: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    eq_labels: list
    in_labels: list
    rules: tuple = ()
    n_demand_rows: int = 0

    _poly: Polyhedron | None = field(default=None, repr=False)

    def polyhedron(self) -> Polyhedron:
        if self._poly is None:
            self._poly = Polyhedron(self.lb, self.ub, self.A_eq, self.b_eq, self.G, self.h)
        return self._poly

    @property
    def has_lagged_rows(self) -> bool:
        return any(r.kind == "response" for r in self.rules)

    def with_previous_prices(self, prev_prices) -> "FeasibleSet":
        """Refresh the right-hand sides of lagged rows from the previous iterate."""
        if not self.has_lagged_rows:
            return self
        lag = _rules.lagged_rows(self.rules, self.disc, prev_prices, self.mode)
        b = np.concatenate([self.b_eq[: self.disc.S]] + [r.rhs for r in lag])
        out = FeasibleSet(
            self.disc, self.mode, self.lb, self.ub, self.A_eq, b, self.G, self.h,
            self.eq_labels, self.in_labels, self.rules, self.n_demand_rows,
        )
        if self._poly is not None:
            P = self._poly
            out._poly = Polyhedron.__new__(Polyhedron)
            out._poly.__dict__.update(P.__dict__)
            out._poly.b = b
        return out

    def demand_rows(self) -> tuple:
        """(matrix, rhs) of the per-node demand inequalities only."""
        k = self.n_demand_rows
        return self.G[:k], self.h[:k]


def _demand_block(disc: Discretization, mode: str):
    tab = disc.tables
    mult = demand_multiplier(tab, mode)
    S, n = disc.S, disc.n
    rows, cols, vals, rhs, labels = [], [], [], [], []
    r = 0
    for s in range(S):
        for i in range(n):
            m = mult[s, i]
            rows += [r, r]
            cols += [disc.plan_index(s, i), disc.price_index(s, i)]
            vals += [1.0, m * tab["beta"][s, i]]
            for q in range(S):
                g = tab["gamma"][s, q, i]
                if q != s and g != 0.0:
                    rows.append(r)
                    cols.append(disc.price_index(q, i))
                    vals.append(-m * g)
            rhs.append(m * tab["alpha"][s, i])
            labels.append(("demand", s, i))
            r += 1
    return sp.csr_matrix((vals, (rows, cols)), shape=(r, disc.N)), np.array(rhs), labels


def _binding_prices(disc: Discretization, plans: np.ndarray, mult: np.ndarray) -> np.ndarray:
    """Prices at which every seller's demand row binds for the given plans."""
    tab = disc.tables
    S, n = disc.S, disc.n
    out = np.empty((S, n))
    for i in range(n):
        B = -tab["gamma"][:, :, i].copy()
        B[np.diag_indices(S)] = tab["beta"][:, i]
        rhs = tab["alpha"][:, i] - plans[:, i] / mult[:, i]
        try:
            out[:, i] = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError:
            out[:, i] = np.linalg.lstsq(B, rhs, rcond=None)[0]
    return out


def initial_point(disc: Discretization, mode: str, shrink: float = 1.0):
    """Constant plans K_s/T with prices that make every demand row bind, clamped to boxes.

    Returns the flat point and the first (seller, node) whose row or floor fails,
    or None when the point is feasible.
    """
    mk = disc.market
    mult = demand_multiplier(disc.tables, mode)
    plans = np.array([[sp_.inventory_K / mk.grid.length] * disc.n for sp_ in mk.sellers]) * shrink
    prices = _binding_prices(disc, plans, mult)
    lo = np.array([sp_.pi_min for sp_ in mk.sellers])[:, None]
    hi = np.array([sp_.pi_max for sp_ in mk.sellers])[:, None]
    prices = np.clip(prices, lo, hi)
    u = disc.join(prices, plans)
    G, h, _ = _demand_block(disc, mode)
    excess = (G @ u - h).reshape(disc.S, disc.n)
    scale = 1.0 + np.abs(h).reshape(disc.S, disc.n)
    dmin = np.array([sp_.d_min for sp_ in mk.sellers])[:, None]
    bad = (excess > 1e-10 * scale) | (plans < dmin)
    if np.any(bad):
        s, i = np.argwhere(bad)[0]
        return u, (int(s), int(i))
    return u, None


def build_feasible_set(disc: Discretization, mode: str = ROBUST, rules=(), prev_prices=None, check: bool = True) -> FeasibleSet:
    """Assemble the shared set: boxes, inventory equalities, demand rows and rule rows."""
    _check_mode(mode)
    mk = disc.market
    S, n = disc.S, disc.n
    tab = disc.tables
    rules = tuple(rules or ())
    if mode == ROBUST and np.any(tab["xi0"] - tab["tau"][:, None] <= 0):
        s, i = np.argwhere(tab["xi0"] - tab["tau"][:, None] <= 0)[0]
        raise InfeasibleMarketError(f"seller {s + 1}: xi0 - tau <= 0 at t={tab['t'][i]:.6g}")

    lb = np.empty(disc.N)
    ub = np.empty(disc.N)
    for s, sp_ in enumerate(mk.sellers):
        sl_p = slice(disc.price_index(s, 0), disc.price_index(s, 0) + n)
        sl_d = slice(disc.plan_index(s, 0), disc.plan_index(s, 0) + n)
        lb[sl_p], ub[sl_p] = sp_.pi_min, sp_.pi_max
        lb[sl_d], ub[sl_d] = sp_.d_min, np.inf

    w = tab["weights"]
    rows, cols, vals = [], [], []
    for s in range(S):
        rows += [s] * n
        cols += [disc.plan_index(s, i) for i in range(n)]
        vals += list(w)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(S, disc.N))
    b = np.array([sp_.inventory_K for sp_ in mk.sellers], dtype=float)
    eq_labels = [("inventory", s, None) for s in range(S)]

    G, h, in_labels = _demand_block(disc, mode)
    n_dem = G.shape[0]
    for rr in _rules.static_rows(rules, disc):
        G = sp.vstack([G, rr.M], format="csr")
        h = np.concatenate([h, rr.rhs])
        in_labels += rr.labels

    u0, bad = initial_point(disc, mode, shrink=1.0 - 1e-6)
    if any(r.kind == "response" for r in rules):
        if prev_prices is None:
            prev_prices = disc.split(u0)[0]
        for rr in _rules.lagged_rows(rules, disc, prev_prices, mode):
            A = sp.vstack([A, rr.M], format="csr")
            b = np.concatenate([b, rr.rhs])
            eq_labels += rr.labels

    fs = FeasibleSet(disc, mode, lb, ub, A, b, G, h, eq_labels, in_labels, rules, n_dem)
    if check and (bad is not None or rules):
        if not _lp_feasible(fs):
            if bad is None:
                raise InfeasibleMarketError("pricing rules leave the feasible set empty")
            s, i = bad
            raise InfeasibleMarketError(
                f"feasible set is empty: seller {s + 1} cannot meet its demand row at t={tab['t'][i]:.6g} "
                f"(inventory {mk.sellers[s].inventory_K} too large for the {mode} demand bound?)"
            )
    return fs


def _lp_feasible(fs: FeasibleSet) -> bool:
    res = linprog(
        np.zeros(fs.disc.N), A_ub=fs.G, b_ub=fs.h, A_eq=fs.A_eq, b_eq=fs.b_eq,
        bounds=list(zip(fs.lb, np.where(np.isfinite(fs.ub), fs.ub, None))), method="highs",
    )
    return res.status == 0


def vi_map(disc: Discretization, u) -> np.ndarray:
    """Stacked revenue gradient: exp(-rho t) D on price slots, exp(-rho t) pi on plan slots."""
    prices, plans = disc.split(u)
    e = disc.tables["discount"]
    return disc.join(e * plans, e * prices)


@dataclass
class SolverConfig:
    step_alpha: float | None = None
    eps1: float = 1e-7
    max_iters: int = 5000
    qp_tol: float = 1e-8
    representation: str = "grid"
    gap_check: bool = True
    max_halvings: int = 12

    def __post_init__(self):
        if self.step_alpha is not None and not self.step_alpha > 0:
            raise ValueError("step_alpha must be positive")
        if not (self.eps1 > 0 and self.qp_tol > 0):
            raise ValueError("tolerances must be positive")
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be at least 1")
        if self.representation not in ("grid", "poly5"):
            raise ValueError("representation must be 'grid' or 'poly5'")

    def to_dict(self) -> dict:
        return {
            "step_alpha": self.step_alpha,
            "eps1": self.eps1,
            "max_iters": self.max_iters,
            "qp_tol": self.qp_tol,
            "representation": self.representation,
            "gap_check": self.gap_check,
        }


def default_step(disc: Discretization, mode: str) -> float:
    """Step sized to the curvature of revenue along the binding demand rows.

    On the face where every demand row binds, the weighted revenue has
    curvature of order w e / (m (beta - sum gamma)); half its inverse keeps the
    iteration contractive there.  Falls back to the global Lipschitz bound.
    """
    tab = disc.tables
    we = tab["weights"] * tab["discount"]
    m = demand_multiplier(tab, mode)
    net = tab["beta"] - tab["gamma"].sum(axis=1)
    if np.all(net > 0):
        return float(0.5 * np.min(m * net / we[None, :]))
    return float(1.0 / np.max(we))


@dataclass
class SolverResult:
    market: MarketSpec
    mode: str
    profile: StrategyProfile
    iterations: int
    step_norm_trace: np.ndarray
    revenues: np.ndarray
    vi_gap: float | None = None
    multipliers: dict = field(default_factory=dict)
    binding_report: dict = field(default_factory=dict)
    step_alpha: float = float("nan")
    converged: bool = True
    elapsed: float = 0.0
    warnings: list = field(default_factory=list)

    def remaining_inventory(self) -> np.ndarray:
        w = self.market.grid.dt
        d = self.profile.plans
        used = np.concatenate([np.zeros((d.shape[0], 1)), np.cumsum(0.5 * w * (d[:, 1:] + d[:, :-1]), axis=1)], axis=1)
        K = np.array([s.inventory_K for s in self.market.sellers])[:, None]
        return K - used

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "t": self.market.grid.nodes.tolist(),
            "prices": self.profile.prices.tolist(),
            "plans": self.profile.plans.tolist(),
            "remaining_inventory": self.remaining_inventory().tolist(),
            "revenues": self.revenues.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "step_alpha": self.step_alpha,
            "step_norm_trace": self.step_norm_trace.tolist(),
            "vi_gap": self.vi_gap,
            "binding_report": self.binding_report,
            "warnings": self.warnings,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "seller", "price", "plan", "remaining_inventory"])
        t = self.market.grid.nodes
        rem = self.remaining_inventory()
        for s in range(self.profile.n_sellers):
            for i in range(t.size):
                wr.writerow([repr(float(t[i])), s + 1, repr(float(self.profile.prices[s, i])),
                             repr(float(self.profile.plans[s, i])), repr(float(rem[s, i]))])
        return buf.getvalue()


def _binding(fs: FeasibleSet, u, proj, tol: float) -> tuple:
    disc = fs.disc
    G, h = fs.demand_rows()
    slack = (h - G @ u).reshape(disc.S, disc.n)
    prices, plans = disc.split(u)
    report, warn = {}, []
    for s, sp_ in enumerate(disc.market.sellers):
        scale = 1.0 + np.abs(h.reshape(disc.S, disc.n)[s])
        rep = {
            "demand_binding_nodes": int(np.sum(slack[s] <= 1e3 * tol * scale)),
            "price_at_max": int(np.sum(prices[s] >= sp_.pi_max - 1e-9)),
            "price_at_min": int(np.sum(prices[s] <= sp_.pi_min + 1e-9)),
            "plan_at_min": int(np.sum(plans[s] <= sp_.d_min + 1e-9)),
        }
        report[f"seller_{s + 1}"] = rep
        if rep["price_at_max"] or rep["price_at_min"]:
            warn.append(f"seller {s + 1}: price box binds at {rep['price_at_max'] + rep['price_at_min']} nodes")
    extra = fs.G.shape[0] - fs.n_demand_rows
    if extra:
        rs = fs.h[fs.n_demand_rows:] - fs.G[fs.n_demand_rows:] @ u
        report["rule_rows_binding"] = int(np.sum(rs <= 1e-7 * (1 + np.abs(fs.h[fs.n_demand_rows:]))))
    return report, warn


def _smooth(disc: Discretization, u) -> np.ndarray:
    prices, plans = disc.split(u)
    prices = np.array([poly5_fit(disc.grid, p)[1] for p in prices])
    plans = np.array([poly5_fit(disc.grid, d)[1] for d in plans])
    return disc.join(prices, plans)


def _snap_plans(disc: Discretization, mode: str, u, tol: float) -> np.ndarray:
    """Trim plans that exceed their demand bound by projection round-off.

    The bound is evaluated with the same expression the simulator uses, so a
    plan posted under the full robust margin is met exactly by every draw.
    """
    prices, plans = disc.split(u)
    bound = base_factor_paths(disc.tables, prices) * demand_multiplier(disc.tables, mode)
    over = (plans > bound) & (plans - bound <= 1e3 * tol * (1.0 + np.abs(bound)))
    if not np.any(over):
        return u
    return disc.join(prices, np.where(over, bound, plans))


def fixed_point_solve(disc: Discretization, fs: FeasibleSet, cfg: SolverConfig | None = None, u0=None) -> SolverResult:
    """Iterate u <- Proj_Gamma[u + alpha W F(u)] until the step norm drops below eps1."""
    cfg = cfg or SolverConfig()
    t_start = time.perf_counter()
    alpha = cfg.step_alpha if cfg.step_alpha is not None else default_step(disc, fs.mode)
    wts = disc.node_weights()
    if u0 is None:
        u0, _ = initial_point(disc, fs.mode)
    cur = fs
    P = cur.polyhedron()
    proj = project(P, np.asarray(u0, float), tol=cfg.qp_tol)
    u = proj.x
    active = proj.active
    trace = []
    halvings = 0
    converged = False
    for k in range(1, int(cfg.max_iters) + 1):
        if cur.has_lagged_rows:
            cur = cur.with_previous_prices(disc.split(u)[0])
            P = cur.polyhedron()
        target = u + alpha * wts * vi_map(disc, u)
        try:
            proj = project(P, target, tol=cfg.qp_tol, warm=active)
        except ProjectionError as exc:
            if cur.has_lagged_rows and not _lp_feasible(cur):
                raise ConvergenceError(
                    f"iteration {k}: the lagged rule rows, refreshed with the previous prices, leave the feasible "
                    "set empty (the implicit-lag loop ratchets prices upward); try a larger sigma",
                    trace, u,
                ) from exc
            raise ConvergenceError(f"projection failed at iteration {k}: {exc}", trace, u) from exc
        active = proj.active
        x = proj.x
        nxt = _smooth(disc, x) if cfg.representation == "poly5" else x
        step = float(np.linalg.norm(nxt - u))
        trace.append(step)
        if not math.isfinite(step):
            raise DivergenceError("non-finite iterate; try a smaller step_alpha", trace, u)
        if step <= cfg.eps1:
            converged = True
            u = x
            break
        if len(trace) > 50 and step > 10.0 * trace[-51]:
            halvings += 1
            if halvings > cfg.max_halvings:
                raise DivergenceError(
                    f"step norm grew tenfold over 50 iterations {halvings} times; try a smaller step_alpha", trace, u
                )
            alpha *= 0.5
            log.info("step norm growing; halving alpha to %.4g", alpha)
        u = nxt if cfg.representation == "poly5" else x
    else:
        raise ConvergenceError(
            f"no convergence in {cfg.max_iters} iterations (last step {trace[-1]:.3e} > eps1={cfg.eps1:.1e})", trace, u
        )

    u = _snap_plans(disc, fs.mode, u, cfg.qp_tol)
    profile = disc.to_profile(u)
    revenues = discounted_revenue(disc.market, profile)
    report, warn = _binding(cur, u, proj, cfg.qp_tol)
    for msg in warn:
        log.warning(msg)
    k = cur.n_demand_rows
    mult = {
        "inventory": proj.y_eq[: disc.S].tolist(),
        "demand": proj.y_in[:k].reshape(disc.S, disc.n).tolist(),
    }
    res = SolverResult(
        disc.market, fs.mode, profile, len(trace), np.array(trace), revenues,
        multipliers=mult, binding_report=report, step_alpha=alpha, converged=converged,
        warnings=warn,
    )
    if cfg.gap_check:
        res.vi_gap = vi_gap(disc, cur, u)
    res.elapsed = time.perf_counter() - t_start
    return res


def vi_gap(disc: Discretization, fs: FeasibleSet, u) -> float:
    """max over v in Gamma of <W F(u), v - u>; zero certifies a solution."""
    u = np.asarray(u, float)
    c = disc.node_weights() * vi_map(disc, u)
    res = linprog(
        -c, A_ub=fs.G, b_ub=fs.h, A_eq=fs.A_eq, b_eq=fs.b_eq,
        bounds=list(zip(fs.lb, np.where(np.isfinite(fs.ub), fs.ub, None))), method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"gap LP failed: {res.message}")
    return float(-res.fun - c @ u)


@dataclass
class BestResponse:
    seller: int
    prices: np.ndarray
    plans: np.ndarray
    value: float
    current_value: float
    multiplier: float

    @property
    def improvement(self) -> float:
        return self.value - self.current_value

    @property
    def relative_improvement(self) -> float:
        return self.improvement / max(abs(self.current_value), 1e-300)


def best_response(disc: Discretization, s: int, fixed: StrategyProfile, mode: str = ROBUST, tol: float = 1e-10) -> BestResponse:
    """Exact discretized best response of seller s to frozen competitor prices.

    For fixed plans the revenue rises with own price, so the seller prices at
    min(pi_max, demand-row price).  What remains is a separable concave program
    in the plans with one inventory equality, solved by bisection on its
    multiplier.
    """
    _check_mode(mode)
    mk = disc.market
    sp_ = mk.seller(s)
    tab = disc.tables
    fixed.check_shape(mk)
    m = demand_multiplier(tab, mode)[s]
    beta = tab["beta"][s]
    c = tab["alpha"][s] + np.einsum("r,rn->n", np.where(np.arange(disc.S) == s, 0.0, 1.0),
                                    tab["gamma"][s] * fixed.prices)
    e = tab["discount"]
    w = tab["weights"]
    lo = np.full(disc.n, sp_.d_min)
    hi = m * (c - beta * sp_.pi_min)
    K = sp_.inventory_K
    if np.any(hi < lo) or w @ lo > K + 1e-12 * K or w @ hi < K - 1e-12 * K:
        raise InfeasibleMarketError(f"seller {s + 1} has no feasible response to the fixed competitor prices")
    kink = m * (c - beta * sp_.pi_max)

    def plans_at(lam):
        ell = lam / e
        dq = 0.5 * m * (c - beta * ell)
        d = np.where(dq >= kink, dq, np.where(ell < sp_.pi_max, kink, -np.inf))
        return np.clip(d, lo, hi)

    lam_hi = float(np.max(e * sp_.pi_max)) + 1.0
    lam_lo = float(np.min(e * np.minimum(0.0, (c - 2 * hi / m) / beta))) - 1.0
    f = lambda lam: w @ plans_at(lam) - K
    a, b = lam_lo, lam_hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        if f(mid) > 0:
            a = mid
        else:
            b = mid
        if b - a <= tol * max(1.0, abs(mid)):
            break
    d_left, d_right = plans_at(a), plans_at(b)
    s_left, s_right = w @ d_left - K, w @ d_right - K
    theta = 0.0 if s_left == s_right else s_left / (s_left - s_right)
    plans = d_left + theta * (d_right - d_left)
    prices = np.minimum(sp_.pi_max, (c - plans / m) / beta)
    value = float(np.sum(w * e * prices * plans))
    current = float(np.sum(w * e * fixed.prices[s] * fixed.plans[s]))
    return BestResponse(s, prices, plans, value, current, 0.5 * (a + b))


def analytic_single_seller(alpha, beta, xi0_minus_tau, K, T, rho=0.0, *, pi_min=0.0, pi_max=math.inf, d_min=0.0):
    """Closed-form monopoly solution for constant coefficients and no discounting.

    The demand row binds, which fixes price as a function of plan; revenue is
    then concave in the plan, so the constant plan K/T is optimal.
    """
    if rho != 0:
        raise ValueError("closed form requires rho = 0")
    if min(beta, xi0_minus_tau, K, T) <= 0:
        raise ValueError("beta, xi0 - tau, K and T must be positive")
    plan = K / T
    price = (alpha - plan / xi0_minus_tau) / beta
    if not (pi_min <= price <= pi_max) or plan < d_min:
        raise ValueError(f"solution (price={price:.6g}, plan={plan:.6g}) is not interior to the boxes")
    return price, plan


def poly5_fit(grid: TimeGrid, values):
    """Least-squares quintic in t; returns (coefficients c0..c5 in powers of t, fitted values)."""
    values = np.asarray(values, dtype=float)
    if grid.n < 6:
        raise ValueError("a quintic fit needs at least 6 nodes")
    if values.shape != (grid.n,):
        raise ValueError("values must have one entry per node")
    t = grid.nodes
    poly = np.polynomial.Polynomial.fit(t, values, 5)
    coef = poly.convert().coef
    coef = np.concatenate([coef, np.zeros(6 - coef.size)])
    return coef, poly(t)


def solve_equilibrium(market: MarketSpec, mode: str = ROBUST, rules=(), cfg: SolverConfig | None = None) -> SolverResult:
    disc = discretize(market)
    fs = build_feasible_set(disc, mode, rules)
    return fixed_point_solve(disc, fs, cfg)


def check_best_responses(result: SolverResult) -> list:
    disc = discretize(result.market)
    return [best_response(disc, s, result.profile, result.mode) for s in range(disc.S)]


__all__ = [
    "NOMINAL", "ROBUST", "Discretization", "FeasibleSet", "SolverConfig", "SolverResult",
    "InfeasibleMarketError", "ConvergenceError", "DivergenceError", "discretize", "build_feasible_set",
    "vi_map", "fixed_point_solve", "vi_gap", "best_response", "analytic_single_seller", "poly5_fit",
    "solve_equilibrium", "initial_point", "default_step", "check_best_responses", "BestResponse",
]
