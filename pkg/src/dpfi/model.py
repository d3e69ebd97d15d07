"""Market description and the linear multiplicative demand model.

Everything here works on a uniform time grid with trapezoidal weights.
Coefficients are affine in time, so evaluating them at nodes is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

NOMINAL = "nominal"
ROBUST = "robust"
MODES = (NOMINAL, ROBUST)


class MarketError(ValueError):
    """Raised when a market description is malformed."""


def _check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    return mode


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [t0, tf] with trapezoidal quadrature weights."""

    t0: float
    tf: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.t0) and math.isfinite(self.tf)):
            raise MarketError("grid endpoints must be finite")
        if not self.t0 < self.tf:
            raise MarketError(f"need t0 < tf, got [{self.t0}, {self.tf}]")
        if int(self.n) != self.n or self.n < 2:
            raise MarketError(f"need at least 2 grid nodes, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def dt(self) -> float:
        return (self.tf - self.t0) / (self.n - 1)

    @property
    def length(self) -> float:
        return self.tf - self.t0

    @property
    def nodes(self) -> np.ndarray:
        t = self.t0 + self.dt * np.arange(self.n)
        t[-1] = self.tf
        return t

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.n, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


@dataclass(frozen=True)
class AffinePath:
    """Coefficient path a + b*t."""

    a: float
    b: float = 0.0

    def value(self, t):
        return self.a + self.b * np.asarray(t, dtype=float) if np.ndim(t) else self.a + self.b * t

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b}

    @classmethod
    def coerce(cls, obj) -> "AffinePath":
        if isinstance(obj, AffinePath):
            return obj
        if isinstance(obj, Mapping):
            return cls(float(obj["a"]), float(obj.get("b", 0.0)))
        return cls(float(obj))


@dataclass(frozen=True)
class SellerParams:
    """Demand coefficients, endowment and bounds of one seller.

    ``gamma`` maps a competitor's index to the cross-price coefficient path.
    """

    alpha: AffinePath
    beta: AffinePath
    gamma: Mapping[int, AffinePath]
    inventory_K: float
    pi_min: float
    pi_max: float
    d_min: float
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "alpha", AffinePath.coerce(self.alpha))
        object.__setattr__(self, "beta", AffinePath.coerce(self.beta))
        object.__setattr__(
            self, "gamma", {int(r): AffinePath.coerce(g) for r, g in dict(self.gamma).items()}
        )
        if not self.inventory_K > 0:
            raise MarketError(f"inventory must be positive, got {self.inventory_K}")
        if not 0 <= self.pi_min < self.pi_max:
            raise MarketError(f"need 0 <= pi_min < pi_max, got [{self.pi_min}, {self.pi_max}]")
        if not self.d_min > 0:
            raise MarketError(f"d_min must be strictly positive, got {self.d_min}")


@dataclass(frozen=True)
class UncertaintyModel:
    """Nominal multiplier path xi0(t) and robust magnitude tau."""

    xi0: AffinePath
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "xi0", AffinePath.coerce(self.xi0))
        if not self.tau >= 0:
            raise MarketError(f"tau must be nonnegative, got {self.tau}")

    def with_tau(self, tau: float) -> "UncertaintyModel":
        return UncertaintyModel(self.xi0, tau)


@dataclass(frozen=True)
class MarketSpec:
    grid: TimeGrid
    rho: float
    sellers: tuple
    uncertainty: tuple

    def __post_init__(self):
        object.__setattr__(self, "sellers", tuple(self.sellers))
        unc = self.uncertainty
        if isinstance(unc, UncertaintyModel):
            unc = (unc,) * len(self.sellers)
        object.__setattr__(self, "uncertainty", tuple(unc))
        if not self.sellers:
            raise MarketError("a market needs at least one seller")
        if len(self.uncertainty) != len(self.sellers):
            raise MarketError("need one uncertainty model per seller")
        if not (math.isfinite(self.rho) and self.rho >= 0):
            raise MarketError(f"rho must be finite and nonnegative, got {self.rho}")
        for s, sp in enumerate(self.sellers):
            for r in sp.gamma:
                if r == s or not 0 <= r < len(self.sellers):
                    raise MarketError(f"seller index {s}: gamma references invalid seller index {r}")

    @property
    def n_sellers(self) -> int:
        return len(self.sellers)

    def with_tau(self, taus) -> "MarketSpec":
        """Copy with the robust magnitude replaced (scalar or one per seller)."""
        if np.isscalar(taus):
            taus = [taus] * self.n_sellers
        unc = tuple(u.with_tau(float(t)) for u, t in zip(self.uncertainty, taus))
        return MarketSpec(self.grid, self.rho, self.sellers, unc)

    def with_grid(self, n: int) -> "MarketSpec":
        return MarketSpec(TimeGrid(self.grid.t0, self.grid.tf, n), self.rho, self.sellers, self.uncertainty)

    def with_seller(self, s: int, **changes) -> "MarketSpec":
        from dataclasses import replace

        sellers = list(self.sellers)
        sellers[s] = replace(sellers[s], **changes)
        return MarketSpec(self.grid, self.rho, sellers, self.uncertainty)

    def seller(self, s: int) -> SellerParams:
        if not isinstance(s, (int, np.integer)) or not 0 <= s < self.n_sellers:
            raise KeyError(f"unknown seller id {s!r}")
        return self.sellers[s]


@dataclass(frozen=True)
class StrategyProfile:
    """Price and planned-demand paths, one row per seller."""

    prices: np.ndarray
    plans: np.ndarray

    def __post_init__(self):
        p = np.array(self.prices, dtype=float, ndmin=2)
        d = np.array(self.plans, dtype=float, ndmin=2)
        if p.shape != d.shape:
            raise ValueError(f"price shape {p.shape} != plan shape {d.shape}")
        p.flags.writeable = False
        d.flags.writeable = False
        object.__setattr__(self, "prices", p)
        object.__setattr__(self, "plans", d)

    @property
    def n_sellers(self) -> int:
        return self.prices.shape[0]

    def check_shape(self, market: MarketSpec) -> None:
        want = (market.n_sellers, market.grid.n)
        if self.prices.shape != want:
            raise ValueError(f"profile shape {self.prices.shape} does not match market {want}")


def _prices_vector(market: MarketSpec, prices_at_t) -> np.ndarray:
    p = np.asarray(prices_at_t, dtype=float)
    if p.shape != (market.n_sellers,):
        raise ValueError(f"expected {market.n_sellers} prices, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("prices must be finite")
    return p


def base_factor(market: MarketSpec, s: int, prices_at_t, t: float) -> float:
    """alpha_s(t) - beta_s(t) pi_s + sum_r gamma_sr(t) pi_r."""
    sp = market.seller(s)
    p = _prices_vector(market, prices_at_t)
    if not math.isfinite(t):
        raise ValueError("time must be finite")
    val = sp.alpha.value(t) - sp.beta.value(t) * p[s]
    for r, g in sp.gamma.items():
        val += g.value(t) * p[r]
    return float(val)


def eval_observed_demand(market: MarketSpec, s: int, prices_at_t, xi: float, t: float) -> float:
    """Observed demand (alpha - beta pi_s + sum gamma pi_r) * xi; may be negative."""
    if not math.isfinite(xi):
        raise ValueError("xi must be finite")
    return base_factor(market, s, prices_at_t, t) * xi


def grad_xi_magnitude(market: MarketSpec, s: int, prices_at_t, t: float) -> float:
    return abs(base_factor(market, s, prices_at_t, t))


def robust_demand_bound(market: MarketSpec, s: int, prices_at_t, t: float) -> float:
    """Largest plan that stays below observed demand for every xi in the band at time t."""
    u = market.uncertainty[s]
    base = base_factor(market, s, prices_at_t, t)
    return base * u.xi0.value(t) - u.tau * abs(base)


def coefficient_tables(market: MarketSpec) -> dict:
    """Node values of every coefficient, shape (S, n) or (S, S, n) for gamma."""
    t = market.grid.nodes
    S = market.n_sellers
    alpha = np.array([sp.alpha.value(t) for sp in market.sellers])
    beta = np.array([sp.beta.value(t) for sp in market.sellers])
    gamma = np.zeros((S, S, t.size))
    for s, sp in enumerate(market.sellers):
        for r, g in sp.gamma.items():
            gamma[s, r] = g.value(t)
    xi0 = np.array([u.xi0.value(t) for u in market.uncertainty])
    tau = np.array([u.tau for u in market.uncertainty])
    return {
        "t": t,
        "alpha": alpha,
        "beta": beta,
        "gamma": gamma,
        "xi0": xi0,
        "tau": tau,
        "discount": np.exp(-market.rho * t),
        "weights": market.grid.weights,
    }


def base_factor_paths(tables: dict, prices: np.ndarray) -> np.ndarray:
    """Vectorised base factor for every seller and node."""
    prices = np.asarray(prices, dtype=float)
    cross = np.einsum("srn,rn->sn", tables["gamma"], prices)
    return tables["alpha"] - tables["beta"] * prices + cross


def demand_multiplier(tables: dict, mode: str) -> np.ndarray:
    """Per-node multiplier on the base factor: xi0 - tau (robust) or xi0 (nominal)."""
    _check_mode(mode)
    if mode == ROBUST:
        return tables["xi0"] - tables["tau"][:, None]
    return tables["xi0"].copy()


def discounted_revenue(market: MarketSpec, profile: StrategyProfile) -> np.ndarray:
    """Trapezoidal integral of exp(-rho t) pi_s(t) D_s(t), per seller."""
    profile.check_shape(market)
    g = market.grid
    integrand = np.exp(-market.rho * g.nodes) * profile.prices * profile.plans
    return integrand @ g.weights


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    detail: str = ""
    witness: dict = field(default_factory=dict)


@dataclass
class AssumptionReport:
    checks: list

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            c.name: {"passed": c.passed, "detail": c.detail, "witness": c.witness} for c in self.checks
        }


def check_assumptions(market: MarketSpec, n_sweep: int = 41) -> AssumptionReport:
    """Grid-level checks of the regularity conditions for the linear model.

    Failures are reported, never raised.
    """
    tab = coefficient_tables(market)
    t = tab["t"]
    checks = []

    bad = [s for s, sp in enumerate(market.sellers) if not 0 <= sp.pi_min < sp.pi_max]
    checks.append(AssumptionCheck("A1", not bad, "price boxes ordered", {"seller": bad[0]} if bad else {}))
    bad = [s for s, sp in enumerate(market.sellers) if not sp.d_min > 0]
    checks.append(AssumptionCheck("A2", not bad, "d_min > 0", {"seller": bad[0]} if bad else {}))
    checks.append(AssumptionCheck("A3", True, "linear demand is concave by construction"))

    s_bad, i_bad = np.nonzero(tab["beta"] <= 0)
    checks.append(
        AssumptionCheck(
            "A4",
            s_bad.size == 0,
            "own-price coefficient positive on grid",
            {"seller": int(s_bad[0]), "t": float(t[i_bad[0]])} if s_bad.size else {},
        )
    )
    neg = np.argwhere(tab["gamma"] < 0)
    checks.append(
        AssumptionCheck(
            "gamma_nonnegative",
            neg.size == 0,
            "cross-price coefficients nonnegative on grid",
            {"seller": int(neg[0][0]), "competitor": int(neg[0][1]), "t": float(t[neg[0][2]])}
            if neg.size
            else {},
        )
    )
    checks.append(AssumptionCheck("A5", True, "demand is linear in xi by construction"))

    # A6 by sweeping own price across the box with competitors at their floors:
    # the signed factor must decrease and |factor| must not decrease past the root.
    witness = {}
    for s, sp in enumerate(market.sellers):
        grid_p = np.linspace(sp.pi_min, sp.pi_max, n_sweep)
        for i, ti in enumerate(t):
            comp = np.array([o.pi_min for o in market.sellers], dtype=float)
            vals = []
            for p in grid_p:
                comp[s] = p
                vals.append(base_factor(market, s, comp, ti))
            vals = np.array(vals)
            if np.any(np.diff(vals) >= 0):
                witness = {"seller": s, "t": float(ti), "reason": "factor not decreasing"}
                break
            mag = np.abs(vals)
            past = vals <= 0
            if np.any(np.diff(mag[past]) < -1e-12):
                witness = {"seller": s, "t": float(ti), "reason": "magnitude decreases past choke"}
                break
        if witness:
            break
    checks.append(AssumptionCheck("A6", not witness, "gradient magnitude monotone past choke", witness))

    mult = tab["xi0"] - tab["tau"][:, None]
    s_bad, i_bad = np.nonzero(mult <= 0)
    checks.append(
        AssumptionCheck(
            "xi_positive",
            s_bad.size == 0,
            "worst-case multiplier xi0 - tau positive on grid",
            {"seller": int(s_bad[0]), "t": float(t[i_bad[0]]), "value": float(mult[s_bad[0], i_bad[0]])}
            if s_bad.size
            else {},
        )
    )
    return AssumptionReport(checks)


@dataclass(frozen=True)
class Violation:
    constraint: str
    seller: int
    node: int | None
    amount: float


def feasibility_check(
    market: MarketSpec, profile: StrategyProfile, mode: str = ROBUST, tol: float = 1e-6
) -> list:
    """List every violated constraint of the per-seller strategy sets."""
    _check_mode(mode)
    if not tol > 0:
        raise ValueError("tol must be positive")
    profile.check_shape(market)
    tab = coefficient_tables(market)
    w = tab["weights"]
    out = []
    base = base_factor_paths(tab, profile.prices)
    if mode == ROBUST:
        bound = base * tab["xi0"] - tab["tau"][:, None] * np.abs(base)
    else:
        bound = base * tab["xi0"]
    for s, sp in enumerate(market.sellers):
        p, d = profile.prices[s], profile.plans[s]
        for i in np.nonzero(p < sp.pi_min - tol)[0]:
            out.append(Violation("price_min", s, int(i), float(sp.pi_min - p[i])))
        for i in np.nonzero(p > sp.pi_max + tol)[0]:
            out.append(Violation("price_max", s, int(i), float(p[i] - sp.pi_max)))
        for i in np.nonzero(d < sp.d_min - tol)[0]:
            out.append(Violation("plan_min", s, int(i), float(sp.d_min - d[i])))
        gap = float(w @ d) - sp.inventory_K
        if abs(gap) > tol * max(1.0, sp.inventory_K):
            out.append(Violation("inventory", s, None, gap))
        excess = d - bound[s]
        for i in np.nonzero(excess > tol * np.maximum(1.0, np.abs(bound[s])))[0]:
            out.append(Violation(f"demand_{mode}", s, int(i), float(excess[i])))
    return out


def choke_price(market: MarketSpec, s: int) -> float:
    """Single-seller choke price alpha(t0)/beta(tf) used to size default price caps."""
    sp = market.seller(s)
    return float(sp.alpha.value(market.grid.t0) / sp.beta.value(market.grid.tf))


def make_seller(
    alpha, beta, gamma: Mapping[int, object] | None, K: float, *, pi_min=0.0, pi_max=None, d_min=None,
    grid: TimeGrid | None = None, name: str = "",
) -> SellerParams:
    """Build a seller with the default boxes: cap at 1.2x the choke price, tiny demand floor."""
    alpha, beta = AffinePath.coerce(alpha), AffinePath.coerce(beta)
    if pi_max is None:
        if grid is None:
            raise ValueError("grid needed to size the default price cap")
        pi_max = float(math.ceil(1.2 * alpha.value(grid.t0) / beta.value(grid.tf)))
    if d_min is None:
        if grid is None:
            raise ValueError("grid needed to size the default demand floor")
        d_min = 1e-6 * K / grid.length
    return SellerParams(alpha, beta, gamma or {}, K, pi_min, pi_max, d_min, name)


def uniform_profile(values: Sequence[float], n: int) -> np.ndarray:
    return np.repeat(np.asarray(values, dtype=float)[:, None], n, axis=1)
