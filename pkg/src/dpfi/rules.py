"""Pricing rules with an explicit price-change lag, as extra linear rows.

Rows are expressed in the flat decision vector of ``Discretization``.  The
response rule references a future price; that value is frozen at the previous
fixed-point iterate (implicit lag), so only its right-hand side changes between
iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .model import ROBUST, demand_multiplier

RULE_KINDS = ("response", "monotone", "moving_average")


class RuleError(ValueError):
    pass


@dataclass(frozen=True)
class PricingRule:
    kind: str
    delta: float
    sigma: tuple = ()
    epsilon_start: float | None = None

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise RuleError(f"unknown rule kind {self.kind!r}; expected one of {RULE_KINDS}")
        if not self.delta > 0:
            raise RuleError("delta must be positive")
        sig = self.sigma
        if np.isscalar(sig):
            sig = (float(sig),)
        object.__setattr__(self, "sigma", tuple(float(x) for x in sig))
        if self.kind == "response" and (not self.sigma or min(self.sigma) <= 0):
            raise RuleError("response rule needs positive sigma per seller")

    def shift(self, dt: float) -> int:
        d = self.delta / dt
        k = int(round(d))
        if k < 1 or not math.isclose(d, k, rel_tol=1e-9, abs_tol=1e-9):
            raise RuleError(f"delta={self.delta} is not a positive integer multiple of dt={dt}")
        return k

    def sigma_for(self, s: int) -> float:
        return self.sigma[s] if len(self.sigma) > 1 else self.sigma[0]

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "delta": self.delta}
        if self.sigma:
            out["sigma"] = list(self.sigma)
        if self.epsilon_start is not None:
            out["epsilon_start"] = self.epsilon_start
        return out


@dataclass
class RuleRows:
    """Linear rows ``M u (= or <=) rhs`` with a label per row."""

    M: sp.csr_matrix
    rhs: np.ndarray
    equality: bool
    labels: list = field(default_factory=list)

    def __len__(self):
        return self.M.shape[0]


def response_rule_rows(rule: PricingRule, disc, prev_prices, mode: str = ROBUST) -> RuleRows:
    """pi_s(t+D) = pi_s(t) + sigma_s [h_s(pi(t)) - D_s(t)] with pi_s(t+D) frozen at prev_prices.

    Rearranged in current variables:
    (1 - sigma m beta) pi_s,i + sigma m sum_r gamma_sr pi_r,i - sigma D_s,i = prev_s,i+d - sigma m alpha
    where m is the demand multiplier for ``mode``.
    """
    if rule.kind != "response":
        raise RuleError("not a response rule")
    d = rule.shift(disc.grid.dt)
    tab = disc.tables
    mult = demand_multiplier(tab, mode)
    prev = np.asarray(prev_prices, dtype=float)
    S, n = disc.S, disc.n
    rows, cols, vals, rhs, labels = [], [], [], [], []
    r = 0
    for s in range(S):
        sig = rule.sigma_for(s)
        for i in range(n - d):
            m = mult[s, i]
            rows += [r, r]
            cols += [disc.price_index(s, i), disc.plan_index(s, i)]
            vals += [1.0 - sig * m * tab["beta"][s, i], -sig]
            for q in range(S):
                g = tab["gamma"][s, q, i]
                if q != s and g != 0.0:
                    rows.append(r)
                    cols.append(disc.price_index(q, i))
                    vals.append(sig * m * g)
            rhs.append(prev[s, i + d] - sig * m * tab["alpha"][s, i])
            labels.append(("response", s, i))
            r += 1
    M = sp.csr_matrix((vals, (rows, cols)), shape=(r, disc.N))
    return RuleRows(M, np.array(rhs), True, labels)


def monotone_rule_rows(rule: PricingRule, disc) -> RuleRows:
    """pi_s,i - pi_s,i+d <= 0."""
    if rule.kind != "monotone":
        raise RuleError("not a monotone rule")
    d = rule.shift(disc.grid.dt)
    rows, cols, vals, labels = [], [], [], []
    r = 0
    for s in range(disc.S):
        for i in range(disc.n - d):
            rows += [r, r]
            cols += [disc.price_index(s, i), disc.price_index(s, i + d)]
            vals += [1.0, -1.0]
            labels.append(("monotone", s, i))
            r += 1
    M = sp.csr_matrix((vals, (rows, cols)), shape=(r, disc.N))
    return RuleRows(M, np.zeros(r), False, labels)


def moving_average_rows(rule: PricingRule, disc) -> RuleRows:
    """pi_s,i+d <= (1/(t_i - t0)) sum_k int_{t0}^{t_i} pi_k.

    The sum over sellers is not divided by the number of sellers.  Nodes closer
    to t0 than ``epsilon_start`` (default one grid step) are skipped.
    """
    if rule.kind != "moving_average":
        raise RuleError("not a moving-average rule")
    g = disc.grid
    d = rule.shift(g.dt)
    eps = g.dt if rule.epsilon_start is None else rule.epsilon_start
    t = g.nodes
    rows, cols, vals, labels = [], [], [], []
    r = 0
    for s in range(disc.S):
        for i in range(disc.n - d):
            span = t[i] - g.t0
            if span < eps - 1e-12 or i == 0:
                continue
            wts = np.full(i + 1, g.dt)
            wts[0] = wts[-1] = 0.5 * g.dt
            wts /= span
            rows.append(r)
            cols.append(disc.price_index(s, i + d))
            vals.append(1.0)
            for k in range(disc.S):
                for j in range(i + 1):
                    rows.append(r)
                    cols.append(disc.price_index(k, j))
                    vals.append(-wts[j])
            labels.append(("moving_average", s, i))
            r += 1
    M = sp.csr_matrix((vals, (rows, cols)), shape=(r, disc.N))
    return RuleRows(M, np.zeros(r), False, labels)


def static_rows(rules, disc) -> list:
    """Rows that do not depend on the previous iterate."""
    out = []
    for rule in rules or ():
        if rule.kind == "monotone":
            out.append(monotone_rule_rows(rule, disc))
        elif rule.kind == "moving_average":
            out.append(moving_average_rows(rule, disc))
    return out


def lagged_rows(rules, disc, prev_prices, mode: str) -> list:
    return [response_rule_rows(r, disc, prev_prices, mode) for r in rules or () if r.kind == "response"]
