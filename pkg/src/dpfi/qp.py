"""Euclidean projection onto a polyhedron.

The polyhedron is ``{v : lb <= v <= ub, A v = b, G v <= h}``.  The workhorse is
a primal-dual active-set iteration on the KKT system (identity Hessian, so each
step is one sparse normal-equations solve).  It is warm-started from the
previous active set, which is what makes it cheap inside the fixed-point loop.
If it cycles, an interior-point solve (Clarabel) seeds a fresh active set.

``project_bruteforce`` enumerates active sets and is only meant as a test
oracle for tiny instances.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class ProjectionError(RuntimeError):
    """The projection did not reach the requested KKT residual."""

    def __init__(self, msg, best=None, residual=np.inf):
        super().__init__(msg)
        self.best = best
        self.residual = residual


@dataclass
class Polyhedron:
    lb: np.ndarray
    ub: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray

    def __post_init__(self):
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        n = self.lb.size
        self.A = sp.csr_matrix(self.A, shape=(np.shape(self.b)[0], n)) if self.A is not None else sp.csr_matrix((0, n))
        self.G = sp.csr_matrix(self.G, shape=(np.shape(self.h)[0], n)) if self.G is not None else sp.csr_matrix((0, n))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.h = np.asarray(self.h, dtype=float).reshape(-1)
        self._g_norm = np.sqrt(np.asarray(self.G.multiply(self.G).sum(axis=1)).ravel())
        self._a_norm = np.sqrt(np.asarray(self.A.multiply(self.A).sum(axis=1)).ravel())

    @property
    def n(self) -> int:
        return self.lb.size

    def violation(self, v: np.ndarray) -> float:
        """Largest constraint violation, general rows measured in distance units."""
        parts = [np.zeros(1), self.lb - v, v - self.ub]
        if self.G.shape[0]:
            parts.append((self.G @ v - self.h) / np.maximum(self._g_norm, 1e-300))
        if self.A.shape[0]:
            parts.append(np.abs(self.A @ v - self.b) / np.maximum(self._a_norm, 1e-300))
        return float(max(np.max(p) for p in parts))

    def dense(self):
        return self.A.toarray(), self.G.toarray()


@dataclass
class ActiveSet:
    """Working set: active inequality rows and variables fixed at a bound (-1 lower, +1 upper)."""

    rows: np.ndarray
    bounds: np.ndarray

    def copy(self) -> "ActiveSet":
        return ActiveSet(self.rows.copy(), self.bounds.copy())

    def key(self) -> bytes:
        return self.rows.tobytes() + self.bounds.tobytes()


@dataclass
class Projection:
    x: np.ndarray
    y_eq: np.ndarray
    y_in: np.ndarray
    z_lower: np.ndarray
    z_upper: np.ndarray
    residual: float
    iterations: int
    active: ActiveSet
    method: str = "pdas"
    extra: dict = field(default_factory=dict)


def kkt_residual(P: Polyhedron, point, x, y_eq, y_in, z_lo, z_up) -> float:
    """Max of stationarity, primal, dual and complementarity residuals.

    Complementarity uses the natural residual min(multiplier, slack) with both
    in distance units, so it does not scale with how far ``point`` lies outside.
    """
    stat = x - point + P.A.T @ y_eq + P.G.T @ y_in - z_lo + z_up
    res = [np.max(np.abs(stat), initial=0.0), P.violation(x)]
    res.append(max(np.max(-y_in, initial=0.0), np.max(-z_lo, initial=0.0), np.max(-z_up, initial=0.0)))
    if P.G.shape[0]:
        slack = (P.h - P.G @ x) / np.maximum(P._g_norm, 1e-300)
        res.append(np.max(np.abs(np.minimum(y_in * P._g_norm, slack)), initial=0.0))
    lo_gap = np.where(np.isfinite(P.lb), x - P.lb, np.inf)
    up_gap = np.where(np.isfinite(P.ub), P.ub - x, np.inf)
    res.append(np.max(np.abs(np.minimum(z_lo, lo_gap)), initial=0.0))
    res.append(np.max(np.abs(np.minimum(z_up, up_gap)), initial=0.0))
    return float(max(res))


def _initial_active(P: Polyhedron, point) -> ActiveSet:
    rows = (P.G @ point > P.h) if P.G.shape[0] else np.zeros(0, bool)
    bounds = np.zeros(P.n, dtype=np.int8)
    bounds[point < P.lb] = -1
    bounds[point > P.ub] = 1
    return ActiveSet(np.asarray(rows, bool), bounds)


def _solve_working_set(P: Polyhedron, point, ws: ActiveSet):
    """Minimise 0.5||v - point||^2 with the working set held at equality."""
    fixed = ws.bounds != 0
    free = ~fixed
    xb = np.where(ws.bounds < 0, P.lb, P.ub)
    E = sp.vstack([P.A, P.G[ws.rows]], format="csc") if P.G.shape[0] else P.A.tocsc()
    e = np.concatenate([P.b, P.h[ws.rows]])
    v = point.copy()
    v[fixed] = xb[fixed]
    y = np.zeros(E.shape[0])
    if E.shape[0]:
        Ef = E[:, free]
        base = E[:, fixed] @ xb[fixed] - e
        M = (Ef @ Ef.T).tocsc()
        keep = M.diagonal() > 0  # rows with no free variable carry no multiplier
        solve = _factorize(M[keep][:, keep])
        vf = point[free]
        for _ in range(3):
            # iterative refinement against the working rows
            r = Ef @ vf + base
            if not np.all(np.isfinite(r)):
                break
            dy = np.zeros_like(y)
            dy[keep] = solve(r[keep])
            y += dy
            vf = vf - Ef.T @ dy
            if np.max(np.abs(Ef @ vf + base)[keep], initial=0.0) <= 1e-14 * (1.0 + np.max(np.abs(vf), initial=0.0)):
                break
        v[free] = vf
    m = P.A.shape[0]
    y_eq = y[:m]
    y_in = np.zeros(P.G.shape[0])
    y_in[ws.rows] = y[m:]
    r = v - point + P.A.T @ y_eq + P.G.T @ y_in
    z_lo = np.where(ws.bounds < 0, r, 0.0)
    z_up = np.where(ws.bounds > 0, -r, 0.0)
    return v, y_eq, y_in, z_lo, z_up


def _factorize(M):
    """Solver for the normal-equations matrix; least squares if LU fails."""
    try:
        with np.errstate(all="ignore"):
            lu = spla.splu(M)
        probe = lu.solve(np.ones(M.shape[0]))
        if np.all(np.isfinite(probe)):
            return lu.solve
    except RuntimeError:
        pass
    dense = M.toarray()
    return lambda rhs: np.linalg.lstsq(dense, rhs, rcond=None)[0]


def _pdas(P: Polyhedron, point, ws: ActiveSet, tol: float, max_iter: int):
    seen = set()
    best = None
    for it in range(1, max_iter + 1):
        v, y_eq, y_in, z_lo, z_up = _solve_working_set(P, point, ws)
        res = kkt_residual(P, point, v, y_eq, y_in, z_lo, z_up)
        if best is None or res < best[0]:
            best = (res, v, y_eq, y_in, z_lo, z_up, ws.copy(), it)
        new = ws.copy()
        if P.G.shape[0]:
            slack = (P.G @ v - P.h) / np.maximum(P._g_norm, 1e-300)
            new.rows = np.where(ws.rows, y_in > 0, slack > 0)
        below = P.lb - v
        above = v - P.ub
        new.bounds = np.zeros_like(ws.bounds)
        new.bounds[np.where(ws.bounds < 0, z_lo > 0, below > 0)] = -1
        new.bounds[np.where(ws.bounds > 0, z_up > 0, above > 0)] = 1
        if new.key() == ws.key():
            return best, res <= tol
        k = new.key()
        if k in seen:
            return best, False
        seen.add(k)
        ws = new
    return best, False


def _active_from_point(P: Polyhedron, x, y_in=None, z_lo=None, z_up=None, tol=1e-7) -> ActiveSet:
    scale = 1.0 + np.abs(x)
    rows = np.zeros(P.G.shape[0], bool)
    if P.G.shape[0]:
        slack = (P.h - P.G @ x) / np.maximum(P._g_norm, 1e-300)
        rows = slack <= tol * (1.0 + np.abs(P.h) / np.maximum(P._g_norm, 1e-300))
    bounds = np.zeros(P.n, np.int8)
    bounds[(x - P.lb) <= tol * scale] = -1
    bounds[(P.ub - x) <= tol * scale] = 1
    return ActiveSet(rows, bounds)


def _clarabel_projection(P: Polyhedron, point):
    import clarabel

    n = P.n
    rows = [P.A, P.G]
    rhs = [P.b, P.h]
    fin_lo = np.isfinite(P.lb)
    fin_up = np.isfinite(P.ub)
    eye = sp.eye(n, format="csr")
    rows += [-eye[fin_lo], eye[fin_up]]
    rhs += [-P.lb[fin_lo], P.ub[fin_up]]
    Acon = sp.vstack(rows, format="csc")
    bcon = np.concatenate(rhs)
    cones = [clarabel.ZeroConeT(P.A.shape[0]), clarabel.NonnegativeConeT(Acon.shape[0] - P.A.shape[0])]
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = settings.tol_gap_rel = 1e-11
    settings.tol_feas = 1e-11
    solver = clarabel.DefaultSolver(sp.eye(n, format="csc"), -point, Acon, bcon, cones, settings)
    sol = solver.solve()
    return np.asarray(sol.x)


def project(P: Polyhedron, point, tol: float = 1e-8, warm: ActiveSet | None = None, max_iter: int = 60) -> Projection:
    """Project ``point`` onto ``P``; raises ProjectionError if the KKT residual stays above tol."""
    point = np.asarray(point, dtype=float)
    if point.shape != (P.n,):
        raise ValueError(f"point has shape {point.shape}, expected ({P.n},)")
    ws = warm.copy() if warm is not None else _initial_active(P, point)
    best, ok = _pdas(P, point, ws, tol, max_iter)
    method = "pdas"
    if not ok and warm is not None:
        best2, ok = _pdas(P, point, _initial_active(P, point), tol, max_iter)
        if best2[0] < best[0]:
            best = best2
    if not ok:
        method = "clarabel+pdas"
        x0 = _clarabel_projection(P, point)
        for t in (1e-7, 1e-5, 1e-9):
            best2, ok = _pdas(P, point, _active_from_point(P, x0, tol=t), tol, max_iter)
            if best2[0] < best[0]:
                best = best2
            if ok:
                break
    res, v, y_eq, y_in, z_lo, z_up, ws, it = best
    if res > tol:
        raise ProjectionError(f"projection residual {res:.3e} above tolerance {tol:.1e}", best=v, residual=res)
    return Projection(v, y_eq, y_in, z_lo, z_up, res, it, ws, method)


def project_bruteforce(P: Polyhedron, point, feas_tol: float = 1e-12) -> np.ndarray:
    """Enumerate every subset of inequality/bound rows held at equality.

    Each subset yields the minimum-norm correction onto its affine hull; the
    feasible candidate closest to ``point`` is the projection.  Exponential in
    the number of rows, so only for instances with a dozen or so constraints.
    Rows are normalized first, so ``feas_tol`` is relative to the point's scale
    in distance units.
    """
    point = np.asarray(point, dtype=float)
    A, G = P.dense()
    n = P.n
    eye = np.eye(n)
    fin_lo = np.isfinite(P.lb)
    fin_up = np.isfinite(P.ub)
    C_in = np.vstack([G, -eye[fin_lo], eye[fin_up]])
    d_in = np.concatenate([P.h, -P.lb[fin_lo], P.ub[fin_up]])
    norm_in = np.maximum(np.linalg.norm(C_in, axis=1), 1e-300)
    C_in, d_in = C_in / norm_in[:, None], d_in / norm_in
    norm_eq = np.maximum(np.linalg.norm(A, axis=1), 1e-300)
    A, b = A / norm_eq[:, None], P.b / norm_eq
    m_in = C_in.shape[0]
    if m_in > 20:
        raise ValueError(f"{m_in} inequality rows is too many for enumeration")
    masks = np.array(list(itertools.product([0.0, 1.0], repeat=m_in)))
    C = np.concatenate([np.broadcast_to(A, (masks.shape[0],) + A.shape), masks[:, :, None] * C_in], axis=1)
    d = np.concatenate([np.broadcast_to(b, (masks.shape[0], b.size)), masks * d_in], axis=1)
    r = np.einsum("kij,j->ki", C, point) - d
    V = point[None, :] - np.einsum("kji,ki->kj", np.linalg.pinv(C, rcond=1e-10), r)
    tol = feas_tol * (1.0 + np.abs(V).max(axis=1))
    ok = np.all(V @ C_in.T - d_in <= tol[:, None], axis=1)
    if A.shape[0]:
        ok &= np.all(np.abs(V @ A.T - b) <= tol[:, None], axis=1)
    if not np.any(ok):
        raise ProjectionError("no feasible active set found; polyhedron may be empty")
    dist = np.where(ok, np.sum((V - point) ** 2, axis=1), np.inf)
    return V[int(np.argmin(dist))]
