"""Exact optimal transport between discrete measures and projection onto a range.

The transportation LP is solved by the primal transportation simplex
(MODI / u-v method) on a spanning-tree basis. Every solve returns the dual
potentials of the final basis, so optimality can be certified without
trusting the pivoting code.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyRange, SupportTooLarge
from .measure import DiscreteMeasure, Point, _lex_order, as_points, make_measure

MAX_SUPPORT = 512
PLAN_CLAMP = 1e-12


@dataclass(frozen=True)
class GroundMetric:
    """Ground distance ``d`` (``"l2"`` or ``"l1"``) and transport exponent ``p >= 1``."""

    kind: str = "l2"
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in ("l2", "l1"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if not (self.p >= 1 and math.isfinite(self.p)):
            raise ValueError(f"p must be a finite number >= 1, got {self.p!r}")

    @property
    def label(self) -> str:
        p = int(self.p) if float(self.p).is_integer() else self.p
        return f"{self.kind}_p{p}"

    def pairwise(self, X, Y) -> np.ndarray:
        """Distance matrix ``d(X_i, Y_j)``."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        diff = X[:, None, :] - Y[None, :, :]
        if self.kind == "l2":
            return np.sqrt((diff**2).sum(axis=2))
        return np.abs(diff).sum(axis=2)

    def distance(self, x, y) -> float:
        return float(self.pairwise(np.atleast_2d(x), np.atleast_2d(y))[0, 0])

    def cost_matrix(self, X, Y) -> np.ndarray:
        D = self.pairwise(X, Y)
        return D if self.p == 1 else D**self.p

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": self.p}

    @classmethod
    def from_dict(cls, data: dict) -> "GroundMetric":
        return cls(kind=data.get("kind", "l2"), p=float(data.get("p", 1.0)))


@dataclass(frozen=True, eq=False)
class Coupling:
    """Transport plan between the supports of two measures.

    ``plan[i, j]`` is the mass moved from ``rows[i]`` to ``cols[j]``.
    ``row_duals``/``col_duals`` are the potentials of the optimal basis and
    ``cost`` the ``d^p`` matrix the plan was optimized against.
    """

    rows: np.ndarray
    cols: np.ndarray
    plan: np.ndarray
    cost: np.ndarray | None = None
    row_duals: np.ndarray | None = None
    col_duals: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "rows": self.rows.tolist(),
            "cols": self.cols.tolist(),
            "plan": self.plan.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Coupling":
        return cls(
            np.asarray(data["rows"], dtype=float),
            np.asarray(data["cols"], dtype=float),
            np.asarray(data["plan"], dtype=float),
        )


def _initial_basis(a, b, C):
    # least-cost rule; each step retires exactly one row or column so the
    # m + n - 1 chosen cells form a spanning tree
    m, n = C.shape
    s, d = a.astype(float).copy(), b.astype(float).copy()
    x = np.zeros((m, n))
    row_on = np.ones(m, bool)
    col_on = np.ones(n, bool)
    nr, nc = m, n
    basis = []
    for cell in np.argsort(C, axis=None, kind="stable"):
        i, j = divmod(int(cell), n)
        if not (row_on[i] and col_on[j]):
            continue
        t = min(s[i], d[j])
        row_exhausted = s[i] <= d[j]
        x[i, j] = t
        s[i] -= t
        d[j] -= t
        basis.append((i, j))
        if nr == 1 and nc == 1:
            break
        if nc == 1 or (row_exhausted and nr > 1):
            row_on[i] = False
            nr -= 1
        else:
            col_on[j] = False
            nc -= 1
    return x, basis


def _adjacency(basis, m, n):
    adj = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    return adj


def _potentials(basis, C):
    m, n = C.shape
    adj = _adjacency(basis, m, n)
    pot = np.full(m + n, np.nan)
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if np.isnan(pot[nb]):
                i, j = (node, nb - m) if node < m else (nb, node - m)
                pot[nb] = C[i, j] - pot[node]
                queue.append(nb)
    return pot[:m], pot[m:]


def _tree_path(basis, m, n, src, dst):
    adj = _adjacency(basis, m, n)
    parent = {src: None}
    queue = deque([src])
    while queue:
        node = queue.popleft()
        if node == dst:
            break
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    path = [dst]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def solve_transport(a, b, C, max_pivots: int | None = None):
    """Minimize ``<x, C>`` over nonnegative ``x`` with row sums ``a`` and column sums ``b``.

    Returns ``(plan, u, v)`` where ``u, v`` are dual potentials with
    ``u_i + v_j = C_ij`` on the final basis and ``u_i + v_j <= C_ij``
    elsewhere (up to rounding).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    m, n = C.shape
    x, basis = _initial_basis(a, b, C)
    tol = 1e-12 * max(1.0, float(np.abs(C).max()))
    if max_pivots is None:
        max_pivots = 50 * (m * n + m + n)
    degenerate_run = 0
    bland_after = 2 * (m + n)

    for _ in range(max_pivots):
        u, v = _potentials(basis, C)
        red = C - u[:, None] - v[None, :]
        if degenerate_run > bland_after:
            cand = np.flatnonzero(red.ravel() < -tol)
            if cand.size == 0:
                break
            cell = int(cand[0])
        else:
            cell = int(np.argmin(red))
            if red.flat[cell] >= -tol:
                break
        ie, je = divmod(cell, n)
        path = _tree_path(basis, m, n, ie, m + je)
        edges = []
        for k in range(len(path) - 1):
            s, t = path[k], path[k + 1]
            edges.append((s, t - m) if s < m else (t, s - m))
        L = len(edges)
        minus = [edges[k] for k in range(L) if (L - 1 - k) % 2 == 0]
        plus = [edges[k] for k in range(L) if (L - 1 - k) % 2 == 1]
        theta = min(x[c] for c in minus)
        leaving = min((c for c in minus if x[c] == theta), key=lambda c: c[0] * n + c[1])
        for c in minus:
            x[c] -= theta
        for c in plus:
            x[c] += theta
        x[ie, je] += theta
        x[leaving] = 0.0
        basis.remove(leaving)
        basis.append((ie, je))
        degenerate_run = degenerate_run + 1 if theta == 0 else 0
    else:
        raise RuntimeError("transportation simplex did not terminate")

    u, v = _potentials(basis, C)
    x[np.abs(x) <= PLAN_CLAMP] = 0.0
    x = np.maximum(x, 0.0)
    return x, u, v


def transport_vertex_enumeration(a, b, C, max_subsets: int = 250_000):
    """Brute-force transportation optimum over all basic feasible solutions.

    Every vertex of the transportation polytope is supported on a spanning
    tree of ``m + n - 1`` cells; enumerate the acyclic cell subsets, solve the
    marginal equations on each, keep the feasible ones, return the cheapest
    ``(value, plan)``. Intended for tiny problems (about 4 x 4).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    m, n = C.shape
    k = m + n - 1
    if math.comb(m * n, k) > max_subsets:
        raise SupportTooLarge(f"{m}x{n} is too large for vertex enumeration")
    # equality system with the redundant last column constraint dropped
    rhs = np.concatenate([a, b[:-1]])
    best_val, best_plan = math.inf, None
    for cells in itertools.combinations(range(m * n), k):
        parent = list(range(m + n))

        def find(z):
            while parent[z] != z:
                parent[z] = parent[parent[z]]
                z = parent[z]
            return z

        acyclic = True
        for c in cells:
            i, j = divmod(c, n)
            ri, rj = find(i), find(m + j)
            if ri == rj:
                acyclic = False
                break
            parent[ri] = rj
        if not acyclic:
            continue
        M = np.zeros((k, k))
        for col, c in enumerate(cells):
            i, j = divmod(c, n)
            M[i, col] = 1.0
            if j < n - 1:
                M[m + j, col] = 1.0
        sol = np.linalg.solve(M, rhs)
        if sol.min() < -1e-12:
            continue
        plan = np.zeros(m * n)
        plan[list(cells)] = np.maximum(sol, 0.0)
        plan = plan.reshape(m, n)
        val = float((plan * C).sum())
        if val < best_val:
            best_val, best_plan = val, plan
    return best_val, best_plan


def wasserstein_exact(mu: DiscreteMeasure, nu: DiscreteMeasure, metric: GroundMetric | None = None):
    """Exact ``W_p(mu, nu)`` and an optimal coupling.

    Parameters
    ----------
    mu, nu : DiscreteMeasure
        Measures of equal dimension with at most 512 atoms each.
    metric : GroundMetric, optional
        Ground distance and exponent; Euclidean with ``p = 1`` by default.

    Returns
    -------
    value : float
        ``(sum_ij plan_ij d(x_i, y_j)^p) ** (1/p)``.
    coupling : Coupling
        Optimal plan with the dual potentials that certify it.
    """
    metric = metric or GroundMetric()
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    if mu.size > MAX_SUPPORT or nu.size > MAX_SUPPORT:
        raise SupportTooLarge(f"supports are limited to {MAX_SUPPORT} atoms")
    C = metric.cost_matrix(mu.points, nu.points)
    plan, u, v = solve_transport(mu.weights, nu.weights, C)
    total = max(float((plan * C).sum()), 0.0)
    value = total if metric.p == 1 else total ** (1.0 / metric.p)
    return value, Coupling(mu.points, nu.points, plan, C, u, v)


def certificate(coupling: Coupling, a, b) -> dict:
    """LP duality diagnostics for a coupling produced by :func:`wasserstein_exact`."""
    C, u, v, x = coupling.cost, coupling.row_duals, coupling.col_duals, coupling.plan
    red = C - u[:, None] - v[None, :]
    primal = float((x * C).sum())
    dual = float(np.dot(a, u) + np.dot(b, v))
    return {
        "primal": primal,
        "dual": dual,
        "gap": abs(primal - dual),
        "dual_violation": float(max(0.0, -red.min())),
        "slackness": float(np.abs(x * red).max()),
        "min_entry": float(x.min()),
        "row_error": float(np.abs(x.sum(axis=1) - a).max()),
        "col_error": float(np.abs(x.sum(axis=0) - b).max()),
    }


def _sorted_range(range_pts, dim: int) -> np.ndarray:
    R = as_points(range_pts, dim) if len(range_pts) else np.empty((0, dim))
    if len(R) == 0:
        raise EmptyRange("the range is empty")
    return R[_lex_order(R)]


def _project_indices(Y: np.ndarray, R: np.ndarray, metric: GroundMetric) -> np.ndarray:
    # argmin returns the first minimizer, i.e. the lexicographically smallest
    return np.argmin(metric.pairwise(Y, R), axis=1)


def project_point(y, range_pts: Sequence, metric: GroundMetric | None = None) -> Point:
    """Nearest range point to ``y``; ties go to the lexicographically smallest."""
    metric = metric or GroundMetric()
    y = np.atleast_1d(np.asarray(y, dtype=float))
    R = _sorted_range(range_pts, len(y))
    return tuple(R[_project_indices(y[None, :], R, metric)[0]].tolist())


def projection_pushforward(
    rho_y: DiscreteMeasure, range_pts: Sequence, metric: GroundMetric | None = None
) -> DiscreteMeasure:
    """Image of ``rho_y`` under nearest-point projection onto the range."""
    metric = metric or GroundMetric()
    R = _sorted_range(range_pts, rho_y.dim)
    idx = _project_indices(rho_y.points, R, metric)
    return make_measure(R[idx], rho_y.weights)


def predicted_wasserstein_min(
    rho_y: DiscreteMeasure, range_pts: Sequence, metric: GroundMetric | None = None
) -> float:
    """``(sum_y rho_y(y) d(y, proj(y))^p)^(1/p)``: the optimal W_p value over range-supported measures."""
    metric = metric or GroundMetric()
    R = _sorted_range(range_pts, rho_y.dim)
    D = metric.pairwise(rho_y.points, R)
    dmin = D[np.arange(len(D)), _project_indices(rho_y.points, R, metric)]
    total = float(np.dot(rho_y.weights, dmin**metric.p))
    return total if metric.p == 1 else total ** (1.0 / metric.p)
