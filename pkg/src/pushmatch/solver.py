"""Solvers for ``argmin_{rho_x} D(G # rho_x, rho_y)`` on tabulated maps.

Every measure of the form ``G # rho_x`` is supported in the range ``R`` and,
through the first-preimage left inverse, every measure supported in ``R``
arises this way. The solvers therefore optimize over weights on ``R`` and
pull the optimum back to the domain.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .divergence import (
    PhiGenerator,
    divergence_from_weights,
    divergence_terms,
    get_generator,
    predicted_phi_min,
)
from .errors import (
    DegenerateNormalizer,
    GridTooFine,
    LengthMismatch,
    NonSmoothGenerator,
    RangeTooLarge,
    VerificationError,
    ZeroMassOnRange,
)
from .measure import (
    DiscreteMeasure,
    ForwardMap,
    conditional_restrict,
    left_inverse_pullback,
    mass_in_range,
    match_points,
    pushforward,
)
from .transport import (
    GroundMetric,
    predicted_wasserstein_min,
    projection_pushforward,
    wasserstein_exact,
)

ORACLE_MAX_RANGE = 4
ORACLE_MAX_STEPS = 200
WASSERSTEIN_CHECK_TOL = 1e-9


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 10_000
    tol: float = 1e-10
    step: float = 1.0
    backtrack: float = 0.5
    patience: int = 5

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if not self.step > 0:
            raise ValueError("step must be > 0")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack must lie in (0, 1)")


@dataclass
class SolveResult:
    """Minimizer over the domain, its pushforward, and solve diagnostics."""

    rho_x_star: DiscreteMeasure
    pushforward_star: DiscreteMeasure
    objective: float
    nu1: float
    nu0: float
    iterations: int = 0
    objective_trace: list[float] = field(default_factory=list)
    status: str = "converged"
    solver: str = ""
    options: dict = field(default_factory=dict)
    wall_time_ms: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "solver": self.solver,
            "status": self.status,
            "objective": self.objective,
            "nu1": self.nu1,
            "nu0": self.nu0,
            "iterations": self.iterations,
            "objective_trace": list(self.objective_trace),
            "rho_x_star": self.rho_x_star.to_dict(),
            "pushforward_star": self.pushforward_star.to_dict(),
            "options": self.options,
            "wall_time_ms": self.wall_time_ms,
            "diagnostics": self.diagnostics,
        }


class PhiObjective:
    """``F = D_phi(A w || rho_y)`` as a function of domain or range weights.

    ``A`` aggregates domain weights onto range points. Range points are
    aligned against ``rho_y`` once; atoms of ``rho_y`` off the range only
    ever see ``p = 0`` and add the constant ``nu0 * phi(0+)``.
    """

    def __init__(self, fmap: ForwardMap, rho_y: DiscreteMeasure, phi: str | PhiGenerator):
        self.fmap = fmap
        self.phi = get_generator(phi)
        self.A = fmap.aggregation_matrix()
        idx = match_points(rho_y.points, fmap.range_points)
        self.q_range = np.zeros(len(fmap.range_points))
        np.add.at(self.q_range, idx[idx >= 0], rho_y.weights[idx >= 0])
        self.q_out = rho_y.weights[idx < 0]
        self.nu1, self.nu0 = mass_in_range(rho_y, fmap.range_points)
        self.constant = float(divergence_terms(self.phi, np.zeros_like(self.q_out), self.q_out).sum())

    def range_value(self, r) -> float | np.ndarray:
        r = np.asarray(r, dtype=float)
        return divergence_from_weights(self.phi, r, self.q_range) + self.constant

    def range_grad(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        q = self.q_range
        pos = q > 0
        g = np.empty_like(r)
        g[pos] = self.phi.derivative(r[pos] / q[pos])
        g[~pos] = self.phi.phi_prime_at_inf
        return g

    def value(self, w) -> float:
        return self.range_value(self.A @ np.asarray(w, dtype=float))

    def grad(self, w) -> np.ndarray:
        return self.A.T @ self.range_grad(self.A @ np.asarray(w, dtype=float))


def _range_measure(fmap: ForwardMap, r: np.ndarray) -> DiscreteMeasure:
    return DiscreteMeasure(fmap.range_points, r / r.sum())


def _finish(fmap, push_star, **kw) -> SolveResult:
    rho_x = left_inverse_pullback(fmap, push_star)
    return SolveResult(rho_x_star=rho_x, pushforward_star=pushforward(fmap, rho_x), **kw)


def solve_phi_closed_form(fmap: ForwardMap, rho_y: DiscreteMeasure, phi: str | PhiGenerator) -> SolveResult:
    """Closed-form minimizer for a phi-divergence objective.

    The optimal pushforward is ``rho_y`` conditioned on the range and the
    optimal value is ``nu1 * phi(1/nu1) + nu0 * phi(0+)``.
    """
    t0 = time.perf_counter()
    phi = get_generator(phi)
    nu1, nu0 = mass_in_range(rho_y, fmap.range_points)
    if not nu1 > 0:
        raise ZeroMassOnRange("rho_y puts no mass on the range; no finite minimizer to report")
    cond = conditional_restrict(rho_y, fmap.range_points)
    objective = predicted_phi_min(phi, nu1)
    return _finish(
        fmap,
        cond,
        objective=objective,
        nu1=nu1,
        nu0=nu0,
        objective_trace=[objective],
        solver=f"phi_closed_form:{phi.name}",
        wall_time_ms=1e3 * (time.perf_counter() - t0),
    )


def _kl_div(a, b):
    m = a > 0
    return float(np.sum(a[m] * np.log(a[m] / b[m])))


def solve_phi_iterative(
    fmap: ForwardMap,
    rho_y: DiscreteMeasure,
    phi: str | PhiGenerator,
    opts: SolverOptions | None = None,
) -> SolveResult:
    """Entropic mirror descent on the range simplex.

    Update ``r <- r * exp(-eta * grad F(r))`` followed by renormalization.
    The step ``eta`` starts at ``opts.step``, halves until the
    relative-smoothness bound ``F(r+) <= F(r) + <g, r+ - r> + KL(r+ || r) / eta``
    and plain descent both hold, and may double back up to ``opts.step``
    after an accepted step. Range points where ``rho_y`` has no mass are
    pinned at zero weight.

    Convergence requires both the objective change and the TV size of the
    step to stay below ``opts.tol`` for ``opts.patience`` consecutive
    iterations.
    """
    t0 = time.perf_counter()
    opts = opts or SolverOptions()
    phi = get_generator(phi)
    if not phi.strictly_convex:
        raise NonSmoothGenerator(f"{phi.name} is not handled by the iterative solver")
    obj = PhiObjective(fmap, rho_y, phi)
    if not obj.nu1 > 0:
        raise ZeroMassOnRange("rho_y puts no mass on the range")

    active = obj.q_range > 0
    # start from the pushforward of the uniform measure on the domain
    r = obj.A.sum(axis=1)
    r[~active] = 0.0
    r /= r.sum()
    F = obj.range_value(r)
    trace = [F]
    eta = opts.step
    calm = 0
    status = "max_iters"
    it = 0
    for it in range(1, opts.max_iters + 1):
        g = obj.range_grad(r)
        ga = g[active]
        while True:
            z = -eta * (ga - ga.min())
            r_new = np.zeros_like(r)
            r_new[active] = r[active] * np.exp(z)
            r_new /= r_new.sum()
            F_new = obj.range_value(r_new)
            bound = F + float(np.dot(g[active], r_new[active] - r[active])) + _kl_div(r_new[active], r[active]) / eta
            if F_new <= F and F_new <= bound + 1e-15:
                break
            eta *= opts.backtrack
            if eta < 1e-30:
                r_new, F_new = r, F
                break
        step_tv = 0.5 * float(np.abs(r_new - r).sum())
        dF = F - F_new
        r, F = r_new, F_new
        trace.append(F)
        eta = min(2.0 * eta, opts.step)
        if abs(dF) < opts.tol and step_tv < opts.tol:
            calm += 1
            if calm >= opts.patience:
                status = "converged"
                break
        else:
            calm = 0

    r[~active] = 0.0
    push = _range_measure(fmap, r)
    return _finish(
        fmap,
        push,
        objective=F,
        nu1=obj.nu1,
        nu0=obj.nu0,
        iterations=it,
        objective_trace=trace,
        status=status,
        solver=f"phi_iterative:{phi.name}",
        options=asdict(opts),
        wall_time_ms=1e3 * (time.perf_counter() - t0),
        diagnostics={"predicted": predicted_phi_min(phi, obj.nu1), "final_step": eta},
    )


def solve_wasserstein(
    fmap: ForwardMap, rho_y: DiscreteMeasure, metric: GroundMetric | None = None
) -> SolveResult:
    """Minimizer for a ``W_p`` objective: project ``rho_y`` onto the range.

    The optimal value from the projection formula is cross-checked against an
    exact transport solve; a disagreement above ``1e-9`` raises
    :class:`VerificationError`.
    """
    t0 = time.perf_counter()
    metric = metric or GroundMetric()
    R = fmap.range_points
    nu1, nu0 = mass_in_range(rho_y, R)
    proj = projection_pushforward(rho_y, R, metric)
    predicted = predicted_wasserstein_min(rho_y, R, metric)
    res = _finish(
        fmap,
        proj,
        objective=predicted,
        nu1=nu1,
        nu0=nu0,
        objective_trace=[predicted],
        solver=f"wasserstein:{metric.label}",
        options=metric.to_dict(),
    )
    lp_value, _ = wasserstein_exact(res.pushforward_star, rho_y, metric)
    gap = abs(lp_value - predicted)
    if gap > WASSERSTEIN_CHECK_TOL:
        raise VerificationError(f"exact W_p {lp_value!r} differs from projection value {predicted!r}")
    res.diagnostics = {"lp_value": lp_value, "lp_gap": gap}
    res.wall_time_ms = 1e3 * (time.perf_counter() - t0)
    return res


# -- brute-force oracle -------------------------------------------------------

_GRID_CACHE: dict[tuple[int, int], np.ndarray] = {}


def simplex_grid(k: int, steps: int) -> np.ndarray:
    """All integer vectors of length ``k`` summing to ``steps``, in lexicographic order."""
    key = (k, steps)
    if key not in _GRID_CACHE:
        if k == 1:
            grid = np.array([[steps]], dtype=np.int64)
        else:
            blocks = []
            for first in range(steps + 1):
                rest = simplex_grid(k - 1, steps - first)
                blocks.append(np.column_stack([np.full(len(rest), first), rest]))
            grid = np.vstack(blocks)
        grid.setflags(write=False)
        _GRID_CACHE[key] = grid
    return _GRID_CACHE[key]


@dataclass(frozen=True)
class OracleResult:
    best_pushforward: DiscreteMeasure
    best_value: float
    modulus: float
    grid_steps: int
    evaluations: int

    def __iter__(self):
        return iter((self.best_pushforward, self.best_value))


def brute_force_oracle(
    fmap: ForwardMap,
    rho_y: DiscreteMeasure,
    objective: str | PhiGenerator | GroundMetric,
    grid_steps: int = 200,
) -> OracleResult:
    """Exhaustive search over range-supported measures on a simplex grid.

    Evaluates the objective at every weight vector with resolution
    ``1/grid_steps`` on the range (at most four points) and keeps the best,
    ties resolved to the lexicographically smallest weight vector. The
    reported ``modulus`` is ``grid_steps`` times the largest objective change
    to a neighbouring grid point, an empirical Lipschitz scale for the
    discretization error.

    Unpacks as ``(best_pushforward, best_value)``.
    """
    R = fmap.range_points
    k = len(R)
    if k > ORACLE_MAX_RANGE:
        raise RangeTooLarge(f"range has {k} points; the oracle handles at most {ORACLE_MAX_RANGE}")
    if not 1 <= grid_steps <= ORACLE_MAX_STEPS:
        raise GridTooFine(f"grid_steps must lie in [1, {ORACLE_MAX_STEPS}]")
    grid = simplex_grid(k, grid_steps)
    W = grid / grid_steps

    if isinstance(objective, GroundMetric):
        def evaluate(rows):
            return np.array([
                wasserstein_exact(DiscreteMeasure(R, w), rho_y, objective)[0] for w in rows
            ])
    else:
        phi_obj = PhiObjective(fmap, rho_y, objective)

        def evaluate(rows):
            return phi_obj.range_value(rows)

    values = np.asarray(evaluate(W), dtype=float)
    best = int(np.argmin(values))
    best_value = float(values[best])

    nbrs = []
    g = grid[best]
    for i in range(k):
        for j in range(k):
            if i != j and g[i] > 0:
                h = g.copy()
                h[i] -= 1
                h[j] += 1
                nbrs.append(h)
    if nbrs:
        nv = np.asarray(evaluate(np.array(nbrs) / grid_steps), dtype=float)
        diffs = np.abs(nv - best_value)
        finite = diffs[np.isfinite(diffs)]
        modulus = grid_steps * float(finite.max()) if finite.size else math.inf
    else:
        modulus = 0.0
    return OracleResult(DiscreteMeasure(R, W[best]), best_value, modulus, grid_steps, len(W))


# -- variational Bayes ----------------------------------------------------------

def bayes_objective(rho: np.ndarray, prior: DiscreteMeasure, neg_log_lik: Sequence[float]) -> float:
    """``KL(rho || prior) + sum_x nll(x) rho(x)`` for weights aligned with the prior atoms."""
    rho = np.asarray(rho, dtype=float)
    pw = prior.weights
    nll = np.asarray(neg_log_lik, dtype=float)
    kl = divergence_from_weights(get_generator("kl"), rho, pw)
    return kl + float(np.dot(rho, nll))


def bayes_variational_posterior(prior: DiscreteMeasure, neg_log_lik: Sequence[float]) -> DiscreteMeasure:
    """Minimizer of ``KL(rho || prior) + E_rho[nll]``: weights proportional to ``prior * exp(-nll)``."""
    nll = np.asarray(neg_log_lik, dtype=float).ravel()
    if len(nll) != prior.size:
        raise LengthMismatch(f"{len(nll)} likelihood values for {prior.size} prior atoms")
    if not np.all(np.isfinite(nll)):
        raise ValueError("negative log-likelihood values must be finite")
    support = prior.weights > 0
    if not support.any():
        raise DegenerateNormalizer("prior has no positive mass")
    shifted = nll - nll[support].min()
    unnorm = prior.weights * np.exp(-shifted)
    Z = unnorm.sum()
    if not (Z > 0 and math.isfinite(Z)):
        raise DegenerateNormalizer("posterior normalizer underflowed")
    return DiscreteMeasure(prior.points, unnorm / Z)
