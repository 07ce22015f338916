"""Scenario generation, experiment runs and reports.

A *scenario* is one instance ``(G, rho_y)`` plus the objectives to run on
it. :func:`run_experiment` solves it every supported way and records each
check as ``{"value", "tol", "passed"}`` with ``passed = value <= tol`` so
that a report can be re-verified from its own numbers.
"""

from __future__ import annotations

import copy
import csv
import io
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import _json
from .divergence import GENERATORS, get_generator, phi_divergence, predicted_phi_min
from .errors import ConfigError, InvalidParams, PushMatchError, ZeroMassOnRange
from .measure import (
    EPS_POINT,
    DiscreteMeasure,
    ForwardMap,
    conditional_restrict,
    make_measure,
    mass_in_range,
    match_points,
    tv_distance,
)
from .solver import (
    ORACLE_MAX_RANGE,
    SolverOptions,
    brute_force_oracle,
    solve_phi_closed_form,
    solve_phi_iterative,
    solve_wasserstein,
)
from .transport import GroundMetric, projection_pushforward, wasserstein_exact

log = logging.getLogger(__name__)

KINDS = ("linear_overdetermined", "quadratic", "random_tabulated", "canonical")
LIMITS = {"m": 12, "n": 6, "support": 64}
OUT_OF_RANGE_MIN_SHIFT = 0.1  # far above 10 * EPS_POINT


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    kind: str
    map: ForwardMap
    rho_y: DiscreteMeasure
    metric: GroundMetric = field(default_factory=GroundMetric)
    generators: tuple[str, ...] = ("kl", "chi2", "hellinger", "tv")
    seed: int = 0
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "seed": self.seed,
            "params": self.params,
            "metric": self.metric.to_dict(),
            "generators": list(self.generators),
            "map": self.map.to_dict(),
            "rho_y": self.rho_y.to_dict(),
        }

    def to_json(self) -> str:
        return _json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        return cls(
            name=data["name"],
            kind=data.get("kind", "file"),
            map=ForwardMap.from_dict(data["map"]),
            rho_y=DiscreteMeasure.from_dict(data["rho_y"]),
            metric=GroundMetric.from_dict(data.get("metric", {})),
            generators=tuple(data.get("generators", GENERATORS)),
            seed=int(data.get("seed", 0)),
            params=data.get("params", {}),
        )


def _pick(rng: np.random.Generator, value, integer: bool = True):
    """A fixed value, or a draw from an inclusive ``[lo, hi]`` range."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise InvalidParams(f"ranges are [lo, hi], got {value!r}")
        lo, hi = value
        if integer:
            return int(rng.integers(int(lo), int(hi) + 1))
        return float(rng.uniform(float(lo), float(hi)))
    return int(value) if integer else float(value)


def _canonical() -> tuple[ForwardMap, DiscreteMeasure]:
    fmap = ForwardMap([[0.0], [1.0]], [[0.0], [1.0]])
    return fmap, make_measure([0.0, 1.0, 2.0], [0.3, 0.3, 0.4])


def _out_of_range_atoms(rng, R: np.ndarray, count: int) -> np.ndarray:
    # shift a range point along one coordinate axis; redraw on any collision
    out = []
    for _ in range(count):
        for _attempt in range(1000):
            base = R[rng.integers(len(R))].copy()
            axis = rng.integers(R.shape[1])
            shift = rng.uniform(OUT_OF_RANGE_MIN_SHIFT, 1.0) * rng.choice([-1.0, 1.0])
            base[axis] += shift
            taken = np.vstack([R] + ([np.array(out)] if out else []))
            if match_points(base[None, :], taken, 10 * EPS_POINT)[0] < 0:
                out.append(base)
                break
        else:
            raise InvalidParams("could not place an out-of-range atom")
    return np.array(out)


def generate_scenario(kind: str, params: dict | None = None, seed: int = 0, name: str | None = None) -> Scenario:
    """Build a seeded random instance.

    ``linear_overdetermined``
        ``G(theta) = A theta`` with ``A`` an ``n x m`` matrix (``n > m``,
        entries uniform in [-1, 1] unless ``A`` is given) on a uniform point
        cloud in ``[-1, 1]^m``.
    ``quadratic``
        ``G(theta) = theta**2`` componentwise on the grid
        ``spacing * {-h, ..., h}^m``; never injective.
    ``random_tabulated``
        Each of ``n_theta`` random domain points maps to one of
        ``n_images`` random codomain points.
    ``canonical``
        Identity on {0, 1} with ``rho_y = (0: 0.3, 1: 0.3, 2: 0.4)``.

    Every integer parameter accepts a ``[lo, hi]`` range drawn from the
    scenario's generator. ``rho_y`` mixes a full-support measure on the
    range (mass ``nu1``) with ``n_out`` atoms off the range.
    """
    if kind not in KINDS:
        raise InvalidParams(f"unknown scenario kind {kind!r}")
    params = dict(params or {})
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    rng = np.random.default_rng(seed)
    metric = GroundMetric.from_dict(params.get("metric", {}))
    generators = tuple(params.get("generators", GENERATORS))
    for g in generators:
        get_generator(g)
    name = name or f"{kind}-{seed}"

    if kind == "canonical":
        fmap, rho_y = _canonical()
        return Scenario(name, kind, fmap, rho_y, metric, generators, seed, params)

    if kind == "linear_overdetermined":
        m = _pick(rng, params.get("m", 1))
        n = _pick(rng, params.get("n", m + 1))
        if "A" in params:
            A = np.asarray(params["A"], dtype=float).reshape(n, m)
        else:
            A = rng.uniform(-1.0, 1.0, size=(n, m))
        if n <= m:
            raise InvalidParams(f"overdetermined needs n > m, got m={m}, n={n}")
        n_theta = _pick(rng, params.get("n_theta", 6))
        thetas = rng.uniform(-1.0, 1.0, size=(n_theta, m))
        images = thetas @ A.T
    elif kind == "quadratic":
        m = _pick(rng, params.get("m", 1))
        h = _pick(rng, params.get("half_width", 1))
        spacing = _pick(rng, params.get("spacing", 1.0), integer=False)
        if h < 1:
            raise InvalidParams("half_width must be >= 1")
        axis = spacing * np.arange(-h, h + 1, dtype=float)
        thetas = np.array(np.meshgrid(*([axis] * m), indexing="ij")).reshape(m, -1).T
        images = thetas**2
        n, n_theta = m, len(thetas)
    else:
        m = _pick(rng, params.get("m", 1))
        n = _pick(rng, params.get("n", 1))
        n_theta = _pick(rng, params.get("n_theta", 6))
        n_images = _pick(rng, params.get("n_images", max(1, n_theta // 2)))
        if n_images < 1:
            raise InvalidParams("n_images must be >= 1")
        thetas = rng.uniform(-1.0, 1.0, size=(n_theta, m))
        pool = rng.uniform(-1.0, 1.0, size=(n_images, n))
        images = pool[rng.integers(n_images, size=n_theta)]

    if not (1 <= m <= LIMITS["m"] and 1 <= n <= LIMITS["n"]):
        raise InvalidParams(f"dimensions out of range: m={m}, n={n}")
    if not 1 <= n_theta <= LIMITS["support"]:
        raise InvalidParams(f"n_theta={n_theta} out of range")
    fmap = ForwardMap(thetas, images)
    R = fmap.range_points

    max_support = _pick(rng, params.get("max_support", LIMITS["support"]))
    room = min(max_support, LIMITS["support"]) - len(R)
    n_out = min(_pick(rng, params.get("n_out", [1, 3])), room)
    if n_out < 1:
        raise InvalidParams("no room for out-of-range atoms within max_support")
    nu1 = _pick(rng, params.get("nu1", [0.3, 0.9]), integer=False)
    if not 0.0 <= nu1 < 1.0:
        raise InvalidParams("nu1 must lie in [0, 1)")

    w_in = 0.9 * rng.dirichlet(np.ones(len(R))) + 0.1 / len(R)
    w_out = rng.dirichlet(np.ones(n_out))
    pts = np.vstack([R, _out_of_range_atoms(rng, R, n_out)])
    rho_y = make_measure(pts, np.concatenate([nu1 * w_in, (1.0 - nu1) * w_out]))
    return Scenario(name, kind, fmap, rho_y, metric, generators, seed, params)


# -- experiments -----------------------------------------------------------------

DEFAULT_TOLERANCES = {
    "tv_gap_to_conditional": 1e-6,
    "objective_gap": 1e-8,
    "oracle_gap": 5e-3,
    "oracle_slack": 1e-9,
    "tv_gap_to_projection": 0.0,
    "wasserstein_gap": 1e-9,
    "lower_bound_slack": 1e-9,
}


def _check(value, tol) -> dict:
    if value is None:
        return {"value": None, "tol": tol, "passed": None}
    value = float(value)
    return {"value": value, "tol": float(tol), "passed": bool(value <= tol)}


def _na(tol) -> dict:
    return {"value": None, "tol": float(tol), "passed": None}


@dataclass(frozen=True)
class ExperimentSettings:
    options: SolverOptions = field(default_factory=SolverOptions)
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    metrics: tuple[GroundMetric, ...] | None = None
    oracle_steps: int = 200
    oracle_max_range: int = ORACLE_MAX_RANGE
    oracle_generators: tuple[str, ...] = ("kl", "chi2", "hellinger", "tv")
    wasserstein_oracle_steps: int = 6
    lower_bound_trials: int = 5


def _phi_entry(scenario: Scenario, gname: str, settings: ExperimentSettings, nu1: float) -> dict:
    tol = settings.tolerances
    phi = get_generator(gname)
    fmap, rho_y, R = scenario.map, scenario.rho_y, scenario.map.range_points
    entry: dict[str, Any] = {"status": "ok", "error": None}
    if not nu1 > 0:
        entry.update(status="infeasible", error="rho_y has no mass on the range", checks={})
        return entry
    predicted = predicted_phi_min(phi, nu1)
    cond = conditional_restrict(rho_y, R)
    closed = solve_phi_closed_form(fmap, rho_y, phi)
    closed_div = phi_divergence(phi, closed.pushforward_star, rho_y)
    entry.update(
        predicted=predicted,
        objective_closed=closed.objective,
        divergence_at_conditional=closed_div,
    )
    checks = {
        "closed_objective_gap": _check(abs(closed.objective - predicted), tol["objective_gap"]),
        "conditional_divergence_gap": _check(abs(closed_div - predicted), tol["objective_gap"]),
    }
    if phi.strictly_convex:
        it = solve_phi_iterative(fmap, rho_y, phi, settings.options)
        tv_gap = tv_distance(it.pushforward_star, cond)
        entry.update(
            objective=it.objective,
            iterations=it.iterations,
            iterative_status=it.status,
            tv_gap_to_conditional=tv_gap,
        )
        checks["iterative_objective_gap"] = _check(abs(it.objective - predicted), tol["objective_gap"])
        checks["tv_gap_to_conditional"] = _check(tv_gap, tol["tv_gap_to_conditional"])
        checks["iterative_converged"] = _check(0.0 if it.status == "converged" else 1.0, 0.0)
    else:
        # minimizer identity is not asserted for non-strictly convex generators
        entry.update(objective=closed.objective, iterations=None, iterative_status="n/a",
                     tv_gap_to_conditional=None)
        checks["iterative_objective_gap"] = _na(tol["objective_gap"])
        checks["tv_gap_to_conditional"] = _na(tol["tv_gap_to_conditional"])
        checks["iterative_converged"] = _na(0.0)

    if len(R) <= settings.oracle_max_range and gname in settings.oracle_generators:
        orc = brute_force_oracle(fmap, rho_y, phi, settings.oracle_steps)
        entry.update(oracle_value=orc.best_value, oracle_gap=orc.best_value - predicted,
                     oracle_modulus=orc.modulus)
        checks["oracle_gap"] = _check(abs(orc.best_value - predicted), tol["oracle_gap"])
        checks["oracle_not_below"] = _check(predicted - orc.best_value, tol["oracle_slack"])
    else:
        entry.update(oracle_value=None, oracle_gap=None, oracle_modulus=None)
    entry["checks"] = checks
    return entry


def _random_range_measures(rng, R: np.ndarray, count: int) -> list[DiscreteMeasure]:
    out = []
    for _ in range(count):
        k = rng.integers(1, len(R) + 1)
        idx = np.sort(rng.choice(len(R), size=k, replace=False))
        out.append(make_measure(R[idx], rng.dirichlet(np.ones(k))))
    return out


def _wasserstein_entry(scenario: Scenario, metric: GroundMetric, settings: ExperimentSettings) -> dict:
    tol = settings.tolerances
    fmap, rho_y, R = scenario.map, scenario.rho_y, scenario.map.range_points
    res = solve_wasserstein(fmap, rho_y, metric)
    proj = projection_pushforward(rho_y, R, metric)
    tv_gap = tv_distance(res.pushforward_star, proj)
    predicted = res.objective
    entry: dict[str, Any] = {
        "status": "ok",
        "error": None,
        "objective": res.diagnostics["lp_value"],
        "predicted": predicted,
        "tv_gap_to_projection": tv_gap,
    }
    checks = {
        "tv_gap_to_projection": _check(tv_gap, tol["tv_gap_to_projection"]),
        "wasserstein_gap": _check(abs(res.diagnostics["lp_value"] - predicted), tol["wasserstein_gap"]),
    }
    if settings.lower_bound_trials > 0:
        rng = np.random.default_rng([scenario.seed & 0xFFFFFFFF, scenario.seed >> 32, 4])
        worst = -math.inf
        for rho_p in _random_range_measures(rng, R, settings.lower_bound_trials):
            val, _ = wasserstein_exact(rho_p, rho_y, metric)
            worst = max(worst, predicted - val)
        entry["lower_bound_violation"] = worst
        checks["lower_bound"] = _check(worst, tol["lower_bound_slack"])
    if len(R) <= settings.oracle_max_range and settings.wasserstein_oracle_steps > 0:
        orc = brute_force_oracle(fmap, rho_y, metric, settings.wasserstein_oracle_steps)
        entry.update(oracle_value=orc.best_value, oracle_gap=orc.best_value - predicted)
        checks["oracle_not_below"] = _check(predicted - orc.best_value, tol["oracle_slack"])
    else:
        entry.update(oracle_value=None, oracle_gap=None)
    entry["checks"] = checks
    return entry


def _failed_entry(exc: Exception) -> dict:
    return {"status": "error", "error": f"{type(exc).__name__}: {exc}",
            "checks": {"error": {"value": 1.0, "tol": 0.0, "passed": False}}}


def _entry_passed(entry: dict) -> bool:
    return all(c["passed"] is not False for c in entry.get("checks", {}).values())


def run_experiment(scenario: Scenario, settings: ExperimentSettings | None = None) -> dict:
    """Solve one scenario every supported way and record gaps and checks.

    Solver exceptions become failed entries; the remaining methods still run.
    A record with ``nu1 = 0`` marks every phi entry ``infeasible`` (the
    recovery theorem does not apply) while the Wasserstein path runs as usual.
    """
    settings = settings or ExperimentSettings()
    fmap, rho_y = scenario.map, scenario.rho_y
    nu1, nu0 = mass_in_range(rho_y, fmap.range_points)
    record: dict[str, Any] = {
        "scenario": scenario.name,
        "kind": scenario.kind,
        "seed": scenario.seed,
        "n_theta": len(fmap),
        "n_range": len(fmap.range_points),
        "n_support": rho_y.size,
        "nu1": nu1,
        "nu0": nu0,
        "phi": {},
        "wasserstein": {},
        "timings_ms": {},
    }
    for g in scenario.generators:
        t0 = time.perf_counter()
        try:
            record["phi"][g] = _phi_entry(scenario, g, settings, nu1)
        except ZeroMassOnRange as exc:
            record["phi"][g] = {"status": "infeasible", "error": str(exc), "checks": {}}
        except (PushMatchError, ArithmeticError, ValueError) as exc:
            record["phi"][g] = _failed_entry(exc)
        record["timings_ms"][f"phi:{g}"] = 1e3 * (time.perf_counter() - t0)
    for metric in settings.metrics or (scenario.metric,):
        t0 = time.perf_counter()
        try:
            record["wasserstein"][metric.label] = _wasserstein_entry(scenario, metric, settings)
        except (PushMatchError, ArithmeticError, ValueError, RuntimeError) as exc:
            record["wasserstein"][metric.label] = _failed_entry(exc)
        record["timings_ms"][f"wasserstein:{metric.label}"] = 1e3 * (time.perf_counter() - t0)
    record["passed"] = all(_entry_passed(e) for e in record["phi"].values()) and all(
        _entry_passed(e) for e in record["wasserstein"].values()
    )
    return record


# -- reports -------------------------------------------------------------------

@dataclass
class Report:
    records: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r["passed"] for r in self.records)

    def summary(self) -> dict:
        n_pass = sum(bool(r["passed"]) for r in self.records)
        return {"records": len(self.records), "passed": n_pass, "failed": len(self.records) - n_pass}


def recheck(report: Report) -> bool:
    """Recompute every pass flag from the stored values and tolerances."""
    for rec in report.records:
        entries = list(rec["phi"].values()) + list(rec["wasserstein"].values())
        for entry in entries:
            for c in entry.get("checks", {}).values():
                expect = None if c["value"] is None else c["value"] <= c["tol"]
                if expect != c["passed"]:
                    return False
        flag = all(_entry_passed(e) for e in entries)
        if flag != rec["passed"]:
            return False
    return True


CSV_COLUMNS = [
    "scenario", "kind", "seed", "method", "nu1", "nu0", "objective", "predicted",
    "gap", "tv_gap", "iterations", "status", "passed",
]


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return _json._float(float(x))


def _flag(checks: dict, names: Sequence[str] | None = None) -> str:
    vals = [c["passed"] for k, c in checks.items() if names is None or k in names]
    vals = [v for v in vals if v is not None]
    if not vals:
        return "n/a"
    return "true" if all(vals) else "false"


def _csv_rows(rec: dict) -> list[list[str]]:
    base = [rec["scenario"], rec["kind"], str(rec["seed"])]
    nus = [_num(rec["nu1"]), _num(rec["nu0"])]
    rows = []

    def gap(a, b):
        return None if a is None or b is None else a - b

    for g, e in rec["phi"].items():
        chk = e.get("checks", {})
        pred = e.get("predicted")
        if e["status"] != "ok":
            rows.append(base + [f"phi:{g}"] + nus + ["", "", "", "", "", e["status"], _flag(chk)])
            continue
        rows.append(base + [f"phi_closed:{g}"] + nus + [
            _num(e["objective_closed"]), _num(pred), _num(gap(e["objective_closed"], pred)), "", "",
            "converged", _flag(chk, ["closed_objective_gap", "conditional_divergence_gap"])])
        if e.get("iterative_status") != "n/a":
            rows.append(base + [f"phi_iterative:{g}"] + nus + [
                _num(e["objective"]), _num(pred), _num(gap(e["objective"], pred)),
                _num(e["tv_gap_to_conditional"]), _num(e["iterations"]), e["iterative_status"],
                _flag(chk, ["iterative_objective_gap", "tv_gap_to_conditional", "iterative_converged"])])
        else:
            rows.append(base + [f"phi_iterative:{g}"] + nus + ["", _num(pred), "", "", "", "n/a", "n/a"])
        if e.get("oracle_value") is not None:
            rows.append(base + [f"phi_oracle:{g}"] + nus + [
                _num(e["oracle_value"]), _num(pred), _num(e["oracle_gap"]), "", "", "grid",
                _flag(chk, ["oracle_gap", "oracle_not_below"])])
    for label, e in rec["wasserstein"].items():
        chk = e.get("checks", {})
        if e["status"] != "ok":
            rows.append(base + [f"wasserstein:{label}"] + nus + ["", "", "", "", "", e["status"], _flag(chk)])
            continue
        rows.append(base + [f"wasserstein:{label}"] + nus + [
            _num(e["objective"]), _num(e["predicted"]), _num(e["objective"] - e["predicted"]),
            _num(e["tv_gap_to_projection"]), "", "converged",
            _flag(chk, ["tv_gap_to_projection", "wasserstein_gap", "lower_bound"])])
        if e.get("oracle_value") is not None:
            rows.append(base + [f"wasserstein_oracle:{label}"] + nus + [
                _num(e["oracle_value"]), _num(e["predicted"]), _num(e["oracle_gap"]), "", "", "grid",
                _flag(chk, ["oracle_not_below"])])
    return rows


def report_to_csv(report: Report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in sorted(report.records, key=lambda r: r["scenario"]):
        writer.writerows(_csv_rows(rec))
    return buf.getvalue()


def report_to_json(report: Report) -> str:
    return _json.dumps(report.records) + "\n"


def emit_report(report: Report, fmt: str = "json", path: str | Path | None = None) -> str:
    """Render a report as ``json`` (list of records) or ``csv`` (one row per method).

    Writes to ``path`` when given; always returns the rendered text.
    """
    if fmt == "json":
        text = report_to_json(report)
    elif fmt == "csv":
        text = report_to_csv(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def load_report(path: str | Path) -> Report:
    data = _json.load(path)
    if not isinstance(data, list):
        raise ConfigError("a report file holds a JSON list of records")
    return Report(data)


# -- theorem battery -------------------------------------------------------------

DEFAULT_CONFIG: dict = {
    "seed": 42,
    "include_canonical": True,
    "scenarios": [
        {"kind": "quadratic", "count": 40,
         "params": {"m": 1, "half_width": [1, 4], "spacing": [0.5, 1.5], "n_out": [1, 3],
                    "max_support": 12}},
        {"kind": "quadratic", "count": 20,
         "params": {"m": 2, "half_width": 1, "spacing": [0.5, 1.5], "n_out": [1, 3],
                    "max_support": 12}},
        {"kind": "linear_overdetermined", "count": 70,
         "params": {"m": [1, 2], "n_theta": [2, 10], "n_out": [1, 3], "max_support": 12}},
        {"kind": "random_tabulated", "count": 70,
         "params": {"m": [1, 3], "n": [1, 3], "n_theta": [2, 10], "n_images": [1, 6],
                    "n_out": [1, 3], "max_support": 12}},
    ],
    "generators": ["kl", "chi2", "hellinger", "tv"],
    "metrics": [{"kind": "l2", "p": 1}, {"kind": "l2", "p": 2}],
    "solver": {"max_iters": 10000, "tol": 1e-10, "step": 1.0},
    "oracle": {"grid_steps": 200, "max_range": 4, "generators": ["tv"], "wasserstein_grid_steps": 6},
    "lower_bound_trials": 5,
    "tolerances": DEFAULT_TOLERANCES,
}


def load_config(path: str | Path | None = None) -> dict:
    """Default configuration overlaid with the JSON file at ``path``."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        return cfg
    try:
        user = _json.load(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("config must be a JSON object")
    for key, val in user.items():
        if key not in cfg:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(cfg[key], dict) and isinstance(val, dict):
            cfg[key] = {**cfg[key], **val}
        else:
            cfg[key] = val
    return cfg


def _child_seed(base: int, *path: int) -> int:
    state = np.random.SeedSequence([base & 0xFFFFFFFF, base >> 32 & 0xFFFFFFFF, *path]).generate_state(2)
    return int(state[0]) | int(state[1]) << 32


def build_battery(cfg: dict) -> list[Scenario]:
    """Expand the scenario groups of a config into seeded scenarios."""
    seed = int(cfg["seed"])
    common = {"generators": cfg["generators"]}
    out = []
    if cfg.get("include_canonical", True):
        out.append(generate_scenario("canonical", common, seed, name="canonical"))
    for gi, group in enumerate(cfg["scenarios"]):
        try:
            kind, count = group["kind"], int(group.get("count", 1))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad scenario group #{gi}: {group!r}") from exc
        params = {**common, **group.get("params", {})}
        for i in range(count):
            s = _child_seed(seed, gi, i)
            out.append(generate_scenario(kind, params, s, name=f"{kind}-{gi:02d}-{i:04d}"))
    return out


def settings_from_config(cfg: dict) -> ExperimentSettings:
    try:
        orc = cfg["oracle"]
        return ExperimentSettings(
            options=SolverOptions(**cfg["solver"]),
            tolerances={**DEFAULT_TOLERANCES, **cfg["tolerances"]},
            metrics=tuple(GroundMetric.from_dict(m) for m in cfg["metrics"]),
            oracle_steps=int(orc["grid_steps"]),
            oracle_max_range=int(orc["max_range"]),
            oracle_generators=tuple(orc.get("generators", GENERATORS)),
            wasserstein_oracle_steps=int(orc.get("wasserstein_grid_steps", 0)),
            lower_bound_trials=int(cfg["lower_bound_trials"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def worker_count() -> int:
    raw = os.environ.get("PUSHMATCH_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"PUSHMATCH_THREADS must be an integer, got {raw!r}") from None
    return n if n > 0 else (os.cpu_count() or 1)


def _run_one(args):
    scenario, settings = args
    return run_experiment(scenario, settings)


def run_battery(scenarios: Sequence[Scenario], settings: ExperimentSettings, workers: int | None = None) -> Report:
    workers = worker_count() if workers is None else workers
    jobs = [(s, settings) for s in scenarios]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_one, jobs, chunksize=4))
    else:
        records = [_run_one(j) for j in jobs]
    return Report(sorted(records, key=lambda r: r["scenario"]))


def verify_theorems(config: str | Path | dict | None = None, seed: int | None = None,
                    workers: int | None = None) -> tuple[int, Report]:
    """Run the theorem battery; exit code 0 iff every record passes."""
    cfg = config if isinstance(config, dict) else load_config(config)
    if seed is not None:
        cfg = {**cfg, "seed": int(seed)}
    settings = settings_from_config(cfg)
    scenarios = build_battery(cfg)
    log.info("running %d scenarios", len(scenarios))
    report = run_battery(scenarios, settings, workers)
    return (0 if report.passed else 1), report
