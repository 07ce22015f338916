"""Acceptance criteria, each run at its stated tolerance.

Every test records one PASS/FAIL line, shown in the terminal summary.
"""

import filecmp
import math
import time

import numpy as np
import pytest

from pushmatch.cli import main
from pushmatch.divergence import predicted_phi_min
from pushmatch.harness import build_battery, load_config
from pushmatch.measure import conditional_restrict, make_measure, mass_in_range, tv_distance
from pushmatch.solver import (
    PhiObjective,
    bayes_objective,
    bayes_variational_posterior,
    brute_force_oracle,
    solve_phi_closed_form,
    solve_phi_iterative,
    solve_wasserstein,
)
from pushmatch.transport import (
    GroundMetric,
    certificate,
    predicted_wasserstein_min,
    projection_pushforward,
    transport_vertex_enumeration,
    wasserstein_exact,
)

from conftest import ACCEPTANCE_LINES, random_measure

pytestmark = pytest.mark.acceptance

STRICT = ("kl", "chi2", "hellinger")
METRICS = (GroundMetric(p=1.0), GroundMetric(p=2.0))


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def battery():
    """The 200 seeded random scenarios of the default configuration."""
    scenarios = [s for s in build_battery(load_config()) if s.kind != "canonical"]
    assert len(scenarios) == 200
    return scenarios


@pytest.fixture(scope="module")
def iterative_results(battery):
    t0 = time.perf_counter()
    out = {g: [solve_phi_iterative(s.map, s.rho_y, g) for s in battery] for g in STRICT}
    return out, time.perf_counter() - t0


def test_battery_shape(battery):
    for s in battery:
        nu1, _ = mass_in_range(s.rho_y, s.map.range_points)
        assert len(s.map) <= 10
        assert s.rho_y.size <= 12
        assert 0.3 - 1e-12 <= nu1 <= 0.9 + 1e-12


def test_01_conditional_recovery(battery, iterative_results):
    results, elapsed = iterative_results
    worst = 0.0
    for g in STRICT:
        for s, res in zip(battery, results[g]):
            cond = conditional_restrict(s.rho_y, s.map.range_points)
            worst = max(worst, tv_distance(res.pushforward_star, cond))
    ok = worst < 1e-6 and elapsed < 30.0
    record(1, "conditional recovery", ok, f"max TV {worst:.2e} (< 1e-6), runtime {elapsed:.1f}s (< 30s)")


def test_02_optimal_value(battery, iterative_results):
    results, _ = iterative_results
    worst = 0.0
    for g in STRICT + ("tv",):
        for i, s in enumerate(battery):
            nu1, _ = mass_in_range(s.rho_y, s.map.range_points)
            pred = predicted_phi_min(g, nu1)
            worst = max(worst, abs(solve_phi_closed_form(s.map, s.rho_y, g).objective - pred))
            if g in results:
                worst = max(worst, abs(results[g][i].objective - pred))
    worst_oracle, n_oracle = 0.0, 0
    for s in battery:
        if len(s.map.range_points) <= 4:
            nu1, _ = mass_in_range(s.rho_y, s.map.range_points)
            orc = brute_force_oracle(s.map, s.rho_y, "tv", grid_steps=200)
            worst_oracle = max(worst_oracle, abs(orc.best_value - predicted_phi_min("tv", nu1)))
            n_oracle += 1
    ok = worst <= 1e-8 and worst_oracle <= 5e-3 and n_oracle > 0
    record(2, "optimal value formula", ok,
           f"max objective gap {worst:.2e} (<= 1e-8), tv oracle gap {worst_oracle:.2e} (<= 5e-3) on {n_oracle} scenarios")


def test_03_canonical(canonical):
    fmap, rho = canonical
    kl = max(abs(solve_phi_closed_form(fmap, rho, "kl").objective - math.log(1 / 0.6)),
             abs(solve_phi_iterative(fmap, rho, "kl").objective - math.log(1 / 0.6)))
    chi2 = max(abs(solve_phi_closed_form(fmap, rho, "chi2").objective - 2 / 3),
               abs(solve_phi_iterative(fmap, rho, "chi2").objective - 2 / 3))
    tv = abs(brute_force_oracle(fmap, rho, "tv", grid_steps=200).best_value - 0.4)
    ok = kl <= 1e-8 and chi2 <= 1e-8 and tv <= 5e-3
    record(3, "canonical instance", ok, f"kl gap {kl:.1e}, chi2 gap {chi2:.1e} (<= 1e-8), tv oracle gap {tv:.1e} (<= 5e-3)")


def test_04_projection_recovery(battery):
    worst_tv, worst_gap = 0.0, 0.0
    for metric in METRICS:
        for s in battery:
            R = s.map.range_points
            res = solve_wasserstein(s.map, s.rho_y, metric)
            worst_tv = max(worst_tv, tv_distance(res.pushforward_star, projection_pushforward(s.rho_y, R, metric)))
            lp = wasserstein_exact(res.pushforward_star, s.rho_y, metric)[0]
            worst_gap = max(worst_gap, abs(lp - predicted_wasserstein_min(s.rho_y, R, metric)))
    ok = worst_tv == 0.0 and worst_gap <= 1e-9
    record(4, "projection recovery", ok, f"max TV to projection {worst_tv:.1e} (== 0), max W_p gap {worst_gap:.2e} (<= 1e-9)")


def test_05_lower_bound_chain(battery):
    rng = np.random.default_rng(2024)
    worst = -math.inf
    for s in battery[::10]:
        R = s.map.range_points
        for metric in METRICS:
            bound = predicted_wasserstein_min(s.rho_y, R, metric)
            for _ in range(50):
                k = int(rng.integers(1, len(R) + 1))
                idx = rng.choice(len(R), size=k, replace=False)
                other = make_measure(R[idx], rng.dirichlet(np.ones(k)))
                worst = max(worst, bound - wasserstein_exact(other, s.rho_y, metric)[0])
    ok = worst <= 1e-9
    record(5, "lower-bound chain", ok, f"max violation {worst:.2e} (<= 1e-9) over 20 scenarios x 50 measures")


def test_06_lp_exactness():
    rng = np.random.default_rng(6)
    worst_gap = worst_slack = worst_enum = 0.0
    n_enum = 0
    for trial in range(100):
        # every other pair stays small enough for vertex enumeration
        hi = 5 if trial % 2 == 0 else 9
        mu = random_measure(rng, int(rng.integers(1, hi)), dim=2)
        nu = random_measure(rng, int(rng.integers(1, hi)), dim=2)
        metric = METRICS[trial % 2]
        value, cp = wasserstein_exact(mu, nu, metric)
        cert = certificate(cp, mu.weights, nu.weights)
        worst_gap = max(worst_gap, cert["gap"])
        worst_slack = max(worst_slack, cert["slackness"], cert["dual_violation"])
        if mu.size <= 4 and nu.size <= 4:
            oracle, _ = transport_vertex_enumeration(mu.weights, nu.weights, cp.cost)
            worst_enum = max(worst_enum, abs(cert["primal"] - oracle))
            n_enum += 1
    ok = worst_gap <= 1e-7 and worst_slack <= 1e-9 and worst_enum <= 1e-9 and n_enum > 0
    record(6, "LP exactness", ok,
           f"duality gap {worst_gap:.1e} (<= 1e-7), slackness {worst_slack:.1e} (<= 1e-9), "
           f"vertex enumeration diff {worst_enum:.1e} on {n_enum} pairs")


def test_07_gradient_check(battery):
    rng = np.random.default_rng(7)
    h = 1e-6
    worst = 0.0
    for g in ("kl", "chi2", "tv", "hellinger"):
        for i in range(20):
            s = battery[(7 * i) % len(battery)]
            obj = PhiObjective(s.map, s.rho_y, g)
            n = len(s.map)
            w = 0.9 * rng.dirichlet(np.ones(n)) + 0.1 / n
            grad = obj.grad(w)
            fd = np.array([(obj.value(w + h * e) - obj.value(w - h * e)) / (2 * h) for e in np.eye(n)])
            worst = max(worst, np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12))
    ok = worst < 1e-4
    record(7, "gradient check", ok, f"max relative error {worst:.2e} (< 1e-4) at 20 points per generator")


def test_08_bayes_contrast():
    post = bayes_variational_posterior(make_measure([0, 1], [1, 1]), [0.0, math.log(3)])
    example = float(np.abs(post.weights - [0.75, 0.25]).max())
    rng = np.random.default_rng(8)
    beaten = 0
    k = 6
    prior = make_measure(np.arange(k, dtype=float), rng.dirichlet(np.ones(k)))
    nll = rng.normal(size=k)
    post_w = bayes_variational_posterior(prior, nll).weights
    best = bayes_objective(post_w, prior, nll)
    for _ in range(100):
        eps = rng.uniform(1e-3, 0.5)
        other = (1 - eps) * post_w + eps * rng.dirichlet(np.ones(k))
        beaten += bayes_objective(other, prior, nll) > best
    ok = example <= 1e-12 and beaten == 100
    record(8, "variational Bayes contrast", ok, f"example error {example:.1e} (<= 1e-12), posterior better in {beaten}/100 trials")


def test_09_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    codes = [main(["verify", "--seed", "42", "--format", "csv", "--out", str(p)]) for p in (a, b)]
    same = filecmp.cmp(a, b, shallow=False)
    rows = len(a.read_text().splitlines()) - 1
    ok = same and codes == [0, 0]
    record(9, "determinism", ok, f"two verify runs byte-identical: {same}, exit codes {codes}, {rows} csv rows")
