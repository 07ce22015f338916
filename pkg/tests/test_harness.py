import csv
import io
import json
import math

import numpy as np
import pytest

from pushmatch import _json
from pushmatch.cli import main
from pushmatch.errors import ConfigError, InvalidParams
from pushmatch.harness import (
    CSV_COLUMNS,
    DEFAULT_CONFIG,
    ExperimentSettings,
    Report,
    Scenario,
    build_battery,
    emit_report,
    generate_scenario,
    load_config,
    load_report,
    recheck,
    run_battery,
    run_experiment,
    settings_from_config,
    verify_theorems,
    worker_count,
)
from pushmatch.measure import ForwardMap, load_map, load_measure, make_measure, mass_in_range

SMALL = {
    "seed": 7,
    "scenarios": [
        {"kind": "quadratic", "count": 2, "params": {"m": 1, "half_width": [1, 2], "max_support": 12}},
        {"kind": "linear_overdetermined", "count": 2, "params": {"m": 1, "n_theta": [2, 5]}},
        {"kind": "random_tabulated", "count": 2, "params": {"n_theta": [2, 6], "n_images": [1, 4]}},
    ],
}


def small_config(**overrides):
    cfg = load_config()
    cfg.update(SMALL)
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, data):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return str(path)


class TestScenarioGeneration:
    def test_quadratic_grid(self):
        sc = generate_scenario("quadratic", {"m": 1, "half_width": 1, "spacing": 1.0}, seed=3)
        np.testing.assert_array_equal(sc.map.thetas.ravel(), [-1, 0, 1])
        assert [tuple(r) for r in sc.map.range_points] == [(0.0,), (1.0,)]
        assert len(sc.map.range_points) < len(sc.map)

    def test_linear_diagonal(self):
        sc = generate_scenario("linear_overdetermined", {"m": 1, "n": 2, "A": [[1], [1]]}, seed=3)
        R = sc.map.range_points
        np.testing.assert_array_equal(R[:, 0], R[:, 1])
        nu1, nu0 = mass_in_range(sc.rho_y, R)
        assert nu0 > 0
        off = [p for p, _ in sc.rho_y.atoms if p[0] != p[1]]
        assert off

    @pytest.mark.parametrize("kind", ["linear_overdetermined", "quadratic", "random_tabulated"])
    def test_deterministic(self, kind):
        a = generate_scenario(kind, {}, seed=99).to_json()
        b = generate_scenario(kind, {}, seed=99).to_json()
        assert a == b
        assert generate_scenario(kind, {}, seed=100).to_json() != a

    @pytest.mark.parametrize("kind", ["linear_overdetermined", "quadratic", "random_tabulated"])
    def test_mass_window(self, kind):
        for seed in range(20):
            sc = generate_scenario(kind, {}, seed=seed)
            nu1, _ = mass_in_range(sc.rho_y, sc.map.range_points)
            assert 0.3 - 1e-12 <= nu1 <= 0.9 + 1e-12

    def test_roundtrip(self):
        sc = generate_scenario("random_tabulated", {"n": 2}, seed=5)
        back = Scenario.from_dict(json.loads(sc.to_json()))
        assert back.to_json() == sc.to_json()

    @pytest.mark.parametrize("params", [
        {"m": 13},
        {"m": 2, "n": 2},
        {"half_width": 0},
        {"nu1": 1.0},
        {"n_theta": [1, 2, 3]},
    ])
    def test_invalid(self, params):
        kind = "quadratic" if "half_width" in params else "linear_overdetermined"
        with pytest.raises(InvalidParams):
            generate_scenario(kind, params, seed=0)

    def test_unknown_kind(self):
        with pytest.raises(InvalidParams):
            generate_scenario("spiral", {}, seed=0)


class TestRunExperiment:
    def test_canonical(self):
        rec = run_experiment(generate_scenario("canonical", {}, 0, name="canonical"))
        assert rec["passed"]
        kl = rec["phi"]["kl"]
        assert kl["objective"] == pytest.approx(math.log(1 / 0.6), abs=1e-8)
        assert kl["tv_gap_to_conditional"] < 1e-6
        assert rec["wasserstein"]["l2_p1"]["predicted"] == pytest.approx(0.4, abs=1e-15)

    def test_full_support_in_range(self):
        fmap = ForwardMap([[0.0], [1.0]], [[0.0], [1.0]])
        sc = Scenario("inside", "file", fmap, make_measure([0, 1], [0.4, 0.6]))
        rec = run_experiment(sc)
        assert rec["passed"]
        for e in rec["phi"].values():
            assert e["objective_closed"] == 0.0
            assert abs(e["objective"]) <= 1e-12
        for e in rec["wasserstein"].values():
            assert e["objective"] == 0.0 and e["tv_gap_to_projection"] == 0.0

    def test_no_overlap(self):
        fmap = ForwardMap([[0.0]], [[0.0]])
        sc = Scenario("disjoint", "file", fmap, make_measure([2, 3], [0.5, 0.5]))
        rec = run_experiment(sc)
        assert all(e["status"] == "infeasible" for e in rec["phi"].values())
        w = rec["wasserstein"]["l2_p1"]
        assert w["status"] == "ok"
        assert w["objective"] == pytest.approx(2.5)
        assert rec["passed"]

    def test_tv_marked_not_applicable(self):
        rec = run_experiment(generate_scenario("canonical", {"generators": ["tv"]}, 0))
        tv = rec["phi"]["tv"]
        assert tv["iterative_status"] == "n/a"
        assert tv["checks"]["tv_gap_to_conditional"]["passed"] is None
        assert tv["checks"]["closed_objective_gap"]["passed"] is True
        assert tv["checks"]["oracle_gap"]["passed"] is True


@pytest.fixture(scope="module")
def report():
    cfg = small_config()
    return run_battery(build_battery(cfg), settings_from_config(cfg), workers=1)


class TestReports:
    def test_empty(self):
        assert emit_report(Report([]), "csv") == ",".join(CSV_COLUMNS) + "\n"
        assert json.loads(emit_report(Report([]), "json")) == []

    def test_one_record_rows(self):
        rec = run_experiment(generate_scenario("canonical", {}, 0, name="canonical"))
        rows = list(csv.DictReader(io.StringIO(emit_report(Report([rec]), "csv"))))
        methods = [r["method"] for r in rows]
        assert len(methods) == len(set(methods))
        for g in ("kl", "chi2", "hellinger", "tv"):
            assert f"phi_closed:{g}" in methods and f"phi_iterative:{g}" in methods
        assert "wasserstein:l2_p1" in methods
        assert all(r["passed"] in ("true", "n/a") for r in rows)

    def test_json_roundtrip(self, report, tmp_path):
        path = tmp_path / "r.json"
        emit_report(report, "json", path)
        back = load_report(path)
        assert emit_report(back, "json") == emit_report(report, "json")
        assert emit_report(back, "csv") == emit_report(report, "csv")

    def test_recheck(self, report):
        assert report.passed
        assert recheck(report)
        tampered = json.loads(emit_report(report, "json"))
        tampered[0]["wasserstein"]["l2_p1"]["checks"]["wasserstein_gap"]["value"] = 1.0
        assert not recheck(Report(tampered))

    def test_sorted_by_scenario(self, report):
        names = [r["scenario"] for r in report.records]
        assert names == sorted(names)

    def test_parallel_matches_serial(self, report):
        cfg = small_config()
        par = run_battery(build_battery(cfg), settings_from_config(cfg), workers=2)
        assert emit_report(par, "csv") == emit_report(report, "csv")

    def test_unknown_format(self, report):
        with pytest.raises(ValueError):
            emit_report(report, "xml")


class TestConfig:
    def test_defaults(self):
        assert load_config() == DEFAULT_CONFIG
        assert load_config() is not DEFAULT_CONFIG

    def test_overlay(self, tmp_path):
        cfg = load_config(write_config(tmp_path, {"tolerances": {"objective_gap": 1e-6}}))
        assert cfg["tolerances"]["objective_gap"] == 1e-6
        assert cfg["tolerances"]["oracle_gap"] == 5e-3

    def test_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, {"sed": 1}))
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(bad)
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")

    def test_battery_size(self):
        assert len(build_battery(load_config())) == 201

    def test_worker_count(self, monkeypatch):
        monkeypatch.setenv("PUSHMATCH_THREADS", "3")
        assert worker_count() == 3
        monkeypatch.setenv("PUSHMATCH_THREADS", "0")
        assert worker_count() >= 1
        monkeypatch.setenv("PUSHMATCH_THREADS", "many")
        with pytest.raises(ConfigError):
            worker_count()

    def test_settings(self):
        s = settings_from_config(load_config())
        assert isinstance(s, ExperimentSettings)
        assert [m.label for m in s.metrics] == ["l2_p1", "l2_p2"]


class TestVerify:
    def test_small_battery_passes(self):
        code, report = verify_theorems(small_config(), workers=1)
        assert code == 0
        assert len(report.records) == 7

    def test_impossible_tolerance(self):
        tols = {k: 0.0 for k in DEFAULT_CONFIG["tolerances"]}
        tols["tv_gap_to_conditional"] = -1.0
        code, report = verify_theorems(small_config(tolerances=tols), workers=1)
        assert code == 1
        assert not report.passed

    def test_tv_only(self):
        code, report = verify_theorems(small_config(generators=["tv"]), workers=1)
        assert code == 0
        for rec in report.records:
            checks = rec["phi"]["tv"]["checks"]
            assert checks["closed_objective_gap"]["passed"] is True
            assert checks["tv_gap_to_conditional"]["passed"] is None
            assert checks["iterative_converged"]["passed"] is None


class TestCli:
    def test_gen_and_solve(self, tmp_path, capsys):
        out = tmp_path / "sc"
        assert main(["gen", "--kind", "quadratic", "--params", '{"half_width": 1}', "--seed", "1",
                     "--out", str(out)]) == 0
        fmap, rho = load_map(out / "map.json"), load_measure(out / "measure.json")
        assert len(fmap) == 3
        res_path = tmp_path / "res.json"
        assert main(["solve", "--map", str(out / "map.json"), "--measure", str(out / "measure.json"),
                     "--objective", "kl", "--iterative", "--out", str(res_path)]) == 0
        res = _json.load(res_path)
        assert res["status"] == "converged"
        nu1, _ = mass_in_range(rho, fmap.range_points)
        assert res["objective"] == pytest.approx(math.log(1 / nu1), abs=1e-8)

    def test_solve_wasserstein_stdout(self, tmp_path, capsys):
        fmap = ForwardMap([[0.0], [1.0]], [[0.0], [1.0]])
        from pushmatch.measure import save_map, save_measure
        save_map(fmap, tmp_path / "g.json")
        save_measure(make_measure([0, 1, 2], [0.3, 0.3, 0.4]), tmp_path / "m.json")
        code = main(["solve", "--map", str(tmp_path / "g.json"), "--measure", str(tmp_path / "m.json"),
                     "--objective", "wasserstein", "--p", "2"])
        assert code == 0
        res = json.loads(capsys.readouterr().out)
        assert res["objective"] == pytest.approx(math.sqrt(0.4), abs=1e-12)

    def test_solve_infeasible(self, tmp_path):
        from pushmatch.measure import save_map, save_measure
        save_map(ForwardMap([[0.0]], [[0.0]]), tmp_path / "g.json")
        save_measure(make_measure([5], [1]), tmp_path / "m.json")
        assert main(["solve", "--map", str(tmp_path / "g.json"), "--measure", str(tmp_path / "m.json")]) == 1

    def test_verify_and_report(self, tmp_path):
        cfg = write_config(tmp_path, SMALL)
        rep = tmp_path / "r.json"
        assert main(["verify", "--config", cfg, "--format", "json", "--out", str(rep)]) == 0
        out_csv = tmp_path / "r.csv"
        assert main(["report", "--in", str(rep), "--format", "csv", "--out", str(out_csv)]) == 0
        assert out_csv.read_text().startswith(",".join(CSV_COLUMNS))

    def test_report_detects_tampering(self, tmp_path):
        rec = run_experiment(generate_scenario("canonical", {}, 0, name="canonical"))
        rec["passed"] = False
        rep = tmp_path / "r.json"
        emit_report(Report([rec]), "json", rep)
        assert main(["report", "--in", str(rep)]) == 1

    def test_usage_errors(self, tmp_path):
        assert main(["verify", "--config", str(tmp_path / "nope.json")]) == 2
        bad = write_config(tmp_path, {"bogus": True})
        assert main(["verify", "--config", bad]) == 2
        assert main(["gen", "--kind", "quadratic", "--params", "{oops", "--out", str(tmp_path)]) == 2
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2
