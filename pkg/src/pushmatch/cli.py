"""Command-line interface: ``pushmatch {solve,verify,gen,report}``.

Exit codes: 0 success, 1 verification failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import _json
from .divergence import GENERATORS
from .errors import ConfigError, PushMatchError, ZeroMassOnRange
from .harness import (
    KINDS,
    emit_report,
    generate_scenario,
    load_report,
    recheck,
    verify_theorems,
)
from .measure import load_map, load_measure, save_map, save_measure
from .solver import SolverOptions, solve_phi_closed_form, solve_phi_iterative, solve_wasserstein
from .transport import GroundMetric

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("pushmatch")


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def cmd_solve(args) -> int:
    fmap = load_map(args.map)
    rho_y = load_measure(args.measure)
    if args.objective == "wasserstein":
        res = solve_wasserstein(fmap, rho_y, GroundMetric(args.ground, args.p))
    elif args.iterative:
        opts = SolverOptions(max_iters=args.max_iters, tol=args.tol, step=args.step)
        res = solve_phi_iterative(fmap, rho_y, args.objective, opts)
    else:
        res = solve_phi_closed_form(fmap, rho_y, args.objective)
    _write(_json.dumps(res.to_dict()) + "\n", args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    code, report = verify_theorems(args.config, seed=args.seed)
    _write(emit_report(report, args.format), args.out)
    s = report.summary()
    print(f"{s['passed']}/{s['records']} scenarios passed", file=sys.stderr)
    for rec in report.records:
        if not rec["passed"]:
            print(f"FAIL {rec['scenario']}", file=sys.stderr)
    return code


def cmd_gen(args) -> int:
    try:
        params = json.loads(args.params) if args.params else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--params is not valid JSON: {exc}") from exc
    sc = generate_scenario(args.kind, params, args.seed, name=args.name)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_map(sc.map, out / "map.json")
    save_measure(sc.rho_y, out / "measure.json")
    (out / "scenario.json").write_text(sc.to_json() + "\n", encoding="utf-8")
    print(f"wrote {out}/{{map,measure,scenario}}.json", file=sys.stderr)
    return EXIT_OK


def cmd_report(args) -> int:
    report = load_report(args.input)
    if not recheck(report):
        print("report pass flags do not match its own numbers", file=sys.stderr)
        return EXIT_FAIL
    text = emit_report(report, args.format)
    _write(text, args.out)
    return EXIT_OK if report.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pushmatch", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance from map and measure files")
    p.add_argument("--map", required=True, help="forward map JSON")
    p.add_argument("--measure", required=True, help="data measure JSON")
    p.add_argument("--objective", choices=sorted(GENERATORS) + ["wasserstein"], default="kl")
    p.add_argument("--iterative", action="store_true", help="mirror descent instead of closed form")
    p.add_argument("--ground", choices=["l2", "l1"], default="l2")
    p.add_argument("--p", type=float, default=1.0, help="Wasserstein exponent")
    p.add_argument("--max-iters", type=int, default=10_000)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--out", help="output path (default: stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="run the theorem battery")
    p.add_argument("--config", help="JSON config overlaying the defaults")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out", help="report path (default: stdout)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen", help="write scenario files")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--params", help="JSON object of generator parameters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("report", help="re-render a JSON report")
    p.add_argument("--in", dest="input", required=True, help="JSON report")
    p.add_argument("--format", choices=["json", "csv"], default="csv")
    p.add_argument("--out", help="output path (default: stdout)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ZeroMassOnRange as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PushMatchError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
