"""Command-line entry point: ``kpp-accel <subcommand>``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from ..fronts import solve_profile
from ..levelsets import LAWS, LevelSetTrajectory, fit_growth_law
from ..nonlinearity import from_config as nl_from_config, verify_envelopes
from .config import ConfigError, load
from .experiment import EXIT_CHECKS, EXIT_OK, EXIT_RUNTIME, default_output_root, run_experiment, sweep
from .report import report


def _cmd_run(args) -> int:
    cfg = load(args.config)
    run_dir, code = run_experiment(cfg, args.output)
    print(f"{run_dir} exit={code}")
    return code


def _collect_configs(paths):
    out = []
    for p in map(Path, paths):
        out.extend(sorted(p.glob("*.ini")) if p.is_dir() else [p])
    return out


def _cmd_sweep(args) -> int:
    cfgs = [load(p) for p in _collect_configs(args.config)]
    rows, path = sweep(cfgs, args.output, workers=args.workers)
    print(path)
    codes = [r["exit_code"] for r in rows]
    if any(c == EXIT_RUNTIME for c in codes):
        return EXIT_RUNTIME
    return EXIT_CHECKS if any(c == EXIT_CHECKS for c in codes) else EXIT_OK


def _cmd_front(args) -> int:
    nl = nl_from_config("logistic", {"r": args.r})
    fr = solve_profile(args.speed, nl, n_out=args.points)
    fh = open(args.output, "w", newline="", encoding="utf-8") if args.output else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("z", "phi", "dphi"))
        for row in fr.rows():
            w.writerow([repr(row["z"]), repr(row["phi"]), repr(row["dphi"])])
    finally:
        if fh is not sys.stdout:
            fh.close()
    print(json.dumps({"c": fr.c, "residual": fr.residual, "tail_rate": fr.tail_rate}), file=sys.stderr)
    return EXIT_OK


def _cmd_fit(args) -> int:
    with open(args.trajectory, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{args.trajectory} has no rows")
    traj = LevelSetTrajectory.from_rows(float(rows[0]["lambda"]), rows)
    fit = fit_growth_law(traj, args.law, tuple(args.window), use=args.use)
    print(json.dumps(fit.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_check_kpp(args) -> int:
    params = {"r": args.r}
    nl = nl_from_config(args.name, params)
    rep = verify_envelopes(nl, args.samples)
    print(json.dumps({"name": nl.name, "passed": rep.passed, "margins": rep.margins}, indent=2, sort_keys=True))
    return EXIT_OK if rep.passed else EXIT_CHECKS


def _cmd_report(args) -> int:
    out = Path(args.output) if args.output else default_output_root()
    out.mkdir(parents=True, exist_ok=True)
    text, _ = report(args.runs, out)
    (out / "report.md").write_text(text, encoding="utf-8")
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kpp-accel", description="Accelerating KPP fronts: experiments and checks.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--output", help="output root (default $KPP_ACCEL_OUTPUT or ./runs)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run several configs in parallel")
    p.add_argument("--config", nargs="+", required=True, help="config files or directories of *.ini")
    p.add_argument("--output")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("front", help="traveling-front profile as CSV")
    p.add_argument("--speed", type=float, required=True)
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--points", type=int, default=2001)
    p.add_argument("--output")
    p.set_defaults(func=_cmd_front)

    p = sub.add_parser("fit", help="fit a growth law to a trajectory CSV")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--law", choices=LAWS, required=True)
    p.add_argument("--window", type=float, nargs=2, required=True)
    p.add_argument("--use", choices=("x_min", "x_max"), default="x_min")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("check-kpp", help="verify the KPP envelopes of a nonlinearity")
    p.add_argument("--name", default="logistic")
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=10_000)
    p.set_defaults(func=_cmd_check_kpp)

    p = sub.add_parser("report", help="markdown report over run directories")
    p.add_argument("runs", nargs="*")
    p.add_argument("--output")
    p.set_defaults(func=_cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
