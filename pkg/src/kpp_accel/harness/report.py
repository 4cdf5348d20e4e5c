"""Markdown reports and plot-ready CSVs from finished run directories."""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path

from ..levelsets import LevelSetTrajectory

log = logging.getLogger(__name__)

LABELS = {"speed": "speed", "slope": "t ln t slope", "exponent": "power exponent", "prefactor": "power prefactor",
          "rate": "exp. rate"}


def _load_manifest(run_dir: Path):
    path = run_dir / "manifest.json"
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


def _read_traj(path: Path) -> LevelSetTrajectory:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    lam = float(rows[0]["lambda"]) if rows else math.nan
    return LevelSetTrajectory.from_rows(lam, rows)


def write_plot_csv(run_dir: Path, out_dir: Path) -> Path | None:
    """``t, lambda, x, ln_x, ln_ln_x`` for every tracked level of a run."""
    files = sorted(run_dir.glob("trajectory_lambda_*.csv"))
    if not files:
        return None
    path = out_dir / f"plot_{run_dir.name}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "lambda", "x", "ln_x", "ln_ln_x"))
        for f in files:
            traj = _read_traj(f)
            for t, x, e in zip(traj.t, traj.x_min, traj.empty):
                if e:
                    continue
                lx = math.log(x) if x > 0 else math.nan
                llx = math.log(lx) if x > 1 else math.nan
                w.writerow([repr(t), repr(traj.lam), repr(x), repr(lx), repr(llx)])
    return path


def _fmt(v, digits=3):
    if v is None:
        return "n/a"
    if isinstance(v, bool):
        return "PASS" if v else "FAIL"
    return f"{v:.{digits}f}" if abs(v) >= 1e-3 or v == 0 else f"{v:.3e}"


def _check_lines(res: dict) -> list[str]:
    verdict = "PASS" if res.get("pass") else "FAIL"
    kind = res.get("check")
    label = res.get("label", kind)
    if "error" in res:
        return [f"- {label}: error {res['error']} ({verdict})"]
    if kind == "fit":
        lines = []
        for c in res.get("comparisons", []):
            name = LABELS.get(c["param"], c["param"])
            rtol = f"{100 * c['rtol']:g}%"
            pv = c["predicted"]
            ok = "n/a" if c["pass"] is None else ("PASS" if c["pass"] else "FAIL")
            lines.append(f"- {label}: {name}: predicted {_fmt(pv)}, measured {_fmt(c['measured'], 5)}, "
                         f"tol {rtol} ({ok})")
        return lines
    if kind == "speed":
        return [f"- {label}: speed: predicted {_fmt(res['predicted'])}, measured {_fmt(res['measured'], 5)}, "
                f"tol {100 * res['rtol']:g}% ({verdict})"]
    if kind in ("band", "ode_reduction"):
        lines = []
        for r in res.get("results", []):
            pr = r["params"]
            lines.append(f"- {label}: lambda={pr['lambda']:g} eps={pr['eps']:g} entry T*={_fmt(r['entry_time'], 2)} "
                         f"re-exits={len(r['re_exits'])} ({'PASS' if r['pass'] else 'FAIL'})")
        lines.append(f"- {label}: entry monotone in eps: {res.get('entry_monotone_in_eps')} ({verdict})")
        return lines
    if kind == "sandwich":
        return [f"- {label}: worst upper {res['worst_upper']:.3e}, worst lower {res['worst_lower']:.3e}, "
                f"tol {res['tol']:g} ({verdict})"]
    if kind == "flatness":
        return [f"- {label}: M+ monotone {res['plus_monotone']}, M- monotone {res['minus_monotone']}, "
                f"sup|u_x/u| ratio {_fmt(res['decay_ratio'], 4)} < {res['ratio_limit']:g} ({verdict})"]
    if kind == "refined_band":
        lines = [f"- {label}: lambda={r['params']['lambda']:g} r(t) in [{_fmt(r['r_min'], 4)}, {_fmt(r['r_max'], 4)}]"
                 for r in res.get("results", [])]
        lines.append(f"- {label}: common constant {_fmt(res['c_common'], 4)} >= {res['c_floor']:g} ({verdict})")
        return lines
    if kind == "lower_curve":
        return [f"- {label}: worst margin x_min - g(t/2) = {_fmt(res.get('worst_margin'))} ({verdict})"]
    return [f"- {label}: {verdict}"]


def report(run_dirs, out_dir=None) -> tuple[str, list[Path]]:
    """Markdown comparing measured and predicted growth, one section per family.

    Returns ``(markdown, plot_csv_paths)``; plot CSVs go to ``out_dir`` if given.
    """
    run_dirs = [Path(d) for d in run_dirs]
    if not run_dirs:
        log.warning("report called with no run directories")
        return "# Report\n\n_No run directories given._\n", []
    sections: dict[str, list[str]] = {}
    plots = []
    for d in run_dirs:
        man = _load_manifest(d)
        if man is None:
            sections.setdefault("missing", []).append(f"### {d.name}\n\n- manifest.json missing\n")
            continue
        fam = man.get("config", {}).get("profile", {}).get("family", "unknown")
        lines = [f"### {man['name']}", "", f"- exit code {man.get('exit_code')}"]
        if man.get("error"):
            lines.append(f"- error: {man['error']}")
        for label in sorted(man.get("checks", {})):
            path = d / f"check_{label}.json"
            if not path.exists():
                lines.append(f"- {label}: check file missing")
                continue
            lines.extend(_check_lines(json.loads(path.read_text(encoding="utf-8"))))
        if out_dir is not None:
            pp = write_plot_csv(d, Path(out_dir))
            if pp is not None:
                plots.append(pp)
                lines.append(f"- plot data: {pp.name}")
            else:
                lines.append("- trajectory CSVs missing")
        sections.setdefault(fam, []).append("\n".join(lines) + "\n")
    out = ["# Report", ""]
    for fam in sorted(sections):
        out.append(f"## {fam}")
        out.append("")
        out.extend(sections[fam])
    return "\n".join(out), plots
