"""Run experiments from configs and write their artifacts.

A run directory holds::

    manifest.json                config echo, versions, wall time, grid events, verdicts
    trajectory_lambda_<l>.csv    t, lambda, x_min, x_max, empty
    flatness.csv                 t, sup_ux, sup_v, m_plus, m_minus
    check_<label>.json           one per configured check
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import platform
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..fronts import expected_speed_from_tail
from ..levelsets import average_speed, fit_growth_law, predicted_growth
from ..profiles import TargetCurve
from ..solver import run
from ..theory import (band_membership, derive_comparison_params, flatness_observer, flatness_report,
                      ode_reduction_residual, records_from_rows, refined_band, sandwich_report)
from .config import ExperimentConfig, dumps

log = logging.getLogger(__name__)

EXIT_OK, EXIT_RUNTIME, EXIT_CHECKS = 0, 1, 2
TRAJ_COLUMNS = ("t", "lambda", "x_min", "x_max", "empty")
FLAT_COLUMNS = ("t", "sup_ux", "sup_v", "m_plus", "m_minus")
ENV_OUTPUT = "KPP_ACCEL_OUTPUT"
LAW_PARAM = {"linear": "speed", "t_log_t": "slope", "power": "exponent", "exponential": "rate",
             "double_exponential": "rate"}


def default_output_root() -> Path:
    return Path(os.environ.get(ENV_OUTPUT, "runs"))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def level_tag(lam: float) -> str:
    return repr(float(lam))


def write_trajectory(path: Path, traj):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJ_COLUMNS)
        for row in traj.rows():
            w.writerow([_fmt(row[c]) for c in TRAJ_COLUMNS])


def write_flatness(path: Path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FLAT_COLUMNS)
        for row in rows:
            if "sup_v" in row:
                w.writerow([_fmt(row[c]) for c in FLAT_COLUMNS])


def write_json(path: Path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# checks


def _rel_ok(measured, expected, rtol):
    return abs(measured - expected) <= rtol * abs(expected)


def evaluate_check(chk: dict, cfg: ExperimentConfig, record, p, nl) -> dict:
    """Run one configured check on a finished record; returns a JSON-ready dict with ``pass``."""
    kind = chk["type"]
    out = {"check": kind, "label": chk["label"], "params": {k: v for k, v in chk.items() if k not in ("label",)}}
    if kind == "fit":
        lam = float(chk.get("level", 0.5))
        pred = predicted_growth(p.family, p.params, nl.fprime0)
        law = chk.get("law", pred.get("law"))
        fit = fit_growth_law(record.trajectories[lam], law, chk["window"], use=chk.get("use", "x_min"))
        out["fit"] = fit.to_dict()
        rows = []
        ok = True
        for name in str(chk.get("param", LAW_PARAM[law])).split("+"):
            name = name.strip()
            expected = chk.get(f"expected_{name}", pred.get(name) if pred.get("law") == law else None)
            rtol = float(chk.get(f"rtol_{name}", chk.get("rtol", 0.05)))
            measured = fit.params[name]
            passed = None if expected is None else _rel_ok(measured, float(expected), rtol)
            rows.append({"param": name, "measured": measured, "predicted": expected, "rtol": rtol, "pass": passed})
            ok = ok and passed is not False
        out["comparisons"] = rows
        out["pass"] = bool(ok)
    elif kind == "speed":
        lam = float(chk.get("level", 0.5))
        t1, t2 = chk["window"]
        c = average_speed(record.trajectories[lam], t1, t2)
        expected = float(chk.get("expected", expected_speed_from_tail(p.params["alpha"], nl)))
        rtol = float(chk.get("rtol", 0.02))
        out.update(measured=c, predicted=expected, rtol=rtol)
        out["pass"] = _rel_ok(c, expected, rtol)
    elif kind in ("band", "ode_reduction"):
        levels = chk.get("levels", list(cfg.levels))
        eps_list = chk.get("eps_list", [chk["eps"]] if "eps" in chk else [0.2])
        per = []
        for lam in levels:
            for eps in eps_list:
                traj = record.trajectories[float(lam)]
                if kind == "band":
                    gamma = float(chk.get("gamma", lam))
                    Gamma = float(chk.get("Gamma", chk.get("gamma_upper", lam)))
                    rep = band_membership(traj, p, nl, eps, gamma, Gamma)
                else:
                    rep = ode_reduction_residual(traj, p, nl, eps)
                per.append(rep.to_dict())
        # larger eps never enters later
        mono = True
        for lam in levels:
            entries = [r["entry_time"] for r in per if r["params"]["lambda"] == lam]
            entries = [math.inf if e is None else e for e in entries]
            eps_sorted = sorted(range(len(eps_list)), key=lambda i: eps_list[i])
            seq = [entries[i] for i in eps_sorted]
            mono = mono and all(b <= a for a, b in zip(seq, seq[1:]))
        out["results"] = per
        out["entry_monotone_in_eps"] = mono
        out["pass"] = bool(all(r["pass"] for r in per) and mono)
    elif kind == "sandwich":
        eps = float(chk.get("eps", 0.4))
        cs = derive_comparison_params(p, nl, eps, "super")
        cb = derive_comparison_params(p, nl, eps, "sub")
        rep = sandwich_report(record, cs, cb, p, tol=float(chk.get("tol", 1e-3)))
        out.update(rep.to_dict())
        out["super"] = cs.to_dict()
        out["sub"] = cb.to_dict()
        out["check"] = kind
    elif kind == "flatness":
        rt = chk.get("ratio_times")
        rep = flatness_report(records_from_rows(record.rows), slack=float(chk.get("slack", 1e-6)),
                              ratio_times=tuple(rt) if rt else None,
                              ratio_limit=float(chk.get("ratio_limit", 0.5)))
        out.update(rep.to_dict())
    elif kind == "refined_band":
        levels = chk.get("levels", list(cfg.levels))
        reps = [refined_band(record.trajectories[float(lam)], p, nl, window=tuple(chk.get("window", (10, 25))),
                             bracket=tuple(chk.get("bracket", (0.02, 50.0)))) for lam in levels]
        floor = float(chk.get("c_floor", min(reps[0].bracket) / max(levels)))
        c_common = min(r.r_min / r.lam for r in reps)
        out["results"] = [r.to_dict() for r in reps]
        out["c_common"] = c_common
        out["c_floor"] = floor
        out["pass"] = bool(all(r.passed for r in reps) and c_common >= floor)
    elif kind == "lower_curve":
        lam = float(chk.get("level", 0.5))
        curve = TargetCurve(str(chk.get("curve", p.params.get("curve"))), float(chk.get("coef", p.params.get("coef", 1.0))))
        scale = float(chk.get("time_scale", 0.5))
        t, xmin, _ = record.trajectories[lam].window(*chk["window"])
        bound = np.asarray(curve(scale * t), dtype=float)
        margin = xmin - bound
        out.update(n=int(len(t)), worst_margin=float(margin.min()) if len(t) else None,
                   worst_at=float(t[int(np.argmin(margin))]) if len(t) else None)
        out["pass"] = bool(len(t) > 0 and np.all(margin >= 0))
    return out


# ---------------------------------------------------------------------------
# runs


def _invariant_summary(record) -> dict:
    fs = record.final_state
    return {"status": "violation" if record.error else "ok", "error": record.error,
            "diagnostic": record.diagnostic, "steps": record.steps, "rejected": record.rejected,
            "final_t": None if fs is None else fs.t,
            "final_nodes": None if fs is None else int(len(fs.grid.nodes)),
            "final_x_right": None if fs is None else fs.grid.x_right}


def run_experiment(cfg: ExperimentConfig, output_dir=None) -> tuple[Path, int]:
    """Run ``cfg`` and write its directory.  Returns ``(run_dir, exit_code)``."""
    root = Path(output_dir or cfg.output_dir or default_output_root())
    run_dir = root / cfg.name
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"name": cfg.name, "config": cfg.to_dict(), "config_ini": dumps(cfg),
                "versions": {"kpp_accel": __version__, "python": platform.python_version(),
                             "numpy": np.__version__, "scipy": scipy.__version__},
                "files": [], "checks": {}}
    t0 = time.perf_counter()
    exit_code = EXIT_OK
    record = None
    try:
        p, nl = cfg.build_profile(), cfg.build_nonlinearity()
        manifest["profile"] = p.to_dict()
        keep = any(c["type"] == "sandwich" for c in cfg.checks)
        record = run(p, nl, cfg.solver_config(), cfg.t_end, observers=(flatness_observer,), levels=cfg.levels,
                     grid=cfg.grid_spec(), raise_on_error=False, keep_snapshots=keep)
        if record.error:
            exit_code = EXIT_RUNTIME
            manifest["error"] = record.error
    except Exception as exc:  # noqa: BLE001 - recorded, not swallowed
        exit_code = EXIT_RUNTIME
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["traceback"] = traceback.format_exc()

    if record is not None:
        for lam, traj in record.trajectories.items():
            fname = f"trajectory_lambda_{level_tag(lam)}.csv"
            write_trajectory(run_dir / fname, traj)
            manifest["files"].append(fname)
        write_flatness(run_dir / "flatness.csv", record.rows)
        manifest["files"].append("flatness.csv")
        manifest["grid_events"] = record.expansions
        manifest["invariants"] = _invariant_summary(record)
        if not record.error:
            for chk in cfg.checks:
                try:
                    res = evaluate_check(chk, cfg, record, p, nl)
                except Exception as exc:  # noqa: BLE001
                    res = {"check": chk["type"], "label": chk["label"], "pass": False,
                           "error": f"{type(exc).__name__}: {exc}"}
                fname = f"check_{chk['label']}.json"
                write_json(run_dir / fname, res)
                manifest["files"].append(fname)
                manifest["checks"][chk["label"]] = bool(res["pass"])
                if not res["pass"] and exit_code == EXIT_OK:
                    exit_code = EXIT_CHECKS
    manifest["wall_time_s"] = time.perf_counter() - t0
    manifest["exit_code"] = exit_code
    write_json(run_dir / "manifest.json", manifest)
    log.info("%s finished with exit code %d in %.2fs", cfg.name, exit_code, manifest["wall_time_s"])
    return run_dir, exit_code


# ---------------------------------------------------------------------------
# sweeps

SUMMARY_BASE = ("name", "family", "status", "exit_code")


def _summary_row(cfg: ExperimentConfig, run_dir: Path, exit_code: int) -> dict:
    row = {"name": cfg.name, "family": cfg.profile.get("family"),
           "status": {EXIT_OK: "pass", EXIT_CHECKS: "check_failed"}.get(exit_code, "error"), "exit_code": exit_code}
    for path in sorted(run_dir.glob("check_*.json")):
        res = json.loads(path.read_text(encoding="utf-8"))
        label = res.get("label", path.stem[6:])
        row[f"{label}.pass"] = int(bool(res.get("pass")))
        for cmp_ in res.get("comparisons", []):
            row[f"{label}.{cmp_['param']}"] = cmp_["measured"]
        if "measured" in res:
            row[f"{label}.measured"] = res["measured"]
    return row


def _sweep_worker(args):
    cfg, root = args
    try:
        run_dir, code = run_experiment(cfg, root)
        return _summary_row(cfg, run_dir, code)
    except Exception as exc:  # noqa: BLE001 - isolate failures
        return {"name": cfg.name, "family": cfg.profile.get("family"), "status": "error",
                "exit_code": EXIT_RUNTIME, "error": f"{type(exc).__name__}: {exc}"}


def sweep(cfgs, output_dir=None, workers: int = 1) -> tuple[list[dict], Path]:
    """Run configs on up to ``workers`` processes; write ``summary.csv`` in input order."""
    cfgs = list(cfgs)
    if not cfgs:
        raise ValueError("sweep needs at least one config")
    names = [c.name for c in cfgs]
    if len(set(names)) != len(names):
        raise ValueError("experiment names in a sweep must be unique")
    root = Path(output_dir or default_output_root())
    root.mkdir(parents=True, exist_ok=True)
    jobs = [(c, str(root)) for c in cfgs]
    if workers <= 1:
        rows = [_sweep_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_worker, jobs))
    cols = list(SUMMARY_BASE) + sorted({k for r in rows for k in r} - set(SUMMARY_BASE))
    path = root / "summary.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow(["" if r.get(c) is None else (r[c] if isinstance(r[c], str) else _fmt(r[c])) for c in cols])
    return rows, path
