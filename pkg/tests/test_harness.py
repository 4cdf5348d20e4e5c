import csv
import json
import math

import pytest

from kpp_accel.harness import (EXIT_CHECKS, EXIT_OK, EXIT_RUNTIME, ConfigError, dumps, load, loads, report,
                               run_experiment, sweep)
from kpp_accel.harness.cli import main
from kpp_accel.harness.experiment import ENV_OUTPUT, TRAJ_COLUMNS, default_output_root

from pathlib import Path

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SHORT = """
[experiment]
name = {name}
t_end = 2
levels = 0.1

[profile]
family = {family}
{params}

[nonlinearity]
name = logistic
r = 1
{extra}
"""

FAMILIES = {"exponential": "alpha = 0.5", "algebraic": "alpha = 2", "stretched_exp": "alpha = 0.5\nbeta = 1",
            "log_power": "alpha = 1\nbeta = 1"}


def short_cfgs():
    return [loads(SHORT.format(name=f"s_{fam}", family=fam, params=par, extra="")) for fam, par in FAMILIES.items()]


def test_minimal_run_layout(tmp_path):
    run_dir, code = run_experiment(load(CONFIGS / "minimal.ini"), tmp_path)
    assert code == EXIT_OK
    man = json.loads((run_dir / "manifest.json").read_text())
    trajs = sorted(run_dir.glob("trajectory_lambda_*.csv"))
    assert len(trajs) == 1
    with open(trajs[0]) as fh:
        assert tuple(next(csv.reader(fh))) == TRAJ_COLUMNS
    assert {"config", "config_ini", "versions", "wall_time_s", "invariants", "exit_code"} <= set(man)
    assert man["invariants"]["status"] == "ok"
    assert loads(man["config_ini"]).to_dict() == load(CONFIGS / "minimal.ini").to_dict()


def test_rerun_is_byte_identical(tmp_path):
    cfg = load(CONFIGS / "minimal.ini")
    a, _ = run_experiment(cfg, tmp_path / "a")
    b, _ = run_experiment(cfg, tmp_path / "b")
    for name in ("flatness.csv",) + tuple(p.name for p in a.glob("trajectory_*.csv")):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_invalid_level_rejected_before_compute(tmp_path):
    text = (CONFIGS / "minimal.ini").read_text().replace("levels = 0.5", "levels = 1.5")
    with pytest.raises(ConfigError):
        loads(text)
    bad = tmp_path / "bad.ini"
    bad.write_text(text)
    assert main(["run", "--config", str(bad), "--output", str(tmp_path / "out")]) == EXIT_RUNTIME
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("text, msg", [
    ("[experiment]\nt_end = 1\n", "profile"),
    ("[experiment]\nt_end = 1\n[profile]\nfamily = nope\n", "nope"),
    ("[experiment]\nt_end = 1\n[profile]\nfamily = algebraic\nalpha = 2\n[check:x]\ntype = magic\n", "magic"),
    ("[experiment]\nt_end = 1\nlevels = 0.5\n[profile]\nfamily = algebraic\nalpha = 2\n[check:x]\ntype = fit\n"
     "window = 5, 1\n", "increasing"),
    ("[experiment]\nt_end = 1\n[profile]\nfamily = algebraic\nalpha = 2\n[grid]\nbogus = 1\n", "bogus"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        loads(text)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.ini")), ids=lambda p: p.stem)
def test_ini_round_trip(path):
    cfg = load(path)
    again = loads(dumps(cfg))
    assert again.to_dict() == cfg.to_dict()
    assert dumps(again) == dumps(cfg)


def _strip_wall(rows):
    return [{k: v for k, v in r.items() if "wall" not in k} for r in rows]


def test_sweep_four_families_parallel_matches_serial(tmp_path):
    rows1, p1 = sweep(short_cfgs(), tmp_path / "w1", workers=1)
    rows4, p4 = sweep(short_cfgs(), tmp_path / "w4", workers=4)
    assert len(rows1) == 4 and [r["family"] for r in rows1] == list(FAMILIES)
    assert _strip_wall(rows1) == _strip_wall(rows4)
    assert p1.read_bytes() == p4.read_bytes()
    with open(p1) as fh:
        assert len(list(csv.DictReader(fh))) == 4
    for fam in FAMILIES:
        t1 = sorted((tmp_path / "w1" / f"s_{fam}").glob("trajectory_*.csv"))[0]
        t4 = tmp_path / "w4" / f"s_{fam}" / t1.name
        assert t1.read_bytes() == t4.read_bytes()


def test_sweep_isolates_failure(tmp_path):
    cfgs = short_cfgs()[:3]
    cfgs.append(loads(SHORT.format(name="broken", family="algebraic", params="alpha = 2",
                                   extra="[solver]\nmax_steps = 2\n")))
    rows, path = sweep(cfgs, tmp_path, workers=2)
    assert [r["status"] for r in rows[:3]] == ["pass"] * 3
    assert rows[3]["status"] == "error" and rows[3]["exit_code"] == EXIT_RUNTIME
    man = json.loads((tmp_path / "broken" / "manifest.json").read_text())
    assert man["error"] and man["exit_code"] == EXIT_RUNTIME


def test_sweep_rejects_empty():
    with pytest.raises(ValueError):
        sweep([])


def test_failing_check_gives_exit_2(tmp_path):
    text = (CONFIGS / "minimal.ini").read_text() + "\n[check:speed]\ntype = speed\nlevel = 0.5\nexpected = 9\n" \
                                                   "window = 0.5, 1\n"
    run_dir, code = run_experiment(loads(text), tmp_path)
    assert code == EXIT_CHECKS
    res = json.loads((run_dir / "check_speed.json").read_text())
    assert res["pass"] is False


@pytest.fixture(scope="module")
def algebraic_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    run_dir, code = run_experiment(load(CONFIGS / "algebraic_a2.ini"), root)
    assert code == EXIT_OK
    return run_dir


def test_report_algebraic_row(algebraic_dir, tmp_path):
    text, plots = report([algebraic_dir], tmp_path)
    line = next(l for l in text.splitlines() if "exp. rate" in l)
    assert "predicted 0.500" in line and "tol 5%" in line and line.endswith("(PASS)")
    measured = float(line.split("measured ")[1].split(",")[0])
    assert math.isclose(measured, 0.5, rel_tol=0.05)
    with open(plots[0]) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["t", "lambda", "x", "ln_x", "ln_ln_x"]
    r = rows[-1]
    assert math.isclose(float(r["ln_x"]), math.log(float(r["x"])))


def test_report_empty_input(caplog):
    text, plots = report([])
    assert plots == [] and "No run directories" in text
    assert any("no run directories" in r.message for r in caplog.records)


def test_report_sections_per_family(tmp_path, algebraic_dir):
    rows, _ = sweep(short_cfgs()[:2], tmp_path)
    text, _ = report([algebraic_dir, tmp_path / "s_exponential", tmp_path / "s_algebraic", tmp_path / "nothing"])
    heads = [l for l in text.splitlines() if l.startswith("## ")]
    assert heads == ["## algebraic", "## exponential", "## missing"]


def test_default_output_root_env(monkeypatch, tmp_path):
    monkeypatch.setenv(ENV_OUTPUT, str(tmp_path / "env"))
    assert default_output_root() == tmp_path / "env"
    monkeypatch.delenv(ENV_OUTPUT)
    assert default_output_root() == Path("runs")


# -- CLI --------------------------------------------------------------------

def test_cli_run_and_fit_and_report(tmp_path, capsys, algebraic_dir):
    assert main(["run", "--config", str(CONFIGS / "minimal.ini"), "--output", str(tmp_path)]) == EXIT_OK
    traj = next((tmp_path / "minimal").glob("trajectory_*.csv"))
    assert main(["fit", "--trajectory", str(traj), "--law", "linear", "--window", "0.5", "1"]) == EXIT_RUNTIME
    assert "at least" in capsys.readouterr().err
    traj = algebraic_dir / "trajectory_lambda_0.5.csv"
    assert main(["fit", "--trajectory", str(traj), "--law", "exponential", "--window", "10", "25"]) == EXIT_OK
    fit = json.loads(capsys.readouterr().out)
    assert fit["law"] == "exponential" and fit["n"] == 31
    assert math.isclose(fit["params"]["rate"], 0.5, rel_tol=0.05)
    assert main(["report", str(tmp_path / "minimal"), "--output", str(tmp_path / "rep")]) == EXIT_OK
    assert (tmp_path / "rep" / "report.md").exists()


def test_cli_sweep_directory(tmp_path):
    d = tmp_path / "cfgs"
    d.mkdir()
    for c in short_cfgs()[:2]:
        (d / f"{c.name}.ini").write_text(dumps(c))
    assert main(["sweep", "--config", str(d), "--workers", "2", "--output", str(tmp_path / "out")]) == EXIT_OK
    assert (tmp_path / "out" / "summary.csv").exists()


def test_cli_front(tmp_path, capsys):
    out = tmp_path / "front.csv"
    assert main(["front", "--speed", "2.5", "--points", "101", "--output", str(out)]) == EXIT_OK
    info = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert info["residual"] < 1e-6 and abs(info["tail_rate"] - 0.5) < 0.01
    with open(out) as fh:
        assert len(list(csv.reader(fh))) == 102
    assert main(["front", "--speed", "1.0"]) == EXIT_RUNTIME


def test_cli_check_kpp(capsys):
    assert main(["check-kpp", "--samples", "2000"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_module_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "kpp_accel", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "check-kpp" in res.stdout
