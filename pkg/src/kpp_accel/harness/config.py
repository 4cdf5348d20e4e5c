"""INI experiment configs.

Example::

    [experiment]
    name = algebraic_a2
    t_end = 25
    levels = 0.25, 0.5, 0.75

    [profile]
    family = algebraic
    alpha = 2

    [nonlinearity]
    name = logistic
    r = 1

    [solver]
    obs_dt = 0.5

    [grid]
    kind = log_stretched

    [check:growth]
    type = fit
    law = exponential
    window = 10, 25

Every ``[check:<label>]`` section needs a ``type``; see ``CHECK_TYPES``.
Validation happens entirely at load time, before anything is computed.
"""

from __future__ import annotations

import configparser
import io
import json
from dataclasses import asdict, dataclass, field, fields

from ..levelsets import LAWS
from ..nonlinearity import Nonlinearity, from_config as nl_from_config
from ..profiles import InitialProfile, from_config as profile_from_config
from ..solver import GridSpec, SolverConfig

CHECK_TYPES = ("fit", "speed", "band", "ode_reduction", "sandwich", "flatness", "refined_band", "lower_curve")
PROFILE_KEYS = ("family", "plateau", "x_blend", "blend_width")


class ConfigError(ValueError):
    pass


def _num(v: str):
    try:
        f = float(v)
    except ValueError:
        return v.strip()
    return int(f) if f.is_integer() and "." not in v and "e" not in v.lower() else f


def _floats(v: str) -> list[float]:
    return [float(s) for s in v.replace(";", ",").split(",") if s.strip()]


@dataclass
class ExperimentConfig:
    name: str
    profile: dict
    nonlinearity: dict
    t_end: float
    levels: tuple = (0.5,)
    solver: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    output_dir: str | None = None

    def __post_init__(self):
        self.levels = tuple(float(l) for l in self.levels)
        self.validate()

    def validate(self):
        if not self.name or any(c in self.name for c in "/\\"):
            raise ConfigError(f"invalid experiment name {self.name!r}")
        if not self.levels:
            raise ConfigError("at least one level is required")
        for lam in self.levels:
            if not 0.0 < lam < 1.0:
                raise ConfigError(f"level {lam} outside (0, 1)")
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive")
        try:
            self.build_profile()
            self.build_nonlinearity()
            self.solver_config()
            self.grid_spec()
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        for chk in self.checks:
            _validate_check(chk, self)

    def build_profile(self) -> InitialProfile:
        return profile_from_config(self.profile)

    def build_nonlinearity(self) -> Nonlinearity:
        params = {k: v for k, v in self.nonlinearity.items() if k != "name"}
        return nl_from_config(self.nonlinearity.get("name", "logistic"), params)

    def solver_config(self) -> SolverConfig:
        known = {f.name for f in fields(SolverConfig)}
        bad = set(self.solver) - known
        if bad:
            raise ConfigError(f"unknown solver keys {sorted(bad)}")
        return SolverConfig(**self.solver)

    def grid_spec(self) -> GridSpec:
        known = {f.name for f in fields(GridSpec)}
        bad = set(self.grid) - known
        if bad:
            raise ConfigError(f"unknown grid keys {sorted(bad)}")
        return GridSpec(**self.grid)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["levels"] = list(self.levels)
        d.pop("output_dir")
        return d

    def canonical(self) -> str:
        """Sorted-key INI text; loads back to an equal config."""
        return dumps(self)


def _validate_check(chk: dict, cfg: ExperimentConfig):
    kind = chk.get("type")
    if kind not in CHECK_TYPES:
        raise ConfigError(f"check {chk.get('label')!r}: unknown type {kind!r}; known: {CHECK_TYPES}")
    if kind == "fit" and chk.get("law") is not None and chk["law"] not in LAWS:
        raise ConfigError(f"check {chk['label']!r}: unknown law {chk['law']!r}")
    for key in ("window", "ratio_times", "bracket"):
        if key in chk and (len(chk[key]) != 2 or not chk[key][0] < chk[key][1]):
            raise ConfigError(f"check {chk['label']!r}: {key} must be an increasing pair")
    for lam in chk.get("levels", []):
        if lam not in cfg.levels:
            raise ConfigError(f"check {chk['label']!r}: level {lam} is not tracked")
    if "level" in chk and chk["level"] not in cfg.levels:
        raise ConfigError(f"check {chk['label']!r}: level {chk['level']} is not tracked")
    eps = chk.get("eps")
    if eps is not None and not eps > 0:
        raise ConfigError(f"check {chk['label']!r}: eps must be positive")


_LIST_KEYS = ("window", "ratio_times", "bracket", "levels", "eps_list")


def _parse_check(label: str, section) -> dict:
    chk = {"label": label}
    for k, v in section.items():
        if k in _LIST_KEYS:
            chk[k] = _floats(v)
        else:
            chk[k] = _num(v)
    return chk


def loads(text: str, output_dir: str | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for sec in ("experiment", "profile"):
        if not cp.has_section(sec):
            raise ConfigError(f"missing [{sec}] section")
    exp = cp["experiment"]
    try:
        t_end = float(exp["t_end"])
    except (KeyError, ValueError) as exc:
        raise ConfigError("[experiment] needs a numeric t_end") from exc
    try:
        levels = _floats(exp.get("levels", "0.5"))
    except ValueError as exc:
        raise ConfigError(f"bad levels: {exc}") from exc
    prof_sec = cp["profile"]
    if "family" not in prof_sec:
        raise ConfigError("[profile] needs a family")
    profile = {"family": prof_sec["family"].strip(), "params": {}}
    for k, v in prof_sec.items():
        if k == "family":
            continue
        if k in PROFILE_KEYS:
            profile[k] = float(v)
        else:
            profile["params"][k] = _num(v)
    nonlin = {"name": "logistic", "r": 1.0}
    if cp.has_section("nonlinearity"):
        nonlin = {k: _num(v) for k, v in cp["nonlinearity"].items()}
        nonlin.setdefault("name", "logistic")
    solver = {}
    if cp.has_section("solver"):
        for k, v in cp["solver"].items():
            if k == "check_monotone":
                solver[k] = cp["solver"].getboolean(k)
            elif k == "dt" and v.strip().lower() in ("none", "adaptive"):
                solver[k] = None
            else:
                solver[k] = float(v) if k != "max_steps" else int(float(v))
    grid = {}
    if cp.has_section("grid"):
        for k, v in cp["grid"].items():
            if k == "kind":
                grid[k] = v.strip()
            elif k == "relative":
                grid[k] = cp["grid"].getboolean(k)
            elif k == "budget":
                grid[k] = int(float(v))
            else:
                grid[k] = float(v)
    checks = [_parse_check(sec.split(":", 1)[1].strip(), cp[sec]) for sec in cp.sections() if sec.startswith("check:")]
    known = {"experiment", "profile", "nonlinearity", "solver", "grid"}
    unknown = [s for s in cp.sections() if s not in known and not s.startswith("check:")]
    if unknown:
        raise ConfigError(f"unknown sections {unknown}")
    return ExperimentConfig(name=exp.get("name", "experiment").strip(), profile=profile, nonlinearity=nonlin,
                            t_end=t_end, levels=tuple(levels), solver=solver, grid=grid, checks=checks,
                            output_dir=output_dir or exp.get("output_dir"))


def load(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(x) for x in v)
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def dumps(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["experiment"] = {"name": cfg.name, "t_end": _fmt(cfg.t_end), "levels": _fmt(list(cfg.levels))}
    prof = {"family": cfg.profile["family"]}
    for k in PROFILE_KEYS[1:]:
        if cfg.profile.get(k) is not None:
            prof[k] = _fmt(cfg.profile[k])
    for k in sorted(cfg.profile.get("params", {})):
        prof[k] = _fmt(cfg.profile["params"][k])
    cp["profile"] = prof
    cp["nonlinearity"] = {k: _fmt(cfg.nonlinearity[k]) for k in sorted(cfg.nonlinearity)}
    if cfg.solver:
        cp["solver"] = {k: _fmt(cfg.solver[k]) for k in sorted(cfg.solver)}
    if cfg.grid:
        cp["grid"] = {k: _fmt(cfg.grid[k]) for k in sorted(cfg.grid)}
    for chk in cfg.checks:
        cp[f"check:{chk['label']}"] = {k: _fmt(chk[k]) for k in sorted(chk) if k != "label"}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def config_json(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True)
