"""Run configuration: JSON text, validated into dataclasses.

Schema (every section and key is optional unless noted; defaults shown)::

    {
      "grid":       {"n_r": 16, "n_theta": 32, "n_z": 9},
      "h":          1.0,
      "profile":    {"kind": "constant", "value": 1.0},
      "beta0":      0.0,
      "initial":    {"scale": 1.0, "F": [...], "G_bottom": [...], "G_top": [...],
                     "j": {"kind": "compatible"}},
      "tolerances": {"compat_tol": 1e-8, "picard_tol": 1e-8, "solver_tol": 1e-8,
                     "ode_tol": 1e-10, "projection_threshold": 1e-3,
                     "flat_tol": 1e-8, "collar": 0.1},
      "time":       {"t_end": 1.0, "cfl_safety": 0.5, "dt_safety": 1e5,
                     "dt_min": 1e-6, "dt_max": null, "max_iter": 30,
                     "max_steps": null, "C_tilde": 1.0, "ball_factor": 4.0,
                     "time_centering": 0.5, "transport_form": "invariant",
                     "mass_fix": true, "polar_filter": true},
      "output":     {"out_dir": "results", "snapshot_every": 10,
                     "particles_per_bump": 32},
      "seed":       0
    }

Recipe kinds are listed in :mod:`cylqg.initial`.  Errors carry the line of
the offending key when it can be located in the text.
"""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from typing import Optional

from .errors import ConfigError
from .initial import F_KINDS, G_KINDS, J_KINDS
from .stratification import PROFILE_KINDS


@dataclass
class GridSpec:
    n_r: int = 16
    n_theta: int = 32
    n_z: int = 9


@dataclass
class Tolerances:
    compat_tol: float = 1e-8
    picard_tol: float = 1e-8
    solver_tol: float = 1e-8
    ode_tol: float = 1e-10
    projection_threshold: float = 1e-3
    flat_tol: float = 1e-8
    collar: float = 0.1


@dataclass
class TimeControls:
    t_end: float = 1.0
    cfl_safety: float = 0.5
    dt_safety: float = 1e5
    dt_min: float = 1e-6
    dt_max: Optional[float] = None
    max_iter: int = 30
    max_steps: Optional[int] = None
    C_tilde: float = 1.0
    ball_factor: float = 4.0
    time_centering: float = 0.5
    transport_form: str = "invariant"
    mass_fix: bool = True
    polar_filter: bool = True


@dataclass
class OutputSpec:
    out_dir: str = "results"
    snapshot_every: int = 10
    particles_per_bump: int = 32


@dataclass
class RunConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    h: float = 1.0
    profile: dict = field(default_factory=lambda: {"kind": "constant", "value": 1.0})
    beta0: float = 0.0
    initial: dict = field(default_factory=lambda: {"j": {"kind": "compatible"}})
    tolerances: Tolerances = field(default_factory=Tolerances)
    time: TimeControls = field(default_factory=TimeControls)
    output: OutputSpec = field(default_factory=OutputSpec)
    seed: int = 0
    base_dir: Optional[str] = None

    def to_dict(self):
        d = asdict(self)
        d.pop("base_dir")
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_SECTIONS = {"grid": GridSpec, "tolerances": Tolerances, "time": TimeControls, "output": OutputSpec}
_TOP = {"grid", "h", "profile", "beta0", "initial", "tolerances", "time", "output", "seed"}


class _Errors:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.items = []

    def line_of(self, key):
        pat = re.compile(r'"%s"\s*:' % re.escape(key))
        for i, ln in enumerate(self.lines, 1):
            if pat.search(ln):
                return i
        return None

    def add(self, path, msg, key=None):
        ln = self.line_of(key or path.split(".")[-1])
        where = f"line {ln}: " if ln else ""
        self.items.append(f"{where}{path}: {msg}")


def _coerce(value, default, path, errs):
    """Check ``value`` against the type of ``default``."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            errs.add(path, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            errs.add(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float) or default is None:
        if default is None and (value is None or (isinstance(value, int) and not isinstance(value, bool))):
            return value
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errs.add(path, f"expected a number, got {value!r}")
            return value
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            errs.add(path, f"expected a string, got {value!r}")
        return value
    return value


def _section(cls, raw, name, errs):
    inst = cls()
    if not isinstance(raw, dict):
        errs.add(name, "expected an object")
        return inst
    for key, value in raw.items():
        if not hasattr(inst, key):
            errs.add(f"{name}.{key}", "unknown key", key)
            continue
        setattr(inst, key, _coerce(value, getattr(cls(), key), f"{name}.{key}", errs))
    return inst


def _check_recipes(initial, errs):
    if not isinstance(initial, dict):
        errs.add("initial", "expected an object")
        return
    for key, kinds in (("F", F_KINDS), ("G_bottom", G_KINDS), ("G_top", G_KINDS)):
        recs = initial.get(key, [])
        if not isinstance(recs, list):
            errs.add(f"initial.{key}", "expected a list of recipes")
            continue
        for i, rec in enumerate(recs):
            if not isinstance(rec, dict) or rec.get("kind") not in kinds:
                kind = rec.get("kind") if isinstance(rec, dict) else rec
                errs.add(f"initial.{key}[{i}]",
                         f"unknown recipe kind {kind!r}; valid kinds: {', '.join(kinds)}", key)
    j = initial.get("j", {"kind": "compatible"})
    if not isinstance(j, dict) or j.get("kind") not in J_KINDS:
        kind = j.get("kind") if isinstance(j, dict) else j
        errs.add("initial.j", f"unknown j kind {kind!r}; valid kinds: {', '.join(J_KINDS)}", "j")
    elif j["kind"] == "constant" and "value" not in j:
        errs.add("initial.j", "constant j needs 'value'", "j")
    elif j["kind"] == "array" and not isinstance(j.get("values"), list):
        errs.add("initial.j", "array j needs a 'values' list", "j")
    elif j["kind"] == "csv" and not isinstance(j.get("path"), str):
        errs.add("initial.j", "csv j needs a 'path'", "j")
    s = initial.get("scale", 1.0)
    if isinstance(s, bool) or not isinstance(s, (int, float)):
        errs.add("initial.scale", f"expected a number, got {s!r}", "scale")


def _check_profile(profile, errs):
    if not isinstance(profile, dict):
        errs.add("profile", "expected an object")
        return
    kind = profile.get("kind")
    if kind not in PROFILE_KINDS:
        errs.add("profile.kind",
                 f"unknown profile kind {kind!r}; valid kinds: {', '.join(PROFILE_KINDS)}", "kind")
        return
    need = {"constant": ("value",), "poly-flat": ("base", "amp"), "samples": ("values",)}[kind]
    for k in need:
        if k not in profile:
            errs.add(f"profile.{k}", f"required for kind {kind!r}", "profile")
    if kind == "constant" and isinstance(profile.get("value"), (int, float)) and profile["value"] <= 0:
        errs.add("profile.value", "must be positive", "value")


def parse_config(text, base_dir=None) -> RunConfig:
    """Parse and validate config text; raises :class:`ConfigError` listing every problem."""
    errs = _Errors(text)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"line {exc.lineno}: invalid JSON: {exc.msg}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be an object"])
    cfg = RunConfig(base_dir=base_dir)
    for key in raw:
        if key not in _TOP:
            errs.add(key, "unknown key")
    for name, cls in _SECTIONS.items():
        if name in raw:
            setattr(cfg, name, _section(cls, raw[name], name, errs))
    for name in ("h", "beta0"):
        if name in raw:
            setattr(cfg, name, _coerce(raw[name], 1.0, name, errs))
    if "seed" in raw:
        cfg.seed = _coerce(raw["seed"], 0, "seed", errs)
    if "profile" in raw:
        cfg.profile = raw["profile"]
    _check_profile(cfg.profile, errs)
    if "initial" in raw:
        cfg.initial = raw["initial"]
    _check_recipes(cfg.initial, errs)

    # value constraints
    if isinstance(cfg.h, (int, float)) and not cfg.h > 0:
        errs.add("h", f"must be positive, got {cfg.h!r}")
    g = cfg.grid
    for k in ("n_r", "n_theta", "n_z"):
        v = getattr(g, k)
        if isinstance(v, int) and v < (5 if k == "n_z" else 4):
            errs.add(f"grid.{k}", f"too small ({v})", k)
    if isinstance(g.n_theta, int) and g.n_theta % 2:
        errs.add("grid.n_theta", f"must be even, got {g.n_theta}", "n_theta")
    for k, v in asdict(cfg.tolerances).items():
        if isinstance(v, (int, float)) and not v > 0:
            errs.add(f"tolerances.{k}", f"must be positive, got {v!r}", k)
    t = cfg.time
    for k in ("t_end", "cfl_safety", "dt_safety", "dt_min", "C_tilde"):
        v = getattr(t, k)
        if isinstance(v, (int, float)) and not v > 0:
            errs.add(f"time.{k}", f"must be positive, got {v!r}", k)
    if isinstance(t.ball_factor, (int, float)) and not t.ball_factor > 1:
        errs.add("time.ball_factor", "must exceed 1", "ball_factor")
    if t.transport_form not in ("invariant", "source"):
        errs.add("time.transport_form", "must be 'invariant' or 'source'", "transport_form")
    if isinstance(t.time_centering, (int, float)) and not 0 <= t.time_centering <= 1:
        errs.add("time.time_centering", "must lie in [0, 1]", "time_centering")
    if isinstance(cfg.output.snapshot_every, int) and cfg.output.snapshot_every < 0:
        errs.add("output.snapshot_every", "must be >= 0", "snapshot_every")
    if errs.items:
        raise ConfigError(errs.items)
    return cfg


def load_config(path) -> RunConfig:
    from pathlib import Path
    p = Path(path)
    return parse_config(p.read_text(), base_dir=str(p.parent))
