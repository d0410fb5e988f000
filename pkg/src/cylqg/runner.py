"""Run orchestration: config -> model and initial state -> run loop -> files on disk.

Output directory layout::

    config.json          normalized config the run used
    diagnostics.csv      one row per accepted step (row 0 is t = 0)
    snapshots/step_NNNNNN.snap
    final.snap           last accepted state
    particles.csv        final marker positions
    status.json          horizon, stop reason and bookkeeping
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import RunConfig, parse_config
from .elliptic import check_full_compatibility
from .errors import InitializationError
from .geometry import make_grid
from .initial import build_initial_data, seed_particles
from .io import DiagnosticsWriter, snapshot_load, snapshot_write
from .stratification import StratificationProfile, validate_profile
from .timestepper import (Controls, QGModel, RunStatus, compat_residual, estimate_R,
                          record_for, run_loop, state_data_norm)
from .transport import write_particles

log = logging.getLogger(__name__)


class ProfileInitError(InitializationError):
    """The stratification profile fails its bound or flatness checks."""


class CompatInitError(InitializationError):
    """The initial data fail full compatibility."""

    def __init__(self, message, report):
        self.report = report
        super().__init__(message)


@dataclass
class RunResult:
    status: RunStatus
    steps: int
    out_dir: Path
    final_state: object
    particles: object

    @property
    def T_star(self):
        return self.status.T_star


def build_profile(cfg: RunConfig) -> StratificationProfile:
    return StratificationProfile.from_spec(cfg.profile, cfg.h)


def build_model(cfg: RunConfig, R_ball=0.0):
    grid = make_grid(cfg.grid.n_r, cfg.grid.n_theta, cfg.grid.n_z, cfg.h)
    profile = build_profile(cfg)
    t, tol = cfg.time, cfg.tolerances
    model = QGModel(grid, profile, cfg.beta0, compat_tol=tol.compat_tol,
                    solver_tol=tol.solver_tol, projection_threshold=tol.projection_threshold,
                    cfl_safety=t.cfl_safety, form=t.transport_form, conserve=t.mass_fix,
                    time_centering=t.time_centering, R_ball=R_ball,
                    filtered=t.polar_filter)
    return model


def build_controls(cfg: RunConfig) -> Controls:
    t = cfg.time
    return Controls(t_end=t.t_end, dt_safety=t.dt_safety, dt_min=t.dt_min,
                    dt_max=np.inf if t.dt_max is None else t.dt_max,
                    picard_tol=cfg.tolerances.picard_tol, max_iter=t.max_iter,
                    max_steps=t.max_steps, C_tilde=t.C_tilde, ball_factor=t.ball_factor)


def initialize(cfg: RunConfig):
    """Validate profile and data, build the model, initial state, status and particles."""
    model = build_model(cfg)
    rep = validate_profile(model.profile, cfg.tolerances.flat_tol, model.grid.z_nodes)
    if not rep.passed:
        raise ProfileInitError(
            "stratification profile fails: " + ", ".join(
                f"{k}={rep.residuals[k]:.3e}" for k in rep.failures()))
    data = build_initial_data(model.grid, model.profile, cfg.initial, cfg.base_dir)
    comp = check_full_compatibility(data, model.profile, cfg.tolerances.compat_tol,
                                    cfg.tolerances.collar)
    if not comp.passed:
        raise CompatInitError("initial data are not fully compatible: " + ", ".join(
            f"{k}={comp.residuals[k]:.3e}" for k in comp.failures()), comp)
    state = model.initial_state(data.f, data.g_bottom, data.g_top, data.j)
    R = estimate_R(data.f, (data.g_bottom, data.g_top), data.j, cfg.time.C_tilde, model.grid)
    model.R_ball = R
    status = RunStatus(state_data_norm(state), R, 0.0, "running", compat_residual(state, model))
    particles = seed_particles(model.grid, cfg.initial, cfg.output.particles_per_bump)
    return model, state, status, particles


def _write_status(out: Path, status: RunStatus, steps):
    d = {k: (float(v) if isinstance(v, (float, np.floating)) else v)
         for k, v in asdict(status).items()}
    d["steps"] = steps
    (out / "status.json").write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")


def _loop(cfg, model, state, status, particles, out: Path, diag: DiagnosticsWriter, stop_after):
    snaps = out / "snapshots"
    snaps.mkdir(exist_ok=True)
    every = cfg.output.snapshot_every
    extra = {"config": cfg.to_dict(), "base_dir": cfg.base_dir}

    def on_step(s, rec, p, st):
        diag.append(rec)
        if every and s.step % every == 0:
            snapshot_write(s, snaps / f"step_{s.step:06d}.snap", st, p, extra)

    state, particles, status = run_loop(state, model, build_controls(cfg), status, particles,
                                        on_step, stop_after)
    snapshot_write(state, out / "final.snap", status, particles, extra)
    if particles is not None:
        write_particles(out / "particles.csv", particles)
    _write_status(out, status, state.step)
    log.info("run stopped at t=%.6g after %d steps (%s)", state.t, state.step, status.reason)
    return RunResult(status, state.step, out, state, particles)


def run(cfg: RunConfig, out_dir=None, stop_after: Optional[int] = None) -> RunResult:
    """Run a config from t = 0.  ``stop_after`` simulates an interruption after N steps."""
    out = Path(out_dir or cfg.output.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, state, status, particles = initialize(cfg)
    (out / "config.json").write_text(cfg.to_json() + "\n")
    diag = DiagnosticsWriter(out / "diagnostics.csv")
    diag.append(record_for(state, model, 0.0, 0, 0.0, particles))
    return _loop(cfg, model, state, status, particles, out, diag, stop_after)


def resume(snapshot_path, out_dir=None, stop_after: Optional[int] = None) -> RunResult:
    """Continue a run from a snapshot written by :func:`run`.

    The diagnostics CSV in ``out_dir`` (default: the snapshot's run
    directory) is truncated to the snapshot's step before appending, so an
    interrupted and resumed run produces the same file as an uninterrupted one.
    """
    snap = snapshot_load(snapshot_path)
    if not snap.extra or "config" not in snap.extra or snap.status is None:
        raise InitializationError(f"{snapshot_path}: snapshot carries no run config/status")
    cfg = parse_config(json.dumps(snap.extra["config"]), snap.extra.get("base_dir"))
    p = Path(snapshot_path).resolve()
    default_out = p.parent.parent if p.parent.name == "snapshots" else p.parent
    out = Path(out_dir) if out_dir else default_out
    out.mkdir(parents=True, exist_ok=True)
    model = build_model(cfg, snap.status.R_ball)
    state = snap.state
    if not model.grid.same_as(state.grid):
        raise InitializationError(f"{snapshot_path}: grid does not match its config")
    status = snap.status
    status.reason = "running"
    diag = DiagnosticsWriter(out / "diagnostics.csv", keep_rows=state.step + 1)
    return _loop(cfg, model, state, status, snap.particles, out, diag, stop_after)

