"""Acceptance battery.  Each test prints one ``[PASS]/[FAIL] criterion N`` line.

Tolerances are pinned here; see the README for what each criterion checks.
"""
import copy
import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from oracles import dense_mixed_solve
from scipy.interpolate import CubicSpline

from cylqg import (EllipticData, EllipticSolver, ScalarField3D, StratificationProfile,
                   SurfaceField, make_grid, parse_config)
from cylqg.diagnostics import (commutator_check, first_eigenfunction_datum,
                               manufactured_convergence, sqg_refinement)
from cylqg.elliptic import VerticalGeometry, compatibility_imbalance
from cylqg.initial import build_initial_data
from cylqg.manufactured import CATALOGUE, make_manufactured, sample_terms
from cylqg.runner import build_controls, initialize, resume, run
from cylqg.timestepper import (Controls, QGModel, RunStatus, choose_dt, measure_contraction,
                               record_for, run_loop)

pytestmark = pytest.mark.acceptance

# pinned tolerances
ORDER_MIN = 1.9
SOLVE_SECONDS_MAX = 10.0
ORACLE_TOL = 1e-8
CHART_FACTOR = 2.0
MASS_DRIFT_MAX = 1e-4
ENERGY_DRIFT_MAX = 1e-3
REFINE_GAIN_MIN = 2.0
MASS_ROUNDOFF = 1e-12
CONTRACTION_MAX = 0.5
LINEAR_R2_MIN = 0.9
HORIZON_RATIO = (1.5, 3.0)
SUPPORT_FRACTION_MIN = 0.5
COMPAT_GROWTH_MAX = 10.0
TRACE_MIN = 1e-6
DIRICHLET_TRACE_MAX = 1e-12
SQG_STABILITY_MAX = 0.10
COMMUTATOR_STABILITY_MAX = 1.5

REFERENCE = {
    "grid": {"n_r": 16, "n_theta": 32, "n_z": 9},
    "h": 1.0,
    "profile": {"kind": "constant", "value": 1.0},
    "initial": {
        "F": [{"kind": "bump", "center": [0.2, 0.0, 0.5], "radius": 0.45, "height": 0.4}],
        "G_bottom": [{"kind": "bump", "amplitude": 0.5, "center": [-0.1, 0.2], "radius": 0.45}],
    },
    "time": {"t_end": 2.0, "ball_factor": 4.0},
}


def _cfg(**changes):
    raw = copy.deepcopy(REFERENCE)
    for key, value in changes.items():
        section, _, name = key.partition("__")
        if name:
            raw.setdefault(section, {})[name] = value
        else:
            raw[section] = value
    return parse_config(json.dumps(raw))


def test_criterion_1_manufactured_convergence(verdict):
    rows = manufactured_convergence(sizes=(16, 32))
    fine = [r for r in rows if r.n == 32]
    worst_order = min(r.order for r in fine)
    slowest = max(r.seconds for r in rows)
    ok = worst_order >= ORDER_MIN and slowest < SOLVE_SECONDS_MAX
    detail = ", ".join(f"{r.case} {r.order:.2f}" for r in fine)
    verdict(1, ok, f"L2 orders 16->32: {detail} (min {ORDER_MIN}); "
                   f"slowest solve {slowest:.2f} s (max {SOLVE_SECONDS_MAX} s)")
    assert ok


def test_criterion_2_dense_oracle(verdict):
    h = 1.0
    prof = StratificationProfile.poly_flat(1.5, 0.7, h)
    g = make_grid(8, 4, 8, h)
    rng = np.random.default_rng(2)
    f = np.broadcast_to(rng.normal(size=(8, 1, 8)), g.shape).copy()
    gb = np.broadcast_to(rng.normal(size=(8, 1)), g.disk_shape).copy()
    gt = np.broadcast_to(rng.normal(size=(8, 1)), g.disk_shape).copy()
    j = rng.normal(size=8)
    d = EllipticData(ScalarField3D(g, f), SurfaceField(g, "bottom", gb), SurfaceField(g, "top", gt), j)
    j = j + compatibility_imbalance(d, prof) / (2 * np.pi * h)
    d = EllipticData(d.f, d.g_bottom, d.g_top, j)
    u = EllipticSolver(g, prof).solve(d).psi.values
    # 2-D (r, z) oracle: the same balance with a single azimuthal sample
    ref = dense_mixed_solve(8, 1, 8, h, prof, f[:, :1], gb[:, :1], gt[:, :1], j)
    err = float(np.max(np.abs(u - ref)))
    ok = err <= ORACLE_TOL
    verdict(2, ok, f"axisymmetric solve vs dense (r,z) oracle on 8x8: max diff {err:.2e} "
                   f"(tol {ORACLE_TOL:.0e})")
    assert ok


def _chart_comparison(n, h, prof):
    terms = CATALOGUE["mixed"]
    g = make_grid(n, 2 * n, 2 * n + 1, h)
    mc = make_manufactured("mixed", g, prof)
    ud = EllipticSolver(g, prof).solve(mc.data).psi.values
    vg = VerticalGeometry.chart(g, prof)
    pe, f, gb, gt, j = sample_terms(terms, prof, g.r_nodes, g.theta_nodes, vg.nodes)
    uc, _ = EllipticSolver(g, prof, vertical=vg).solve_arrays(f, gb, gt, j)
    W = g.radial_volumes[:, None, None] * g.dtheta * vg.weights[None, None, :]
    ex_c = pe - np.sum(W * pe) / (np.sum(W) * g.n_theta)
    e_d = np.sqrt(g.integrate((ud - mc.psi_exact_meanfree) ** 2))
    e_c = np.sqrt(np.sum(W * (uc - ex_c) ** 2))
    uc_phys = CubicSpline(vg.nodes, uc, axis=2)(g.z_nodes)
    diff = np.sqrt(g.integrate((ud - uc_phys) ** 2))
    return e_d, e_c, diff


def test_criterion_3_chart_cross_validation(verdict):
    h = 2.0
    prof = StratificationProfile.poly_flat(2.0, 1.0, h)  # 2 + z^4 (h - z)^4
    ratios = []
    for n in (8, 16):
        e_d, e_c, diff = _chart_comparison(n, h, prof)
        ratios.append(diff / (e_d + e_c))
    ok = max(ratios) <= CHART_FACTOR
    verdict(3, ok, f"||u_default - u_chart|| / (e_default + e_chart) = "
                   f"{', '.join(f'{r:.3f}' for r in ratios)} at n_r = 8, 16 (max {CHART_FACTOR})")
    assert ok


def _conservation_run(n):
    g = make_grid(n, 2 * n, n // 2 + 1, 1.0)
    prof = StratificationProfile.constant(1.0, 1.0)
    data = build_initial_data(g, prof, REFERENCE["initial"])
    model = QGModel(g, prof)
    st = model.initial_state(data.f, data.g_bottom, data.g_top, data.j)
    r0 = record_for(st, model, 0.0, 0, 0.0, None)
    recs = []
    ctl = Controls(t_end=1e9, dt_max=0.002, ball_factor=1e30, max_steps=100)
    run_loop(st, model, ctl, RunStatus(1.0, 1.0), None, lambda s, r, p, x: recs.append(r))
    r = recs[-1]
    return (len(recs), abs(r.mass_F / r0.mass_F - 1), abs(r.mass_G / r0.mass_G - 1),
            abs(r.energy / r0.energy - 1))


def _gain_ok(coarse, fine, floor):
    return fine <= floor or coarse / fine >= REFINE_GAIN_MIN


def test_criterion_4_conservation(verdict):
    (nc, mFc, mGc, Ec), (nf, mFf, mGf, Ef) = _conservation_run(12), _conservation_run(24)
    mass_ok = (max(mFc, mGc, mFf, mGf) <= MASS_DRIFT_MAX and _gain_ok(mFc, mFf, MASS_ROUNDOFF)
               and _gain_ok(mGc, mGf, MASS_ROUNDOFF))
    energy_ok = Ef <= ENERGY_DRIFT_MAX and _gain_ok(Ec, Ef, 0.0)
    ok = mass_ok and energy_ok and nc == nf == 100
    verdict(4, ok, f"100 steps, dt 0.002, n_r 12 -> 24: mass drift F {mFc:.1e} -> {mFf:.1e}, "
                   f"G {mGc:.1e} -> {mGf:.1e} (max {MASS_DRIFT_MAX:.0e}); energy drift "
                   f"{Ec:.2e} -> {Ef:.2e} (fine grid max {ENERGY_DRIFT_MAX:.0e}, gain "
                   f"{Ec / Ef:.1f}x, min {REFINE_GAIN_MIN:.0f}x)")
    assert ok


def test_criterion_5_picard_contraction(verdict):
    cfg = _cfg()
    model, state, status, _ = initialize(cfg)
    dt = choose_dt(state, model, build_controls(cfg), status)
    dts = dt / 2.0 ** np.arange(4)
    q = np.array([measure_contraction(state, d, model) for d in dts])
    slope = np.sum(q * dts) / np.sum(dts ** 2)
    r2 = 1 - np.sum((q - slope * dts) ** 2) / np.sum((q - q.mean()) ** 2)
    ok = q[0] < CONTRACTION_MAX and r2 >= LINEAR_R2_MIN
    verdict(5, ok, f"ratio {q[0]:.4f} at controller dt {dt:.4f} (max {CONTRACTION_MAX}); "
                   f"fit through origin over dt/1..dt/8: R^2 {r2:.5f} (min {LINEAR_R2_MIN})")
    assert ok


def _horizon(beta0, scale):
    cfg = _cfg(beta0=beta0, initial__scale=scale, time__t_end=20.0)
    model, state, status, _ = initialize(cfg)
    _, _, status = run_loop(state, model, build_controls(cfg), status)
    assert status.reason == "ball-exit"
    return status.T_star


@pytest.mark.parametrize("beta0", [0.0, 2.0])
def test_criterion_6_horizon_scaling(verdict, beta0):
    t1, t2 = _horizon(beta0, 1.0), _horizon(beta0, 2.0)
    ratio = t1 / t2
    ok = HORIZON_RATIO[0] <= ratio <= HORIZON_RATIO[1]
    verdict(6, ok, f"beta0={beta0:g}: T*(a)={t1:.4f}, T*(2a)={t2:.4f}, ratio {ratio:.3f} "
                   f"(range {list(HORIZON_RATIO)})")
    assert ok


@pytest.fixture(scope="module")
def reference_run():
    cfg = _cfg()
    model, state, status, particles = initialize(cfg)
    d0 = particles.boundary_distance()
    worst = {"compat": status.initial_compat, "dist": d0}

    def on_step(s, rec, p, st):
        worst["compat"] = max(worst["compat"], abs(compatibility_imbalance(s.data(), model.profile)))
        worst["dist"] = min(worst["dist"], p.boundary_distance())

    final, _, status = run_loop(state, model, build_controls(cfg), status, particles, on_step)
    return model, state, final, status, d0, worst


def test_criterion_7_compact_support(verdict, reference_run):
    _, _, final, status, d0, worst = reference_run
    frac = worst["dist"] / d0
    ok = frac >= SUPPORT_FRACTION_MIN and final.step > 0
    verdict(7, ok, f"min particle distance to the wall {worst['dist']:.4f} vs initial {d0:.4f} "
                   f"over {final.step} steps to T*={status.T_star:.3f}: fraction {frac:.3f} "
                   f"(min {SUPPORT_FRACTION_MIN})")
    assert ok


def test_criterion_8_compatibility_preserved(verdict, reference_run):
    model, state, final, status, _, worst = reference_run
    g = model.grid
    # summation error bound n * eps * sum|terms| for the discrete integral identity
    scale = (np.sum(np.abs(g.quad_weights_volume * state.F.values))
             + 2 * np.pi * np.sum(np.abs(g.quad_weights_zline * state.j))
             + np.sum(np.abs(g.quad_weights_disk * state.G_bottom.values))
             + np.sum(np.abs(g.quad_weights_disk * state.G_top.values)))
    floor = g.shape[0] * g.shape[1] * g.shape[2] * np.finfo(float).eps * scale
    limit = COMPAT_GROWTH_MAX * max(status.initial_compat, floor)
    ok = worst["compat"] <= limit
    verdict(8, ok, f"max basic-compatibility residual {worst['compat']:.2e} over {final.step} steps;"
                   f" initial {status.initial_compat:.2e}, roundoff floor {floor:.2e}, "
                   f"limit {COMPAT_GROWTH_MAX:.0f}x max(initial, floor) = {limit:.2e}")
    assert ok


def test_criterion_9_sqg_discrepancy(verdict):
    reps = sqg_refinement(((8, 16, 9), (16, 32, 17), (32, 64, 33)), datum=first_eigenfunction_datum)
    a, b = reps[-2].velocity_discrepancy, reps[-1].velocity_discrepancy
    change = abs(b - a) / b
    trace = min(r.trace_variation_A for r in reps)
    dirichlet = max(r.trace_sup_B for r in reps)
    ok = trace > TRACE_MIN and dirichlet <= DIRICHLET_TRACE_MAX and b > 0 and change <= SQG_STABILITY_MAX
    verdict(9, ok, f"trace of psi_A {trace:.2e} (min {TRACE_MIN:.0e}), Dirichlet trace "
                   f"{dirichlet:.1e}; discrepancy {', '.join(f'{r.velocity_discrepancy:.4f}' for r in reps)}"
                   f", finest-pair change {change:.2%} (max {SQG_STABILITY_MAX:.0%})")
    assert ok


@pytest.mark.parametrize("s", [2, 3, 4])
def test_criterion_10_commutator_battery(verdict, s):
    rep = commutator_check(s, trials=20, seed=0)
    ok = np.isfinite(rep.max_fine) and rep.stability <= COMMUTATOR_STABILITY_MAX
    verdict(10, ok, f"s={s}: max ratio coarse {rep.max_coarse:.4f}, fine {rep.max_fine:.4f}, "
                    f"fine/coarse {rep.stability:.3f} (max {COMMUTATOR_STABILITY_MAX})")
    assert ok


def _outputs(out):
    names = ["diagnostics.csv", "final.snap", "particles.csv", "status.json"]
    names += sorted(str(p.relative_to(out)) for p in (out / "snapshots").glob("*.snap"))
    return {n: (out / n).read_bytes() for n in names}


def test_criterion_11_determinism_and_resume(verdict, tmp_path):
    raw = copy.deepcopy(REFERENCE)
    raw["time"].update({"max_steps": 6, "ball_factor": 1e6})
    raw["output"] = {"snapshot_every": 2}
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(raw, indent=2))
    cfg = parse_config(cfg_path.read_text(), str(tmp_path))

    a = run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")
    run(cfg, tmp_path / "c", stop_after=3)
    resume(tmp_path / "c" / "snapshots" / "step_000002.snap")
    ref = _outputs(a.out_dir)
    same_repeat = ref == _outputs(tmp_path / "b")
    same_resume = ref == _outputs(tmp_path / "c")

    threads = {}
    for n in ("1", "4"):
        env = {**os.environ, "OMP_NUM_THREADS": n, "OPENBLAS_NUM_THREADS": n, "MKL_NUM_THREADS": n}
        out = tmp_path / f"t{n}"
        subprocess.run([sys.executable, "-m", "cylqg.cli", "run", "--config", str(cfg_path),
                        "--out-dir", str(out)], check=True, env=env, capture_output=True)
        threads[n] = _outputs(out)
    same_threads = threads["1"] == threads["4"] == ref
    ok = same_repeat and same_resume and same_threads and a.steps == 6
    verdict(11, ok, f"{a.steps} steps, {len(ref)} output files: repeat identical {same_repeat}, "
                    f"interrupt+resume identical {same_resume}, 1 vs 4 threads identical "
                    f"{same_threads}")
    assert ok
