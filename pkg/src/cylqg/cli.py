"""Command-line entry point ``cylqg``.

Exit codes: 0 success, 2 configuration error, 3 compatibility failure,
4 Picard non-contraction at the minimum time step.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import CompatibilityViolation, ConfigError, SnapshotError
from .geometry import make_grid, write_field
from .runner import CompatInitError, ProfileInitError, build_model, resume, run

EXIT_OK, EXIT_CONFIG, EXIT_COMPAT, EXIT_NO_CONTRACTION = 0, 2, 3, 4


def _load(args) -> RunConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return RunConfig()


def _sizes(text):
    return tuple(int(v) for v in text.split(","))


def cmd_check_compat(args):
    from .elliptic import check_full_compatibility
    from .initial import build_initial_data
    cfg = _load(args)
    model = build_model(cfg)
    data = build_initial_data(model.grid, model.profile, cfg.initial, cfg.base_dir)
    rep = check_full_compatibility(data, model.profile, cfg.tolerances.compat_tol,
                                   cfg.tolerances.collar)
    print("\n".join(rep.lines()))
    print("fully compatible" if rep.passed else "NOT compatible: " + ", ".join(rep.failures()))
    return EXIT_OK if rep.passed else EXIT_COMPAT


def cmd_solve_elliptic(args):
    from .elliptic import solve_elliptic
    from .initial import build_initial_data
    cfg = _load(args)
    model = build_model(cfg)
    data = build_initial_data(model.grid, model.profile, cfg.initial, cfg.base_dir)
    sf = solve_elliptic(data, model.profile, compat_tol=cfg.tolerances.compat_tol,
                        solver_tol=cfg.tolerances.solver_tol, solver=model.solver)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_field(out, sf.psi, "psi")
    print(f"wrote {out}; lateral deviation {sf.lateral_deviation():.3e}, "
          f"compatibility residual {sf.info['compat_residual']:.3e}")
    return EXIT_OK


def _report_run(res):
    st = res.status
    print(f"stopped: {st.reason} at T*={st.T_star:.6g} after {res.steps} steps "
          f"(R={st.R_ball:.4g}, growth bound {st.growth_bound():.4g}); output in {res.out_dir}")
    return EXIT_NO_CONTRACTION if st.reason == "no-contraction" else EXIT_OK


def cmd_run(args):
    cfg = _load(args)
    return _report_run(run(cfg, args.out_dir, args.stop_after))


def cmd_resume(args):
    return _report_run(resume(args.snapshot, args.out_dir, args.stop_after))


def cmd_diagnose(args):
    from . import diagnostics as dg
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ok = True
    if args.what == "commutator":
        rows, lines = [], []
        for s in args.s:
            rep = dg.commutator_check(s, args.trials, args.seed)
            rows += rep.rows()
            lines.append(rep.summary())
            ok &= rep.passed
        dg.write_report_csv(out / "commutator.csv", dg.CommutatorReport.HEADER, rows)
    elif args.what == "sqg-compare":
        datum = None
        if args.config:
            from .initial import build_initial_data
            cfg = _load(args)

            def datum(g):
                prof = build_model(cfg).profile
                return build_initial_data(g, prof, cfg.initial, cfg.base_dir).g_bottom.values
        reps = dg.sqg_refinement(tuple((n, 2 * n, n + 1) for n in args.sizes), datum=datum)
        dg.write_report_csv(out / "sqg_compare.csv", dg.SQGReport.HEADER, [r.row() for r in reps])
        lines = [r.summary() for r in reps]
        if len(reps) >= 2:
            a, b = reps[-2].velocity_discrepancy, reps[-1].velocity_discrepancy
            change = abs(b - a) / max(abs(b), 1e-300)
            ok = reps[-1].trace_variation_A > 1e-6 and change < 0.1
            lines.append(f"finest-pair change {change:.3%} ({'PASS' if ok else 'FAIL'}, limit 10%)")
    else:
        rows = dg.manufactured_convergence(sizes=args.sizes)
        dg.write_report_csv(out / "manufactured.csv", ("case", "n", "error", "order", "seconds"),
                            [(r.case, r.n, r.error, r.order, r.seconds) for r in rows])
        lines = [f"{r.case:>22s} n={r.n:<3d} err={r.error:.3e} order={r.order:.3f}" for r in rows]
        ok = all(not np.isfinite(r.order) or r.order >= 1.9 for r in rows)
    summary = "\n".join(lines)
    (out / f"{args.what}_summary.txt").write_text(summary + "\n")
    print(summary)
    return EXIT_OK if ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="cylqg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check-compat", help="full compatibility report for the initial data")
    c.add_argument("--config")
    c.set_defaults(fn=cmd_check_compat)

    c = sub.add_parser("solve-elliptic", help="reconstruct the initial stream function")
    c.add_argument("--config")
    c.add_argument("--out", default="psi.field")
    c.set_defaults(fn=cmd_solve_elliptic)

    c = sub.add_parser("run", help="time-step a config")
    c.add_argument("--config")
    c.add_argument("--out-dir")
    c.add_argument("--stop-after", type=int, help="stop after N accepted steps")
    c.set_defaults(fn=cmd_run)

    c = sub.add_parser("resume", help="continue a run from a snapshot")
    c.add_argument("--snapshot", required=True)
    c.add_argument("--out-dir")
    c.add_argument("--stop-after", type=int)
    c.set_defaults(fn=cmd_resume)

    c = sub.add_parser("diagnose", help="verification batteries")
    c.add_argument("what", choices=("commutator", "sqg-compare", "manufactured"))
    c.add_argument("--config")
    c.add_argument("--out-dir", default="diagnostics")
    c.add_argument("--s", type=int, nargs="+", default=[2, 3, 4])
    c.add_argument("--trials", type=int, default=20)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--sizes", type=_sizes, default=None,
                   help="comma-separated radial counts")
    c.set_defaults(fn=cmd_diagnose)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "sizes", "unset") is None:
        args.sizes = (8, 16, 32)
    try:
        return args.fn(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ProfileInitError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CompatInitError, CompatibilityViolation) as exc:
        print(f"compatibility failure: {exc}", file=sys.stderr)
        return EXIT_COMPAT
    except SnapshotError as exc:
        print(f"snapshot error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
