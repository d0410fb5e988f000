"""Empirical stable horizon T* against initial-data amplitude.

Runs the reference config at several amplitudes (the ``initial.scale``
knob) and planetary parameters, and reports T* and the ratio between
successive doublings.

    python scripts/horizon_scaling.py --config configs/reference.json --scales 0.5 1 2 4 --beta0 0 2
"""
import argparse
import json
from pathlib import Path

from cylqg.config import load_config, parse_config
from cylqg.diagnostics import write_report_csv
from cylqg.runner import build_controls, initialize
from cylqg.timestepper import run_loop


def horizon(base, scale, beta0, t_end):
    raw = base.to_dict()
    raw.pop("base_dir", None)
    raw["initial"]["scale"] = scale
    raw["beta0"] = beta0
    raw["time"]["t_end"] = t_end
    cfg = parse_config(json.dumps(raw), base.base_dir)
    model, state, status, _ = initialize(cfg)
    final, _, status = run_loop(state, model, build_controls(cfg), status)
    return status.T_star, status.reason, final.step


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/reference.json")
    ap.add_argument("--scales", type=float, nargs="+", default=[0.5, 1.0, 2.0, 4.0])
    ap.add_argument("--beta0", type=float, nargs="+", default=[0.0, 2.0])
    ap.add_argument("--t-end", type=float, default=50.0)
    ap.add_argument("--out", default="results/horizon.csv")
    args = ap.parse_args()

    base = load_config(args.config)
    rows = []
    for beta0 in args.beta0:
        prev = None
        for s in args.scales:
            T, reason, steps = horizon(base, s, beta0, args.t_end)
            ratio = prev / T if prev else float("nan")
            rows.append((beta0, s, T, reason, steps, ratio))
            print(f"beta0={beta0:<5g} scale={s:<5g} T*={T:.5f} ({reason}, {steps} steps)"
                  f"  T*(prev)/T* = {ratio:.3f}")
            prev = T
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report_csv(out, ("beta0", "scale", "T_star", "reason", "steps", "ratio_to_previous"), rows)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
