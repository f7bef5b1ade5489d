"""Run every experiment config and print a one-line summary per experiment.

    python3 scripts/run_all.py --out runs [--only ocs_hidden_point,switch_n2]
"""

import argparse
from pathlib import Path

from qoco.harness import load_config, run_experiment

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs")
    ap.add_argument("--only", help="comma-separated config names")
    ap.add_argument("--seeds", help="comma-separated seeds overriding each config")
    args = ap.parse_args()
    names = args.only.split(",") if args.only else sorted(p.stem for p in CONFIG_DIR.glob("*.yaml"))
    for name in names:
        cfg = load_config(CONFIG_DIR / f"{name}.yaml")
        if args.seeds:
            cfg.seeds = [int(s) for s in args.seeds.split(",")]
        rep = run_experiment(cfg, args.out)
        slopes = ", ".join(f"{k}={v['slope']:.3f}" for k, v in rep.slopes.items() if "slope" in v)
        status = "ok" if rep.total_violations == 0 else f"{rep.total_violations} violating rounds"
        print(f"{name:28s} {status:>20s}  {slopes}  ({rep.runtime_s:.0f}s)")


if __name__ == "__main__":
    main()
