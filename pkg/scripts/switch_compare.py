"""Queue growth of the constraint-satisfaction switch policy against max-weight.

    python3 scripts/switch_compare.py --n 3 --T 16384 --seeds 5
"""

import argparse

import numpy as np

from qoco.harness import fit_slope
from qoco.switchsim import SwitchAdversary, SwitchSim, run_switch


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=3)
    ap.add_argument("--T", type=int, default=16384)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--learner", default="adaptive_convex", choices=["adaptive_convex", "ftpl"])
    ap.add_argument("--full-load", action="store_true")
    args = ap.parse_args()
    checkpoints = [2**k for k in range(8, int(np.log2(args.T)) + 1)]
    for policy in ("ocs", "maxweight"):
        runs = []
        for seed in range(args.seeds):
            sim = SwitchSim(args.n, args.learner, seed, policy=policy)
            adv = SwitchAdversary(args.n, seed, full_load=args.full_load)
            runs.append(np.maximum.accumulate(run_switch(sim, adv.stream(args.T))))
        mean = np.mean(runs, axis=0)
        pts = [(T, mean[T - 1]) for T in checkpoints]
        try:
            slope = f"{fit_slope(pts)[0]:.3f}"
        except ValueError:
            slope = "n/a (queues stay empty)"
        print(f"{policy:10s} mean running max queue at T={args.T}: {mean[-1]:.3f}  slope {slope}")


if __name__ == "__main__":
    main()
