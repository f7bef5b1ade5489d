"""Build the extremal queue sequence and compare it with its log and sqrt envelopes.

    python3 scripts/extremal_sequence.py --c 1 --T 100000 --out extremal.csv
"""

import argparse
import csv

import numpy as np

from qoco.oracle import verify_proposition1


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--c", type=float, default=1.0)
    ap.add_argument("--q1", type=float, default=1.0)
    ap.add_argument("--T", type=int, default=100_000)
    ap.add_argument("--out", default="extremal.csv")
    ap.add_argument("--every", type=int, default=100, help="write every n-th round")
    args = ap.parse_args()
    res = verify_proposition1(args.c, "equality_greedy", T=args.T, q1=args.q1)
    Q = res.sequence / args.c
    t = np.arange(1, len(Q) + 1, dtype=float)
    log_env = np.log(t) + 2 * np.log(np.maximum(np.log(t), 1.0)) + res.c1
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "Q_over_c", "log_envelope", "sqrt_t"])
        for i in range(0, len(Q), args.every):
            w.writerow([int(t[i]), repr(float(Q[i])), repr(float(log_env[i])), repr(float(np.sqrt(t[i])))])
    print(f"ok={res.ok} Q(T)/c={Q[-1]:.4f} ln T={np.log(args.T):.4f} c1={res.c1:.3f} -> {args.out}")


if __name__ == "__main__":
    main()
