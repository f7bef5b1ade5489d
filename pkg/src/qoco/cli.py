"""Command line entry point: ``qoco {run,verify,sweep,report}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import load_config, run_experiment


def _apply_overrides(cfg, args):
    if getattr(args, "seeds", None):
        cfg.seeds = [int(s) for s in args.seeds.split(",")]
    if getattr(args, "horizons", None):
        cfg.horizons = [int(h) for h in args.horizons.split(",")]
    return cfg


def _summary(report) -> str:
    lines = [f"horizons: {report.horizons}"]
    for key, fit in report.slopes.items():
        if "slope" in fit:
            lines.append(f"slope[{key}] = {fit['slope']:.4f} +- {fit['stderr']:.4f}")
        else:
            lines.append(f"slope[{key}]: {fit['error']}")
    for key, chk in report.log_ratio.items():
        lines.append(f"ratio/lnT[{key}] median {chk['median']:.4f} max dev {chk['max_rel_dev']:.3f}")
    for name, per in sorted(report.certificate_violations.items()):
        n = sum(len(v) for v in per.values())
        lines.append(f"{'PASS' if n == 0 else 'FAIL'} {name} ({n} violating rounds)")
    lines.append(f"eps_grid {report.eps_grid:.3g}  runtime {report.runtime_s:.1f}s")
    return "\n".join(lines)


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    report = run_experiment(cfg, args.out)
    print(_summary(report))
    print(f"report: {Path(args.out) / cfg.name / 'report.json'}")
    if report.total_violations and not args.warn_only:
        return 1
    return 0


def cmd_report(args) -> int:
    path = Path(args.out)
    if path.is_dir():
        path = path / "report.json"
    data = json.loads(path.read_text())
    print(f"{data['config']['name']} (schema {data['schema_version']}, tool {data['tool_version']})")
    for T, metrics in data["per_horizon"].items():
        body = ", ".join(f"{k}={v['mean']:.4g}" for k, v in metrics.items())
        print(f"  T={T}: {body}")
    for key, fit in data["slopes"].items():
        if "slope" in fit:
            print(f"  slope[{key}] = {fit['slope']:.4f}")
    bad = {n: sum(len(v) for v in per.values()) for n, per in data["certificate_violations"].items()}
    for n, c in sorted(bad.items()):
        print(f"  {'PASS' if c == 0 else 'FAIL'} {n}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qoco", description="Constrained online convex optimization experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("run", "run one configured experiment"),
        ("verify", "run and fail on any certificate violation"),
        ("sweep", "run a horizon sweep and print fitted slopes"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default="runs")
        sp.add_argument("--seeds", help="comma-separated seeds overriding the config")
        sp.add_argument("--warn-only", action="store_true", help="exit 0 even when certificates fail")
        if name == "sweep":
            sp.add_argument("--horizons", help="comma-separated horizons overriding the config")
        sp.set_defaults(func=cmd_run)
    rp = sub.add_parser("report", help="summarize a written report.json")
    rp.add_argument("--out", required=True, help="report file or experiment output directory")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
