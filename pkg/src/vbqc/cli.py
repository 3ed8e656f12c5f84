"""Command-line entry point: ``vbqc <kind> [--config FILE] [--seed S] [--trials T] [--out PATH]``."""

from __future__ import annotations

import argparse
import json
import sys

from . import harness


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vbqc", description="Run a protocol experiment and write a JSON report.")
    ap.add_argument("kind", choices=harness.KINDS)
    ap.add_argument("--config", help="JSON config file; its values win over flags")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--out", help="report path (default: stdout)")
    ap.add_argument("--csv", help="optional per-trial CSV path")
    ap.add_argument("--workers", type=int, default=None,
                    help=f"worker processes (default: ${harness.WORKERS_ENV} or 1)")
    ap.add_argument("--param", action="append", default=[], metavar="KEY=JSON",
                    help="kind-specific parameter, e.g. --param N=2 --param strategy='\"reflect-all\"'")
    return ap


def _merge(args) -> dict:
    cfg = {"kind": args.kind, "seed": args.seed, "trials": args.trials, "params": {}}
    for item in args.param:
        key, _, val = item.partition("=")
        try:
            cfg["params"][key] = json.loads(val)
        except json.JSONDecodeError:
            cfg["params"][key] = val
    if args.config:
        with open(args.config) as fh:
            filecfg = json.load(fh)
        if filecfg.get("kind", args.kind) != args.kind:
            raise harness.ConfigError("config kind does not match the subcommand")
        params = {**cfg["params"], **filecfg.get("params", {})}
        cfg.update(filecfg)
        cfg["params"] = params
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _merge(args)
        rep = harness.run_experiment(cfg, args.workers)
    except (harness.ConfigError, ValueError, OSError, RuntimeError) as exc:
        print(f"vbqc: error: {exc}", file=sys.stderr)
        return 2
    text = rep.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(rep.to_csv())
    for c in rep.checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.value:.6g} {c.relation} {c.bound:.6g}",
              file=sys.stderr)
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
