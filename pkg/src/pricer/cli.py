"""Command line entry point: ``pricer-lab <subcommand> --config --out --seed``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from pricer.apps.experiments import ConfigError, ExperimentConfig, run_experiment, write_atomic

SUBCOMMANDS = {
    "optimize": "optimize",
    "simulate": "simulate",
    "privacy-report": "privacy-report",
    "tradeoff": "tradeoff-table",
    "neighbor-sweep": "neighbor-sweep",
    "mse-sweep": "mse-sweep",
    "er-analytic": "er-closed-form",
    "kmeans": "kmeans",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pricer-lab", description="Private relayed mean estimation experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON config; its 'params' object is passed to the runner")
        sp.add_argument("--out", type=Path, required=True, help="output directory")
        sp.add_argument("--seed", type=int, required=True)
        sp.add_argument("--trials", type=int, default=None, help="Monte-Carlo trials")
        sp.add_argument("--lambda", dest="lam", type=float, default=None)
        sp.add_argument("--bias-norm", choices=("l1", "l2"), default=None)
        sp.add_argument("--eta", type=float, default=None)
        sp.add_argument("--iters", type=int, default=None)
        sp.add_argument("--tol", type=float, default=None)
    return ap


def _load(args) -> ExperimentConfig:
    doc = {}
    if args.config is not None:
        try:
            doc = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    params = dict(doc.get("params", doc if "kind" not in doc else {}))
    opt = dict(params.get("optimizer", {}))
    for flag, key in (("lam", "lam"), ("bias_norm", "bias_norm"), ("iters", "max_iters"), ("tol", "tol")):
        if getattr(args, flag) is not None:
            opt[key] = getattr(args, flag)
    if args.eta is not None:
        opt["eta_alpha"] = opt["eta_sigma"] = args.eta
    if opt:
        params["optimizer"] = opt
    trials = args.trials if args.trials is not None else doc.get("trials", 0)
    return ExperimentConfig(kind=SUBCOMMANDS[args.command], seed=args.seed, params=params, trials=trials)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        summary = run_experiment(cfg, args.out)
    except Exception as exc:  # report every failure as structured JSON
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        text = json.dumps(err, indent=2, sort_keys=True)
        print(text, file=sys.stderr)
        try:
            write_atomic(Path(args.out) / "error.json", text + "\n")
        except OSError:
            pass
        return 2 if isinstance(exc, (ConfigError, ValueError, TypeError, KeyError)) else 1
    print(json.dumps({"status": "ok", "out": str(args.out), "outputs": summary["outputs"]}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
