"""Command-line entry points for running games from JSON configurations.

Exit codes: 0 on success, 2 on configuration/schema errors, 3 on numerical
failures (non-monotone instance, stalled solver, and so on).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import games, harness, oracle
from .errors import IoError, NetGamesError, SchemaError

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_NUMERIC = 3


def _add_common(sub):
    sub.add_argument("--config", required=True, help="run configuration (JSON)")
    sub.add_argument("--seed", type=int, default=None, help="override master seed")
    sub.add_argument("--iters", type=int, default=None, help="override iteration budget")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--metrics-every", type=int, default=None,
                     help="override metrics cadence")
    sub.add_argument("--workers", type=int, default=1,
                     help="player-parallel threads inside each phase")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netgames",
        description="Distributed equilibrium seeking and parameter learning "
                    "on networked games.")
    subs = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
            ("solve-exact", "seek an equilibrium with known parameters"),
            ("learn", "joint equilibrium seeking and parameter learning"),
            ("gnep", "seek a generalized equilibrium under a shared budget")):
        sub = subs.add_parser(name, help=help_text)
        _add_common(sub)
        if name == "learn":
            sub.add_argument("--inner", choices=["closed_form", "psg"],
                             default=None, help="override inner solver")

    sub = subs.add_parser("oracle", help="centralized certified solve of the "
                                         "configured instance")
    _add_common(sub)

    sub = subs.add_parser("gen-instance", help="sample a random monotone instance")
    sub.add_argument("--seed", type=int, required=True)
    sub.add_argument("--players", type=int, default=10)
    sub.add_argument("--chords", type=int, default=10)
    sub.add_argument("--noise-sd", type=float, default=0.5)
    sub.add_argument("--out", default=None, help="output directory")
    return parser


def _load(args, forced_mode=None) -> harness.RunConfig:
    config = harness.load_config(args.config)
    doc = config.document
    if forced_mode is not None:
        doc["mode"] = forced_mode
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.iters is not None:
        doc["iters"] = args.iters
    if args.metrics_every is not None:
        doc["metrics_every"] = args.metrics_every
    if getattr(args, "inner", None) is not None:
        doc.setdefault("inner", {})["kind"] = args.inner
    if args.out is not None:
        doc["out_dir"] = args.out
    harness.validate_config(doc, config.source_path or "<cli>")
    return harness.RunConfig(doc, config.source_path)


def _out_dir(config) -> Path:
    out = Path(config.get("out_dir", default="."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run(args, mode) -> int:
    config = _load(args, forced_mode=mode)
    result = harness.run_algorithm1(config, workers=args.workers)
    out = _out_dir(config)
    harness.emit_metrics(result.rows, out / "metrics.csv")
    harness.write_summary(result, out / "summary.json")
    print(f"{mode}: {result.iterations} iterations, "
          f"converged={result.converged}, outputs in {out}")
    return EXIT_OK


def _run_oracle(args) -> int:
    config = _load(args)
    instance = harness.build_instance(config)
    sol = oracle.solve_vi_centralized(instance)
    out = _out_dir(config)
    payload = {"x": sol.x.tolist(), "residual": sol.residual,
               "iterations": sol.iterations, "method": sol.method,
               "status": sol.status}
    with open(out / "oracle.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(f"oracle: {sol.status} residual={sol.residual:.3e}")
    return EXIT_OK


def _gen_instance(args) -> int:
    instance = games.sample_instance(args.seed, player_count=args.players,
                                     chord_count=args.chords,
                                     noise_sd=args.noise_sd)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"instance_{args.seed}.json"
    with open(path, "w") as fh:
        json.dump(games.instance_to_dict(instance), fh, indent=2)
        fh.write("\n")
    print(f"gen-instance: wrote {path}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "solve-exact":
            return _run(args, "exact")
        if args.command == "learn":
            return _run(args, "learn")
        if args.command == "gnep":
            return _run(args, "gnep")
        if args.command == "oracle":
            return _run_oracle(args)
        return _gen_instance(args)
    except (SchemaError, IoError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except NetGamesError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
