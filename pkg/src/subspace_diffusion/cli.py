"""Command line entry point.

    subspace-diffusion {validate,sweep-n,sweep-t0,sweep-grid} [--config PATH]
        [--out DIR] [--seed U64] [--parallel N]

Exit status is 0 when every check passes, 1 when a check fails and 2 for a
malformed configuration.
"""
from __future__ import annotations

import argparse
import json
import sys

from .exceptions import ConfigError, InvariantError
from .harness import parse_config, run_experiment

COMMANDS = {"validate": "validate", "sweep-n": "sweep_n", "sweep-t0": "sweep_t0", "sweep-grid": "sweep_grid"}


def build_parser():
    p = argparse.ArgumentParser(prog="subspace-diffusion", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON config; omitted keys take the command defaults")
    p.add_argument("--out", help="output directory (default runs/<command>)")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--parallel", type=int, default=0, metavar="N", help="worker processes for sweep points")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    experiment = COMMANDS[args.command]
    try:
        raw = {}
        if args.config:
            try:
                with open(args.config) as fh:
                    raw = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
        if args.seed is not None:
            if not isinstance(raw, dict):
                raise ConfigError("config must be a JSON object")
            raw = dict(raw, seed=args.seed)
        cfg = parse_config(raw, experiment)
        if args.parallel < 0:
            raise ConfigError("--parallel must be nonnegative")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = args.out or f"runs/{args.command}"
    try:
        result = run_experiment(cfg, out, args.parallel)
    except InvariantError as exc:
        print(f"FAIL {exc.invariant}: {exc}", file=sys.stderr)
        return 1
    for c in result.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['check']}")
    print(f"outputs in {result.out}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
