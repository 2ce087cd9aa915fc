"""Command-line entry point: ``hypostrat <scenario> --config run.toml``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .harness import SCENARIOS, RunConfig, resume, run

HELP = {
    "certify-linear": "certify the per-mode Lyapunov inequality over a frequency grid",
    "sweep-modes": "fit single-mode decay rates against lambda_k",
    "simulate": "run the nonlinear solver with the energy ledger",
    "fit-rates": "fit power laws to a norms.csv time series",
    "check-constants": "report the smallness margins of the weight constants",
}


def build_parser():
    ap = argparse.ArgumentParser(prog="hypostrat", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--set", action="append", default=[], metavar="TABLE.KEY=VALUE",
                       help="override one configuration value (repeatable)")
        p.add_argument("--out", help="output directory (overrides run.out)")
    p = sub.add_parser("resume", help="continue a simulation from a snapshot")
    p.add_argument("snapshot")
    p.add_argument("--t-end", type=float, required=True, help="new final time")
    p.add_argument("--set", action="append", default=[], metavar="TABLE.KEY=VALUE",
                   help="override a value; [params] and [grid] must match the snapshot")
    p.add_argument("--out", help="output directory (default: the snapshot's directory)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "resume":
            manifest = resume(args.snapshot, args.t_end, args.set, args.out)
        else:
            cfg = RunConfig.load(args.config, args.set, scenario=args.command, out=args.out)
            manifest = run(cfg)
    except (ValueError, OSError, RuntimeError) as exc:
        # configuration, grid, snapshot and solver failures all end up here
        print(f"hypostrat: error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"scenario": manifest.scenario, "passed": manifest.passed,
                      "checks": manifest.checks}, sort_keys=True))
    return 0 if manifest.passed else 1


if __name__ == "__main__":
    sys.exit(main())
