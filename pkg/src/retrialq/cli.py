"""Command-line front end.

    retrialq analyze  CONFIG [--n-min 14 --n-max 27]
    retrialq simulate CONFIG [--trace events.jsonl]
    retrialq bound    CONFIG
    retrialq optimize CONFIG
    retrialq schema   [report|config]
    retrialq config   CONFIG          # print the canonical form

Exit codes: 0 success, 2 invalid config, 3 inconclusive optimization,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from pydantic import ValidationError

from . import commands
from .config import RunConfig, apply_overrides, dump_config, load_config
from .engine import InvariantViolation
from .report import published_schema, render

EXIT_OK, EXIT_CONFIG, EXIT_INCONCLUSIVE, EXIT_INTERNAL = 0, 2, 3, 4

log = logging.getLogger("retrialq")


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="TOML configuration file")
    p.add_argument("--n", type=int)
    p.add_argument("--n-min", type=int)
    p.add_argument("--n-max", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--arrivals", type=int, help="arrival-count budget instead of a time horizon")
    p.add_argument("--warmup", type=float)
    p.add_argument("--proposal-rate", type=float, help="importance-sampling rate for Poisson arrivals")
    p.add_argument("--estimator", choices=["sdn8", "sdn9", "sdn10", "all"])
    p.add_argument("--threads", type=int)
    p.add_argument("--format", choices=["table", "json", "csv"], default="table")
    p.add_argument("-o", "--output", help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retrialq", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("analyze", "bound", "optimize"):
        _add_overrides(sub.add_parser(name))
    p = sub.add_parser("simulate")
    _add_overrides(p)
    p.add_argument("--trace", help="write a JSON-lines event log of replication 0")
    p = sub.add_parser("schema")
    p.add_argument("which", nargs="?", choices=["report", "config"], default="report")
    p = sub.add_parser("config")
    p.add_argument("config")
    return parser


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config)
    return apply_overrides(
        cfg,
        n=args.n, alpha=args.alpha, seed=args.seed, replications=args.replications,
        horizon=args.horizon, arrivals=args.arrivals, warmup=args.warmup,
        estimator=args.estimator, threads=args.threads, proposal_rate=args.proposal_rate,
        n_min=args.n_min, n_max=args.n_max,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "schema":
        print(json.dumps(published_schema(args.which), indent=2))
        return EXIT_OK

    try:
        if args.command == "config":
            sys.stdout.write(dump_config(load_config(args.config)))
            return EXIT_OK
        cfg = _resolve(args)
        if args.command == "simulate":
            report = commands.simulate(cfg, trace=args.trace)
        else:
            report = commands.COMMANDS[args.command](cfg)
    except (ValidationError, ValueError, OSError) as exc:
        print(f"retrialq: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"retrialq: internal invariant violation: {exc}", file=sys.stderr)
        return EXIT_INTERNAL

    text = render(report, args.format)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    log.info("%s finished in %.3fs", args.command, report.timings.get("wall_seconds", 0.0))
    return EXIT_INCONCLUSIVE if report.status == "inconclusive" else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
