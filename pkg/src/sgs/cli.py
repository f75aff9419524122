"""Command line entry point: sgs <subcommand> --config <path> [--seed N] [--out DIR]."""

from __future__ import annotations

import argparse
import json
import sys

from .harness import EXIT_CONFIG, EXPERIMENT_KINDS, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgs",
        description="Schroedinger dynamics on star graphs: coupling checks, spectra, "
        "propagation, dispersive scans and NLS runs driven by JSON configs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="path to the JSON config document")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not isinstance(config, dict):
        print("config error: top-level JSON value must be an object", file=sys.stderr)
        return EXIT_CONFIG
    declared = config.get("kind")
    if declared is not None and declared != args.command:
        print(
            f"config error: subcommand {args.command!r} does not match config kind {declared!r}",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    config["kind"] = args.command
    return run(config, seed=args.seed, out_dir=args.out)


if __name__ == "__main__":
    sys.exit(main())
