"""Command-line entry point.

    streetscan <subcommand> --config run.json [--seed N] [--jobs N] [--resume]

Subcommands: link, rectify, infer, change, evaluate, sweep-tau.
Exit codes: 0 success, 1 input error, 2 backend error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback

from .config import load_config
from .errors import BackendError, InputError, PipelineError
from .pipeline import (
    cmd_change,
    cmd_evaluate,
    cmd_infer,
    cmd_link,
    cmd_rectify,
    cmd_sweep_tau,
)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_BACKEND_ERROR = 2
EXIT_INTERNAL_ERROR = 3


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--jobs", type=int, default=None, help="worker threads for stage internals")
    common.add_argument("--resume", action="store_true", help="skip already-produced outputs")

    parser = argparse.ArgumentParser(
        prog="streetscan",
        description="Street-level survey video to parcel occupancy labels and reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("link", parents=[common], help="match GPS tracks to parcels")
    sub.add_parser("rectify", parents=[common], help="estimate headings and dewarp frames")
    infer = sub.add_parser("infer", parents=[common], help="extract attributes and label visits")
    infer.add_argument(
        "--strategy", choices=("one_stage", "two_stage", "both"), default="both"
    )
    sub.add_parser("change", parents=[common], help="two-visit change classes and agreement")
    sub.add_parser("evaluate", parents=[common], help="metrics, tests, spatial reports")
    sub.add_parser("sweep-tau", parents=[common], help="one-stage threshold sweep")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(
            args.config,
            seed=args.seed,
            jobs=args.jobs,
            resume=True if args.resume else None,
        )
        if args.command == "link":
            summary = cmd_link(cfg)
        elif args.command == "rectify":
            summary = cmd_rectify(cfg)
        elif args.command == "infer":
            summary = cmd_infer(cfg, args.strategy)
        elif args.command == "change":
            summary = cmd_change(cfg)
        elif args.command == "evaluate":
            summary = cmd_evaluate(cfg)
        else:
            summary = cmd_sweep_tau(cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND_ERROR
    except PipelineError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL_ERROR
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL_ERROR
    print(json.dumps(summary, indent=2, sort_keys=True, default=str))
    if args.command == "infer" and summary.get("transport_errors", 0) > 0:
        # partial outputs were written and the cache is resumable
        return EXIT_BACKEND_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
