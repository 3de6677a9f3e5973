"""Command-line entry point.

Commands: ``extract``, ``features``, ``train``, ``evaluate``, ``pipeline``.
Every command takes ``--config`` plus optional field overrides and a
``--dry-run`` flag that validates the configuration and input paths without
computing anything.  ``FUSERANK_THREADS`` caps feature-extraction
parallelism.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
error, 5 stale artifacts.
"""
from __future__ import annotations

import argparse
import json
import sys

from .config import load_config
from .errors import (
    ConfigError,
    FormatError,
    FuserankError,
    GeometryError,
    GraphError,
    InvalidArgumentError,
    NumericError,
    StalenessError,
)
from .pipeline import (
    check_inputs,
    cmd_evaluate,
    cmd_extract,
    cmd_features,
    cmd_pipeline,
    cmd_train,
)

_EXIT_CODES = (
    (ConfigError, 2),
    (StalenessError, 5),
    (NumericError, 4),
    ((FormatError, GraphError, GeometryError, InvalidArgumentError), 3),
    (FuserankError, 3),
    ((FileNotFoundError, PermissionError), 3),
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fuserank",
        description="Patch classification via fused CNN features, "
                    "t-statistic ranking and a squared-hinge linear SVM.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("extract", "generate the labelled patch dataset"),
        ("features", "run the backbones and write the fused feature store"),
        ("train", "split, rank, select and train the SVM"),
        ("evaluate", "score held-out rows and write the report"),
        ("pipeline", "run all stages in order"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="JSON config file")
        cmd.add_argument("--dry-run", action="store_true",
                         help="validate config and input paths, then stop")
        cmd.add_argument("--seed", type=int, help="override dataset.seed")
        cmd.add_argument("--patch-size", type=int, dest="patch_size",
                         help="override dataset.patch_size")
        cmd.add_argument("--count-per-class", type=int, dest="count_per_class",
                         help="override dataset.count_per_class")
        cmd.add_argument("--k", type=int, help="override fusion.k")
        cmd.add_argument("--C", type=float, help="override svm.C")
        cmd.add_argument("--train-fraction", type=float, dest="train_fraction",
                         help="override split.train_fraction")
        cmd.add_argument("--output-dir", dest="output_dir",
                         help="override output_dir")
        if name in ("evaluate", "pipeline"):
            cmd.add_argument("--resubstitution", action="store_true",
                             help="evaluate on the training rows "
                                  "(flagged as such in the report)")
    return parser


def _exit_code_for(exc: BaseException) -> int:
    for types, code in _EXIT_CODES:
        if isinstance(exc, types):
            return code
    raise exc


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        overrides = {
            "seed": args.seed,
            "patch_size": args.patch_size,
            "count_per_class": args.count_per_class,
            "k": args.k,
            "C": args.C,
            "train_fraction": args.train_fraction,
            "output_dir": args.output_dir,
        }
        config = load_config(args.config, overrides)
        if args.dry_run:
            problems = check_inputs(config)
            for problem in problems:
                print(f"dry-run: {problem}", file=sys.stderr)
            if problems:
                return 3
            print(f"dry-run: config valid, hash {config.config_hash()}")
            return 0
        if args.command == "extract":
            result = cmd_extract(config)
        elif args.command == "features":
            result = cmd_features(config)
        elif args.command == "train":
            result = cmd_train(config)
        elif args.command == "evaluate":
            result = cmd_evaluate(config, resubstitution=args.resubstitution)
        else:
            result = cmd_pipeline(config, resubstitution=args.resubstitution)
        print(json.dumps(result, sort_keys=True, indent=1))
        return 0
    except Exception as exc:  # noqa: BLE001 - single funnel to exit codes
        code = _exit_code_for(exc)
        print(f"{args.command}: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
