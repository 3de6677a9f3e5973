"""Exporter command line.

    frmdl-export export --backbone vgg16 --out vgg16.frmdl [--checkpoint X]
    frmdl-export make-test-model --seed 0 --out golden.frmdl [--depth 3]

``export`` writes the container plus a ``<out>.refs.json`` sidecar holding
10 seeded inputs and their reference outputs; ``make-test-model`` adds
per-layer reference activations for the first input.
"""
from __future__ import annotations

import argparse
import sys

from . import ExportError
from .backbones import BACKBONES, ExportRecipe, export_backbone
from .testmodels import MAX_DEPTH, VARIANTS, write_test_model


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frmdl-export")
    sub = parser.add_subparsers(dest="command", required=True)

    export = sub.add_parser("export", help="convert a pretrained backbone")
    export.add_argument("--backbone", required=True, choices=BACKBONES)
    export.add_argument("--out", required=True)
    export.add_argument("--checkpoint", default="random",
                        help="state-dict path, or 'random' for seeded "
                             "random initialization")
    export.add_argument("--init-seed", type=int, default=0)
    export.add_argument("--input-seed", type=int, default=2024,
                        help="seed for the 10 sidecar reference inputs")
    export.add_argument("--no-fold-batchnorm", action="store_true",
                        help="refuse batchnorm folding (rejected for "
                             "batchnorm backbones)")

    test_model = sub.add_parser("make-test-model",
                                help="write a tiny seeded random-weight model")
    test_model.add_argument("--seed", type=int, required=True)
    test_model.add_argument("--out", required=True)
    test_model.add_argument("--depth", type=int, default=3,
                            help=f"1..{MAX_DEPTH}; 1 is a bare dense head")
    test_model.add_argument("--variant", default="plain", choices=VARIANTS)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "export":
            recipe = ExportRecipe(
                backbone=args.backbone,
                checkpoint=args.checkpoint,
                fold_batchnorm=not args.no_fold_batchnorm,
                init_seed=args.init_seed,
                input_seed=args.input_seed,
            )
            container, sidecar = export_backbone(recipe, args.out)
        else:
            container, sidecar = write_test_model(
                args.out, seed=args.seed, depth=args.depth,
                variant=args.variant)
        print(f"wrote {container}")
        print(f"wrote {sidecar}")
        return 0
    except (ExportError, ValueError, FileNotFoundError) as exc:
        print(f"{args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
