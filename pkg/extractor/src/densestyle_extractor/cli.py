"""Extraction command line.

Usage:

    densestyle-extract --image P --kind correspondence|metric \
        [--mask P] [--classes K] --out DIR \
        [--clip-weights P] [--vgg-weights P] [--untrained]

Exit codes: 0 success, 1 usage error, 2 data/weights error.  Weights are
never downloaded; point the flags at local state-dict files, or pass
``--untrained`` for a deterministic random-weight run (plumbing and
shape checks only).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from densestyle_extractor.backbones import (
    MissingWeightsError,
    load_correspondence_trunk,
    load_metric_backbone,
)
from densestyle_extractor.extract import ExtractionJob, run_job

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="densestyle-extract",
        description="Turn an image into DST1 feature tensors (and a "
        "resolution-matched mask) for the densestyle toolkit.",
    )
    parser.add_argument("--image", required=True, help="input image path")
    parser.add_argument(
        "--kind", required=True, choices=["correspondence", "metric"],
        help="which feature family to extract",
    )
    parser.add_argument("--mask", help="optional per-pixel class-id image")
    parser.add_argument(
        "--classes", type=int,
        help="class vocabulary size; mask ids at or above it are rejected",
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--clip-weights", help="correspondence trunk state dict")
    parser.add_argument("--vgg-weights", help="metric backbone state dict")
    parser.add_argument(
        "--untrained", action="store_true",
        help="seeded random weights (shape/interop testing only)",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.kind == "correspondence":
            model = load_correspondence_trunk(args.clip_weights, args.untrained)
        else:
            model = load_metric_backbone(args.vgg_weights, args.untrained)
        job = ExtractionJob(
            image=Path(args.image),
            out_dir=Path(args.out),
            kind=args.kind,
            mask=Path(args.mask) if args.mask else None,
            num_classes=args.classes,
        )
        written = run_job(job, model)
    except (MissingWeightsError, ValueError, OSError, RuntimeError) as exc:
        print(f"densestyle-extract: {exc}", file=sys.stderr)
        return EXIT_DATA
    for role, path in written.items():
        print(f"{role}: {path}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
