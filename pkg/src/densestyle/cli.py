"""Command-line pipeline driver.

Subcommands compose the library into the inference pipeline
(``correspond`` then ``warp`` then ``stylize``) plus metric evaluation
(``metric``), marginal export (``masses``), and container inspection
(``info``).

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
non-convergence.  Failing commands never leave partial output files:
every writer goes through a temp file and an atomic rename, and nothing
is written at all when a command fails.  Set ``DSK_THREADS`` to cap
internal BLAS parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from densestyle.correspondence import (
    TransportPlan,
    build_cost,
    masses_from_features,
    masses_from_labels,
    sinkhorn,
    uniform_masses,
    warp_style,
)
from densestyle.maps import (
    flatten_spatial,
    load_feature_map,
    load_label_mask,
    load_style_map,
    resize_mask_nearest,
    save_style_map,
)
from densestyle.metric import localized_style_score
from densestyle.style import ToyDecoderWeights, toy_decode
from densestyle.tensor import (
    TensorFormatError,
    atomic_write_bytes,
    load_tensor,
    save_tensor,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NONCONVERGENCE = 3

PLAN_SIDECAR_FORMAT = "densestyle.plan"


class UsageError(Exception):
    """Bad flag combination detected after parsing."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage problems; the CLI contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="densestyle",
        description="Dense style transfer pipeline: correspondence, "
        "warping, stylization, and the localized style metric.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("correspond", help="solve exemplar-to-source transport")
    p.add_argument("--src-feat", required=True, help="source feature map (DST1 [C,H,W])")
    p.add_argument("--ref-feat", required=True, help="exemplar feature map (DST1 [C,H,W])")
    p.add_argument("--out", required=True, help="output plan path (DST1 [Ny,Nx])")
    p.add_argument("--lambda", dest="reg", type=float, default=0.05,
                   help="entropy regularization (default 0.05)")
    p.add_argument("--mass", choices=["uniform", "estimated", "labels"],
                   default="uniform", help="exemplar-side marginal mode")
    p.add_argument("--src-mask", help="source label mask (needed for --mass labels)")
    p.add_argument("--ref-mask", help="exemplar label mask (needed for --mass labels)")
    p.add_argument("--tol", type=float, default=1e-8,
                   help="marginal convergence tolerance (default 1e-8)")
    p.add_argument("--max-iters", type=int, default=1000,
                   help="iteration cap (default 1000)")
    p.set_defaults(handler=cmd_correspond)

    p = sub.add_parser("warp", help="warp an exemplar style map through a plan")
    p.add_argument("--style", required=True, help="exemplar style map (DST1 [S,H,W])")
    p.add_argument("--plan", required=True, help="plan path written by correspond")
    p.add_argument("--out", required=True, help="output warped style map")
    p.set_defaults(handler=cmd_warp)

    p = sub.add_parser("stylize", help="decode content plus style into a PPM image")
    p.add_argument("--content", required=True, help="content feature map (DST1 [C,H,W])")
    p.add_argument("--style", required=True, help="style map on the content grid")
    p.add_argument("--weights", required=True, help="decoder weights directory")
    p.add_argument("--out", required=True, help="output image path (binary PPM)")
    p.set_defaults(handler=cmd_stylize)

    p = sub.add_parser("metric", help="class-localized style score report")
    p.add_argument("--src-feat", required=True)
    p.add_argument("--ref-feat", required=True)
    p.add_argument("--trans-feat", required=True)
    p.add_argument("--src-mask", required=True)
    p.add_argument("--ref-mask", required=True)
    p.add_argument("--out", required=True, help="output JSON report path")
    p.set_defaults(handler=cmd_metric)

    p = sub.add_parser("masses", help="export the exemplar-side marginal")
    p.add_argument("--mass", choices=["uniform", "estimated", "labels"],
                   default="estimated")
    p.add_argument("--src-feat", help="source features (estimated mode)")
    p.add_argument("--ref-feat", help="exemplar features (uniform/estimated modes)")
    p.add_argument("--src-mask", help="source mask (labels mode)")
    p.add_argument("--ref-mask", help="exemplar mask (labels mode)")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_masses)

    p = sub.add_parser("info", help="describe a container file")
    p.add_argument("path")
    p.set_defaults(handler=cmd_info)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"densestyle {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TensorFormatError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"densestyle {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


def _plan_stem(path: str | Path) -> Path:
    path = Path(path)
    return path.with_suffix("") if path.suffix == ".dst" else path


def _sidecar_path(path: str | Path) -> Path:
    stem = _plan_stem(path)
    return stem.with_name(stem.name + ".json")


def cmd_correspond(args) -> int:
    if args.mass == "labels" and not (args.src_mask and args.ref_mask):
        raise UsageError("--mass labels requires --src-mask and --ref-mask")
    src = load_feature_map(args.src_feat)
    ref = load_feature_map(args.ref_feat)
    fy = flatten_spatial(ref)
    fx = flatten_spatial(src)
    if args.mass == "uniform":
        p_y = uniform_masses(fy.shape[1])
    elif args.mass == "estimated":
        p_y = masses_from_features(fy, fx)
    else:
        my = load_label_mask(args.ref_mask)
        mx = load_label_mask(args.src_mask)
        k = max(my.num_classes, mx.num_classes)
        my = resize_mask_nearest(my.with_classes(k), ref.shape[1], ref.shape[2])
        mx = resize_mask_nearest(mx.with_classes(k), src.shape[1], src.shape[2])
        p_y = masses_from_labels(my, mx)
    plan = sinkhorn(
        build_cost(fy, fx),
        p_y,
        uniform_masses(fx.shape[1]),
        reg=args.reg,
        max_iterations=args.max_iters,
        marginal_tolerance=args.tol,
    )
    print(
        f"sinkhorn: {plan.iterations_used} iterations, "
        f"achieved tolerance {plan.achieved_tolerance:.3e}",
        file=sys.stderr,
    )
    if plan.achieved_tolerance > args.tol:
        print(
            f"did not reach tolerance {args.tol:.3e}; no output written",
            file=sys.stderr,
        )
        return EXIT_NONCONVERGENCE

    stem = _plan_stem(args.out)
    py_path = stem.with_name(stem.name + ".p_y.dst")
    px_path = stem.with_name(stem.name + ".p_x.dst")
    save_tensor(plan.values.astype(np.float32), args.out)
    save_tensor(plan.row_marginals.astype(np.float32), py_path)
    save_tensor(plan.col_marginals.astype(np.float32), px_path)
    sidecar = {
        "format": PLAN_SIDECAR_FORMAT,
        "exemplar_grid": [ref.shape[1], ref.shape[2]],
        "source_grid": [src.shape[1], src.shape[2]],
        "reg": args.reg,
        "mass_mode": args.mass,
        "iterations": plan.iterations_used,
        "achieved_tolerance": plan.achieved_tolerance,
        "row_marginals": py_path.name,
        "col_marginals": px_path.name,
    }
    atomic_write_bytes(
        _sidecar_path(args.out), (json.dumps(sidecar, indent=2) + "\n").encode()
    )
    return EXIT_OK


def _load_plan(path: str | Path) -> TransportPlan:
    values = load_tensor(path)
    if values.ndim != 2 or values.dtype != np.float32:
        raise ValueError(f"{path}: a plan must be a 2-D f32 tensor")
    sidecar_path = _sidecar_path(path)
    try:
        sidecar = json.loads(sidecar_path.read_text())
    except FileNotFoundError:
        raise ValueError(f"{path}: missing plan sidecar {sidecar_path}") from None
    if sidecar.get("format") != PLAN_SIDECAR_FORMAT:
        raise ValueError(f"{sidecar_path}: not a plan sidecar")
    base = Path(path).parent
    # marginals round-trip through f32, so restore exact unit sums
    py = load_tensor(base / sidecar["row_marginals"]).astype(np.float64)
    px = load_tensor(base / sidecar["col_marginals"]).astype(np.float64)
    return TransportPlan(
        values=values.astype(np.float64),
        row_marginals=py / py.sum(),
        col_marginals=px / px.sum(),
        row_grid=tuple(sidecar["exemplar_grid"]),
        col_grid=tuple(sidecar["source_grid"]),
    )


def cmd_warp(args) -> int:
    style = load_style_map(args.style)
    plan = _load_plan(args.plan)
    save_style_map(warp_style(style, plan), args.out)
    return EXIT_OK


def cmd_stylize(args) -> int:
    content = load_feature_map(args.content)
    style = load_style_map(args.style)
    weights_dir = Path(args.weights)
    if not weights_dir.is_dir():
        raise ValueError(f"{weights_dir}: not a weights directory")
    weights = ToyDecoderWeights.load_from_dir(weights_dir)
    _write_ppm(args.out, toy_decode(content, style, weights))
    return EXIT_OK


def _write_ppm(path: str | Path, image: np.ndarray) -> None:
    """Binary PPM (P6), 8-bit, round-half-up quantization."""
    _, h, w = image.shape
    pixels = np.floor(image.astype(np.float64) * 255.0 + 0.5)
    pixels = np.clip(pixels, 0, 255).astype(np.uint8)
    body = pixels.transpose(1, 2, 0).tobytes()
    atomic_write_bytes(path, f"P6\n{w} {h}\n255\n".encode("ascii") + body)


def cmd_metric(args) -> int:
    src = load_feature_map(args.src_feat)
    ref = load_feature_map(args.ref_feat)
    trans = load_feature_map(args.trans_feat)
    mask_src = load_label_mask(args.src_mask)
    mask_ref = load_label_mask(args.ref_mask)
    k = max(mask_src.num_classes, mask_ref.num_classes)
    report = localized_style_score(
        src, ref, trans, mask_src.with_classes(k), mask_ref.with_classes(k)
    )
    report.save(args.out)
    return EXIT_OK


def cmd_masses(args) -> int:
    if args.mass == "labels":
        if not (args.src_mask and args.ref_mask):
            raise UsageError("--mass labels requires --src-mask and --ref-mask")
        my = load_label_mask(args.ref_mask)
        mx = load_label_mask(args.src_mask)
        k = max(my.num_classes, mx.num_classes)
        p_y = masses_from_labels(my.with_classes(k), mx.with_classes(k))
    elif args.mass == "estimated":
        if not (args.src_feat and args.ref_feat):
            raise UsageError("--mass estimated requires --src-feat and --ref-feat")
        fy = flatten_spatial(load_feature_map(args.ref_feat))
        fx = flatten_spatial(load_feature_map(args.src_feat))
        p_y = masses_from_features(fy, fx)
    else:
        if not args.ref_feat:
            raise UsageError("--mass uniform requires --ref-feat")
        ref = load_feature_map(args.ref_feat)
        p_y = uniform_masses(ref.shape[1] * ref.shape[2])
    save_tensor(p_y.astype(np.float32), args.out)
    return EXIT_OK


def cmd_info(args) -> int:
    t = load_tensor(args.path)
    name = {"float32": "f32", "uint16": "u16"}[t.dtype.name]
    print(f"dtype: {name}")
    print(f"dims: {list(t.shape)}")
    print(f"min: {t.min()}")
    print(f"max: {t.max()}")
    print(f"mean: {t.astype(np.float64).mean()}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
