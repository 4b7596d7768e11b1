"""Extraction jobs: images in, DST1 feature/mask tensors out."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from densestyle_extractor.dst import write_dst
from densestyle_extractor.preprocess import (
    CLIP_MEAN,
    CLIP_STD,
    IMAGENET_MEAN,
    IMAGENET_STD,
    load_image_rgb,
    load_mask_ids,
    resize_short_side,
    to_batch,
)

IGNORE_ID = 0xFFFF

KINDS = ("correspondence", "metric")


@dataclass(frozen=True)
class ExtractionJob:
    image: Path
    out_dir: Path
    kind: str
    mask: Path | None = None
    num_classes: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")


def correspondence_features(trunk, batch: torch.Tensor) -> np.ndarray:
    """Concatenate early and deep stage features on the early grid.

    The deeper stage is upsampled bilinearly to the early stage's
    resolution and each stage is L2-normalized per position before
    concatenation, so neither stage dominates cosine similarities.
    """
    with torch.no_grad():
        f1, f3 = trunk.forward_stages(batch)
        f3 = F.interpolate(
            f3, size=f1.shape[2:], mode="bilinear", align_corners=False
        )
        feats = torch.cat(
            [F.normalize(f1, dim=1, eps=1e-12), F.normalize(f3, dim=1, eps=1e-12)],
            dim=1,
        )
    out = feats.squeeze(0).numpy().astype(np.float32)
    _check_norm_budget(out)
    return out


def _check_norm_budget(features: np.ndarray) -> None:
    norms = np.linalg.norm(features.astype(np.float64), axis=0)
    limit = math.sqrt(2.0) + 1e-4
    if norms.max() > limit:
        raise RuntimeError(
            f"per-position norm {norms.max():.6f} exceeds the sqrt(2) budget"
        )


def metric_features(backbone, batch: torch.Tensor) -> np.ndarray:
    """Full-resolution early VGG features (64 channels)."""
    with torch.no_grad():
        feats = backbone(batch)
    return feats.squeeze(0).numpy().astype(np.float32)


def resize_mask_nearest(ids: np.ndarray, height: int, width: int) -> np.ndarray:
    """Top-left nearest resampling; class ids are never interpolated."""
    rows = (np.arange(height) * ids.shape[0]) // height
    cols = (np.arange(width) * ids.shape[1]) // width
    return ids[np.ix_(rows, cols)]


def prepare_mask(
    path: Path, num_classes: int | None, target_hw: tuple[int, int]
) -> np.ndarray:
    ids = load_mask_ids(path)
    if num_classes is not None:
        labeled = ids[ids != IGNORE_ID]
        if labeled.size and int(labeled.max()) >= num_classes:
            raise ValueError(
                f"{path}: mask id {int(labeled.max())} is outside the "
                f"{num_classes}-class vocabulary"
            )
    return resize_mask_nearest(ids, *target_hw)


def run_job(job: ExtractionJob, model) -> dict[str, Path]:
    """Extract features (and optionally a matching mask) for one image.

    Returns the written paths keyed by role.  ``model`` is the backbone
    built by :mod:`densestyle_extractor.backbones` for ``job.kind``.
    """
    image = resize_short_side(load_image_rgb(job.image))
    if job.kind == "correspondence":
        batch = to_batch(image, CLIP_MEAN, CLIP_STD)
        features = correspondence_features(model, batch)
        stages = ["layer1", "layer3"]
    else:
        batch = to_batch(image, IMAGENET_MEAN, IMAGENET_STD)
        features = metric_features(model, batch)
        stages = ["pre-pool"]

    job.out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    feat_path = job.out_dir / "feat.dst"
    write_dst(features, feat_path)
    written["features"] = feat_path

    grid = features.shape[1], features.shape[2]
    if job.mask is not None:
        mask = prepare_mask(job.mask, job.num_classes, grid)
        mask_path = job.out_dir / f"mask_{grid[0]}x{grid[1]}.dst"
        write_dst(mask, mask_path)
        written["mask"] = mask_path

    meta = {
        "kind": job.kind,
        "backbone": "clip-rn50-trunk" if job.kind == "correspondence" else "vgg16",
        "stages": stages,
        "per_stage_l2_normalized": job.kind == "correspondence",
        "input_size": [image.size[1], image.size[0]],
        "grid": list(grid),
        "channels": int(features.shape[0]),
    }
    meta_path = job.out_dir / "meta.json"
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    written["meta"] = meta_path
    return written
