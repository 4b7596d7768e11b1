"""Class-localized style metric.

Each class is treated as its own image: features under the class mask
form a per-pixel-normalized Gram matrix, classes are compared by the
squared Frobenius gap of their Grams, and the final score is the ratio
of translation-to-exemplar over source-to-exemplar distances, so 1
means the translation kept the source style and 0 means it matched the
exemplar exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from densestyle.maps import LabelMask, class_areas, flatten_spatial, resize_mask_nearest
from densestyle.tensor import atomic_write_bytes

SKIP_ABSENT_SOURCE = "absent in source mask"
SKIP_ABSENT_EXEMPLAR = "absent in exemplar mask"
SKIP_ZERO_DISTANCE = "source and exemplar styles identical"


@dataclass(frozen=True)
class ClassGram:
    """Per-class second-moment matrix of masked feature vectors."""

    class_id: int
    values: np.ndarray
    pixel_count: int


@dataclass(frozen=True)
class ClassScore:
    l_trans_ref: float
    l_src_ref: float
    h: float


@dataclass(frozen=True)
class SkippedClass:
    class_id: int
    reason: str


@dataclass(frozen=True)
class MetricReport:
    """Per-class ratio scores plus the unweighted mean over scored classes."""

    classes: dict[int, ClassScore]
    skipped: list[SkippedClass] = field(default_factory=list)

    @property
    def average_h(self) -> float | None:
        if not self.classes:
            return None
        return float(np.mean([s.h for s in self.classes.values()]))

    def to_json(self) -> str:
        payload = {
            "classes": {
                str(k): {
                    "L_trans_ref": score.l_trans_ref,
                    "L_src_ref": score.l_src_ref,
                    "H": score.h,
                }
                for k, score in sorted(self.classes.items())
            },
            "average_H": self.average_h,
            "skipped": [
                {"class": s.class_id, "reason": s.reason} for s in self.skipped
            ],
        }
        return json.dumps(payload, indent=2)

    def save(self, path: str | Path) -> None:
        atomic_write_bytes(path, (self.to_json() + "\n").encode("utf-8"))


def masked_gram(features: np.ndarray, mask: LabelMask, class_id: int) -> ClassGram:
    """Gram matrix of the feature columns under one class of the mask.

    The mask must already live at the feature resolution.  The result is
    normalized by the class pixel count and accumulated in 64-bit.
    """
    features = np.asarray(features)
    if features.ndim != 3:
        raise ValueError(f"expected (V, H, W) features, got {features.shape}")
    if mask.ids.shape != features.shape[1:]:
        raise ValueError(
            f"mask resolution {mask.ids.shape} does not match feature "
            f"resolution {features.shape[1:]}"
        )
    sel = mask.ids.reshape(-1) == class_id
    count = int(sel.sum())
    if count == 0:
        raise ValueError(f"class {class_id} is absent from the mask")
    cols = flatten_spatial(features).astype(np.float64)[:, sel]
    gram = (cols @ cols.T) / count
    return ClassGram(
        class_id=class_id, values=gram.astype(np.float32), pixel_count=count
    )


def class_style_distance(
    features_a: np.ndarray,
    mask_a: LabelMask,
    features_b: np.ndarray,
    mask_b: LabelMask,
    class_id: int,
) -> float:
    """Squared Frobenius gap of the two class Grams, normalized by V^2.

    The per-channel-count normalization is applied identically on both
    sides of any ratio, so it cancels in the final score.
    """
    ga = masked_gram(features_a, mask_a, class_id)
    gb = masked_gram(features_b, mask_b, class_id)
    if ga.values.shape != gb.values.shape:
        raise ValueError("feature channel counts differ between the two images")
    diff = ga.values.astype(np.float64) - gb.values.astype(np.float64)
    v = diff.shape[0]
    return float(np.sum(diff * diff) / (v * v))


def localized_style_score(
    source: np.ndarray,
    exemplar: np.ndarray,
    translation: np.ndarray,
    source_mask: LabelMask,
    exemplar_mask: LabelMask,
    classes: list[int] | None = None,
) -> MetricReport:
    """Score how far each class moved from source style toward exemplar style.

    The translation shares the source's spatial layout and is scored
    under the source mask.  Masks are resampled to the feature grids by
    nearest neighbor when their resolutions differ.  Classes missing
    from either mask, or whose source and exemplar styles already
    coincide, are skipped and listed with a reason.
    """
    source = np.asarray(source)
    exemplar = np.asarray(exemplar)
    translation = np.asarray(translation)
    if translation.shape != source.shape:
        raise ValueError(
            f"translation shape {translation.shape} must match source "
            f"shape {source.shape}"
        )
    source_mask = resize_mask_nearest(source_mask, *source.shape[1:])
    exemplar_mask = resize_mask_nearest(exemplar_mask, *exemplar.shape[1:])

    areas_src = class_areas(source_mask)
    areas_ref = class_areas(exemplar_mask)
    if classes is None:
        classes = sorted(
            set(np.flatnonzero(areas_src)) | set(np.flatnonzero(areas_ref))
        )

    scores: dict[int, ClassScore] = {}
    skipped: list[SkippedClass] = []
    for k in classes:
        k = int(k)
        if k >= areas_src.size or areas_src[k] == 0:
            skipped.append(SkippedClass(k, SKIP_ABSENT_SOURCE))
            continue
        if k >= areas_ref.size or areas_ref[k] == 0:
            skipped.append(SkippedClass(k, SKIP_ABSENT_EXEMPLAR))
            continue
        l_src_ref = class_style_distance(
            source, source_mask, exemplar, exemplar_mask, k
        )
        if l_src_ref == 0.0:
            skipped.append(SkippedClass(k, SKIP_ZERO_DISTANCE))
            continue
        l_trans_ref = class_style_distance(
            translation, source_mask, exemplar, exemplar_mask, k
        )
        scores[k] = ClassScore(
            l_trans_ref=l_trans_ref,
            l_src_ref=l_src_ref,
            h=l_trans_ref / l_src_ref,
        )
    return MetricReport(classes=scores, skipped=skipped)
