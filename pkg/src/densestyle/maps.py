"""Dense spatial grids and the numerics shared by every pipeline stage.

Feature and style maps are float32 arrays laid out ``[channels, H, W]``;
label masks are uint16 grids with an explicit class count.  The spatial
flattening convention is fixed everywhere: position ``l = h * W + w``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from densestyle.tensor import load_tensor, save_tensor

# Sentinel for unlabeled pixels; real masks are rarely fully labeled.
IGNORE_ID = 0xFFFF


@dataclass(frozen=True)
class LabelMask:
    """Per-pixel class indices over a fixed vocabulary of ``num_classes``.

    Pixels equal to ``ignore_id`` carry no class; every other id must be
    below ``num_classes``.
    """

    ids: np.ndarray
    num_classes: int
    ignore_id: int = IGNORE_ID

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.uint16)
        if ids.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {ids.shape}")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        labeled = ids[ids != self.ignore_id]
        if labeled.size and int(labeled.max()) >= self.num_classes:
            raise ValueError(
                f"class id {int(labeled.max())} >= num_classes {self.num_classes}"
            )
        object.__setattr__(self, "ids", ids)

    @classmethod
    def from_ids(cls, ids: np.ndarray, ignore_id: int = IGNORE_ID) -> "LabelMask":
        """Build a mask deriving the vocabulary from the largest id present."""
        ids = np.asarray(ids, dtype=np.uint16)
        labeled = ids[ids != ignore_id]
        k = int(labeled.max()) + 1 if labeled.size else 1
        return cls(ids, num_classes=k, ignore_id=ignore_id)

    @property
    def height(self) -> int:
        return self.ids.shape[0]

    @property
    def width(self) -> int:
        return self.ids.shape[1]

    def with_classes(self, num_classes: int) -> "LabelMask":
        """Re-key the mask to a (never smaller) shared vocabulary."""
        return replace(self, num_classes=num_classes)

    def labeled(self) -> np.ndarray:
        """Boolean (H, W) grid marking pixels that carry a class."""
        return self.ids != self.ignore_id

    def present_classes(self) -> np.ndarray:
        """Sorted ids of classes with at least one pixel."""
        return np.flatnonzero(class_areas(self) > 0)


def flatten_spatial(fmap: np.ndarray) -> np.ndarray:
    """Reshape a (C, H, W) map to (C, H*W) with column l = h*W + w."""
    fmap = np.asarray(fmap)
    if fmap.ndim != 3:
        raise ValueError(f"expected (C, H, W), got shape {fmap.shape}")
    c, h, w = fmap.shape
    return np.ascontiguousarray(fmap).reshape(c, h * w)


def unflatten_spatial(mat: np.ndarray, height: int, width: int) -> np.ndarray:
    """Inverse of :func:`flatten_spatial` for a known grid size."""
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[1] != height * width:
        raise ValueError(
            f"cannot fold {mat.shape} into ({mat.shape[0]}, {height}, {width})"
        )
    return mat.reshape(mat.shape[0], height, width)


def cosine_similarity_matrix(
    a: np.ndarray, b: np.ndarray, clip_negative: bool = True
) -> np.ndarray:
    """Pairwise cosine similarity between columns of ``a`` and ``b``.

    Returns an (Na, Nb) float64 matrix.  Zero-norm columns are defined to
    have similarity 0 to everything, which keeps downstream transport and
    mass estimates free of NaN.  With ``clip_negative`` the entries are
    clamped to [0, 1], otherwise to [-1, 1].
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("inputs must be 2-D channel-by-position matrices")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"channel counts differ: {a.shape[0]} vs {b.shape[0]}")
    an = _normalize_columns(a)
    bn = _normalize_columns(b)
    sim = an.T @ bn
    lo = 0.0 if clip_negative else -1.0
    return np.clip(sim, lo, 1.0)


def _normalize_columns(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=0)
    return m / np.where(norms > 0.0, norms, 1.0)


def one_hot(mask: LabelMask) -> np.ndarray:
    """Expand a mask to a (K, H*W) indicator matrix; ignore pixels are all-zero."""
    flat = mask.ids.reshape(-1)
    out = np.zeros((mask.num_classes, flat.size), dtype=np.float64)
    valid = flat != mask.ignore_id
    out[flat[valid].astype(np.intp), np.flatnonzero(valid)] = 1.0
    return out


def class_areas(mask: LabelMask) -> np.ndarray:
    """Pixel count of every class as an int64 vector of length K."""
    flat = mask.ids.reshape(-1)
    valid = flat != mask.ignore_id
    return np.bincount(
        flat[valid].astype(np.intp), minlength=mask.num_classes
    ).astype(np.int64)


def resize_mask_nearest(mask: LabelMask, height: int, width: int) -> LabelMask:
    """Nearest-neighbor resample; ids are copied, never interpolated.

    Output pixel (h, w) takes the source pixel at
    (floor(h*H/height), floor(w*W/width)).
    """
    if height < 1 or width < 1:
        raise ValueError("target extents must be >= 1")
    rows = (np.arange(height) * mask.height) // height
    cols = (np.arange(width) * mask.width) // width
    return replace(mask, ids=mask.ids[np.ix_(rows, cols)])


def load_feature_map(path: str | Path) -> np.ndarray:
    """Load a (C, H, W) float32 map, rejecting NaN/Inf values."""
    t = load_tensor(path)
    if t.dtype != np.float32:
        raise ValueError(f"{path}: feature/style maps must be f32, got {t.dtype}")
    if t.ndim != 3:
        raise ValueError(f"{path}: expected dims [C, H, W], got {list(t.shape)}")
    if not np.isfinite(t).all():
        raise ValueError(f"{path}: map contains non-finite values")
    return t


# Style maps share the feature-map layout and validation.
load_style_map = load_feature_map


def save_feature_map(fmap: np.ndarray, path: str | Path) -> None:
    fmap = np.asarray(fmap, dtype=np.float32)
    if fmap.ndim != 3:
        raise ValueError(f"expected dims [C, H, W], got {list(fmap.shape)}")
    save_tensor(fmap, path)


save_style_map = save_feature_map


def load_label_mask(
    path: str | Path, num_classes: int | None = None, ignore_id: int = IGNORE_ID
) -> LabelMask:
    """Load an (H, W) uint16 mask; derives the class count unless given."""
    t = load_tensor(path)
    if t.dtype != np.uint16:
        raise ValueError(f"{path}: masks must be u16, got {t.dtype}")
    if t.ndim != 2:
        raise ValueError(f"{path}: expected dims [H, W], got {list(t.shape)}")
    if num_classes is None:
        return LabelMask.from_ids(t, ignore_id=ignore_id)
    return LabelMask(t, num_classes=num_classes, ignore_id=ignore_id)


def save_label_mask(mask: LabelMask, path: str | Path) -> None:
    save_tensor(mask.ids, path)
