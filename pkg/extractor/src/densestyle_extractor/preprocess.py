"""Image decoding and backbone-specific preprocessing."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

# published normalization constants of the two backbones
CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

SHORT_SIDE = 256


def load_image_rgb(path: str | Path) -> Image.Image:
    """Decode an image to RGB; grayscale and palette inputs are converted."""
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValueError(f"{path}: cannot decode image ({exc})") from exc


def resize_short_side(img: Image.Image, short: int = SHORT_SIDE) -> Image.Image:
    """Resize so the short side equals ``short``, preserving aspect ratio."""
    w, h = img.size
    if w <= h:
        new_w, new_h = short, max(short, round(h * short / w))
    else:
        new_w, new_h = max(short, round(w * short / h)), short
    return img.resize((new_w, new_h), Image.Resampling.BILINEAR)


def to_batch(img: Image.Image, mean, std) -> torch.Tensor:
    """Normalized (1, 3, H, W) float tensor from an RGB image."""
    arr = np.asarray(img, dtype=np.float32) / 255.0
    arr = (arr - np.asarray(mean, dtype=np.float32)) / np.asarray(
        std, dtype=np.float32
    )
    return torch.from_numpy(arr.transpose(2, 0, 1)).unsqueeze(0)


def load_mask_ids(path: str | Path) -> np.ndarray:
    """Per-pixel class ids from a grayscale/16-bit mask image."""
    with Image.open(path) as img:
        if img.mode not in ("L", "I", "I;16"):
            img = img.convert("I")
        ids = np.asarray(img)
    if ids.ndim != 2:
        raise ValueError(f"{path}: mask must be single channel")
    if ids.min() < 0 or ids.max() > 0xFFFF:
        raise ValueError(f"{path}: mask ids out of u16 range")
    return ids.astype(np.uint16)
