"""Positional normalization and dense style injection.

A dense style map modulates generator-shaped activations position by
position: activations are first standardized across channels at every
spatial location, then rescaled and shifted by per-position ``beta`` and
``alpha`` maps projected from the style.  A small fixed decoder exercises
the injection end to end on image-shaped tensors.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from densestyle.maps import flatten_spatial, unflatten_spatial
from densestyle.tensor import load_tensor, save_tensor

# Added inside the square root so constant columns never divide by zero.
VARIANCE_EPSILON = 1e-5

WEIGHT_FILES = (
    "w_in.dst",
    "w_alpha.dst",
    "b_alpha.dst",
    "w_beta.dst",
    "b_beta.dst",
    "w_out.dst",
    "b_out.dst",
)


@dataclass(frozen=True)
class PonoStats:
    """Per-position mean and guarded standard deviation across channels."""

    mu: np.ndarray
    sigma: np.ndarray


def pono_stats(activations: np.ndarray) -> PonoStats:
    """Position-wise moments of a (C, N) activation matrix.

    Uses the population variance over channels; sigma is bounded below
    by ``sqrt(VARIANCE_EPSILON)``.
    """
    p = _as_matrix(activations, "activations")
    mu = p.mean(axis=0)
    var = np.mean((p - mu) ** 2, axis=0)
    return PonoStats(mu=mu, sigma=np.sqrt(var + VARIANCE_EPSILON))


def dnorm(
    activations: np.ndarray, alpha: np.ndarray, beta: np.ndarray
) -> np.ndarray:
    """Replace per-position style: standardize, then modulate.

    ``output[c, l] = (P[c, l] - mu[l]) / sigma[l] * beta[c, l] + alpha[c, l]``
    with mu/sigma taken from the activations themselves.
    """
    p = _as_matrix(activations, "activations")
    alpha = _as_matrix(alpha, "alpha")
    beta = _as_matrix(beta, "beta")
    if alpha.shape != p.shape or beta.shape != p.shape:
        raise ValueError(
            f"shape mismatch: activations {p.shape}, alpha {alpha.shape}, "
            f"beta {beta.shape}"
        )
    stats = pono_stats(p)
    return (p - stats.mu) / stats.sigma * beta + alpha


@dataclass(frozen=True)
class ModulationWeights:
    """1x1 projections turning a dense style into alpha/beta maps."""

    w_alpha: np.ndarray
    b_alpha: np.ndarray
    w_beta: np.ndarray
    b_beta: np.ndarray

    def __post_init__(self):
        for name in ("w_alpha", "b_alpha", "w_beta", "b_beta"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, arr)
        if self.w_alpha.shape != self.w_beta.shape:
            raise ValueError("w_alpha and w_beta shapes differ")
        out = self.w_alpha.shape[0]
        if self.b_alpha.shape != (out,) or self.b_beta.shape != (out,):
            raise ValueError("bias lengths do not match projection rows")

    @property
    def out_channels(self) -> int:
        return self.w_alpha.shape[0]

    @property
    def style_channels(self) -> int:
        return self.w_alpha.shape[1]


def project_modulation(
    style: np.ndarray, weights: ModulationWeights
) -> tuple[np.ndarray, np.ndarray]:
    """Per-position affine projections of a flattened (S, N) style map."""
    s = _as_matrix(style, "style")
    if s.shape[0] != weights.style_channels:
        raise ValueError(
            f"style has {s.shape[0]} channels, weights expect "
            f"{weights.style_channels}"
        )
    alpha = weights.w_alpha @ s + weights.b_alpha[:, None]
    beta = weights.w_beta @ s + weights.b_beta[:, None]
    return alpha, beta


def global_style(style: np.ndarray) -> np.ndarray:
    """Spatial mean vector of an (S, H, W) style map, replicated everywhere."""
    style = np.asarray(style)
    if style.ndim != 3:
        raise ValueError(f"expected (S, H, W), got {style.shape}")
    mean = style.astype(np.float64).mean(axis=(1, 2), keepdims=True)
    return np.broadcast_to(mean, style.shape).astype(style.dtype).copy()


def mix_style(style: np.ndarray) -> np.ndarray:
    """Even blend of the global and dense styles."""
    style = np.asarray(style)
    mixed = 0.5 * global_style(style).astype(np.float64) + 0.5 * style
    return mixed.astype(style.dtype)


@dataclass(frozen=True)
class ToyDecoderWeights:
    """Fixed three-stage decoder: lift, inject style, project to RGB."""

    w_in: np.ndarray
    modulation: ModulationWeights
    w_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self):
        for name in ("w_in", "w_out", "b_out"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, arr)
        hidden = self.w_in.shape[0]
        if self.modulation.out_channels != hidden:
            raise ValueError("modulation rows do not match w_in rows")
        if self.w_out.ndim != 2 or self.w_out.shape != (3, hidden):
            raise ValueError(f"w_out must be (3, {hidden}), got {self.w_out.shape}")
        if self.b_out.shape != (3,):
            raise ValueError("b_out must have length 3")

    def save_to_dir(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        tensors = {
            "w_in.dst": self.w_in,
            "w_alpha.dst": self.modulation.w_alpha,
            "b_alpha.dst": self.modulation.b_alpha,
            "w_beta.dst": self.modulation.w_beta,
            "b_beta.dst": self.modulation.b_beta,
            "w_out.dst": self.w_out,
            "b_out.dst": self.b_out,
        }
        for name, arr in tensors.items():
            save_tensor(np.asarray(arr, dtype=np.float32), directory / name)

    @classmethod
    def load_from_dir(cls, directory: str | Path) -> "ToyDecoderWeights":
        directory = Path(directory)
        loaded = {name: load_tensor(directory / name) for name in WEIGHT_FILES}
        return cls(
            w_in=loaded["w_in.dst"],
            modulation=ModulationWeights(
                w_alpha=loaded["w_alpha.dst"],
                b_alpha=loaded["b_alpha.dst"],
                w_beta=loaded["w_beta.dst"],
                b_beta=loaded["b_beta.dst"],
            ),
            w_out=loaded["w_out.dst"],
            b_out=loaded["b_out.dst"],
        )


def toy_decode(
    content: np.ndarray, style: np.ndarray, weights: ToyDecoderWeights
) -> np.ndarray:
    """Render a (3, H, W) image in [0, 1] from content and matching style.

    Pipeline: per-position lift by ``w_in``, style injection via
    :func:`dnorm`, ReLU, per-position projection by ``w_out`` plus bias,
    logistic squashing.  Style and content must already share a spatial
    grid; warp first if they do not.
    """
    content = np.asarray(content)
    style = np.asarray(style)
    if content.ndim != 3 or style.ndim != 3:
        raise ValueError("content and style must be (C, H, W) maps")
    if content.shape[1:] != style.shape[1:]:
        raise ValueError(
            f"spatial grids differ: content {content.shape[1:]}, "
            f"style {style.shape[1:]}; warp the style first"
        )
    if content.shape[0] != weights.w_in.shape[1]:
        raise ValueError(
            f"content has {content.shape[0]} channels, w_in expects "
            f"{weights.w_in.shape[1]}"
        )
    _, h, w = content.shape
    hidden = weights.w_in @ flatten_spatial(content).astype(np.float64)
    alpha, beta = project_modulation(
        flatten_spatial(style).astype(np.float64), weights.modulation
    )
    hidden = np.maximum(dnorm(hidden, alpha, beta), 0.0)
    rgb = expit(weights.w_out @ hidden + weights.b_out[:, None])
    return unflatten_spatial(rgb, h, w).astype(np.float32)


def _as_matrix(arr, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D channel-by-position matrix")
    return arr
