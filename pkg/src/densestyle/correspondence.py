"""Cross-domain semantic correspondence by entropic optimal transport.

Builds a cosine cost between exemplar and source feature grids, solves
for the coupling with prescribed marginals via stabilized Sinkhorn
scaling, and warps dense payloads (style maps, label masks) from the
exemplar grid onto the source grid by barycentric projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from densestyle.maps import (
    LabelMask,
    class_areas,
    cosine_similarity_matrix,
    flatten_spatial,
    one_hot,
    resize_mask_nearest,
    unflatten_spatial,
)

DEFAULT_REG = 0.05
DEFAULT_MAX_ITERATIONS = 1000
DEFAULT_MARGINAL_TOLERANCE = 1e-8

# Log-domain floor/ceiling; exp(+-700) is the float64 cliff.
_LOG_CLIP = 700.0
_ABSORB_THRESHOLD = 1e150

MASS_MODES = ("uniform", "estimated", "labels")


@dataclass(frozen=True)
class TransportPlan:
    """Nonnegative coupling between exemplar rows and source columns.

    ``achieved_tolerance`` is always measured from the stored values, so
    the marginal invariant holds by construction.  ``row_grid`` and
    ``col_grid`` optionally record the (H, W) layouts of the exemplar
    and source sides; warping needs them to restore spatial shape.
    """

    values: np.ndarray
    row_marginals: np.ndarray
    col_marginals: np.ndarray
    iterations_used: int = 0
    row_grid: tuple[int, int] | None = None
    col_grid: tuple[int, int] | None = None
    achieved_tolerance: float = field(init=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        py = np.asarray(self.row_marginals, dtype=np.float64)
        px = np.asarray(self.col_marginals, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("plan values must be a 2-D matrix")
        if values.shape != (py.size, px.size):
            raise ValueError(
                f"plan shape {values.shape} does not match marginals "
                f"({py.size}, {px.size})"
            )
        if values.min() < 0.0:
            raise ValueError("plan entries must be nonnegative")
        _check_probability(py, "row_marginals")
        _check_probability(px, "col_marginals")
        for grid, n, name in ((self.row_grid, py.size, "row"), (self.col_grid, px.size, "col")):
            if grid is not None and grid[0] * grid[1] != n:
                raise ValueError(f"{name}_grid {grid} does not cover {n} positions")
        achieved = max(
            float(np.abs(values.sum(axis=1) - py).max()),
            float(np.abs(values.sum(axis=0) - px).max()),
        )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "row_marginals", py)
        object.__setattr__(self, "col_marginals", px)
        object.__setattr__(self, "achieved_tolerance", achieved)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def with_grids(
        self, row_grid: tuple[int, int], col_grid: tuple[int, int]
    ) -> "TransportPlan":
        return replace(self, row_grid=row_grid, col_grid=col_grid)


def _check_probability(p: np.ndarray, name: str) -> None:
    if p.ndim != 1:
        raise ValueError(f"{name} must be a vector")
    if p.min() < 0.0:
        raise ValueError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} sums to {p.sum():.12f}, expected 1")


def uniform_masses(n: int) -> np.ndarray:
    """Uniform probability vector of length ``n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.full(n, 1.0 / n, dtype=np.float64)


def build_cost(
    exemplar_features: np.ndarray, source_features: np.ndarray
) -> np.ndarray:
    """Transport cost ``1 - max(cos, 0)`` between feature columns.

    Rows index exemplar positions, columns source positions; every entry
    lies in [0, 1].
    """
    sim = cosine_similarity_matrix(exemplar_features, source_features)
    return np.clip(1.0 - sim, 0.0, 1.0)


def sinkhorn(
    cost: np.ndarray,
    row_marginals: np.ndarray,
    col_marginals: np.ndarray,
    reg: float = DEFAULT_REG,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    marginal_tolerance: float = DEFAULT_MARGINAL_TOLERANCE,
) -> TransportPlan:
    """Entropy-regularized coupling with the prescribed marginals.

    Runs stabilized Sinkhorn scaling entirely in 64-bit: scaling factors
    are periodically absorbed into log-domain potentials (clamped at
    +-700) so that small ``reg`` never under- or overflows.  Returns the
    best iterate found; callers decide convergence by comparing the
    plan's ``achieved_tolerance`` with their tolerance.  Infeasible
    problems (e.g. a positive marginal entry whose row only has infinite
    cost) surface as plans that do not reach the tolerance.
    """
    if reg <= 0.0:
        raise ValueError("reg must be positive")
    if marginal_tolerance <= 0.0:
        raise ValueError("marginal_tolerance must be positive")
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if np.isnan(cost).any() or np.isneginf(cost).any():
        raise ValueError("cost entries must not be NaN or -inf")
    py = np.asarray(row_marginals, dtype=np.float64)
    px = np.asarray(col_marginals, dtype=np.float64)
    _check_probability(py, "row_marginals")
    _check_probability(px, "col_marginals")
    if cost.shape != (py.size, px.size):
        raise ValueError("cost shape does not match marginal lengths")

    log_kernel = -cost / reg
    a = np.zeros(py.size)
    b = np.zeros(px.size)
    kernel = _scaled_kernel(log_kernel, a, b)
    u = np.ones(py.size)
    v = np.ones(px.size)

    best_err = np.inf
    best_plan = u[:, None] * kernel * v[None, :]
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        kv = kernel @ v
        u = np.divide(py, kv, out=np.zeros_like(py), where=kv > 0.0)
        ktu = kernel.T @ u
        v = np.divide(px, ktu, out=np.zeros_like(px), where=ktu > 0.0)

        plan = u[:, None] * kernel * v[None, :]
        err = max(
            float(np.abs(plan.sum(axis=1) - py).max()),
            float(np.abs(plan.sum(axis=0) - px).max()),
        )
        if err < best_err:
            best_err = err
            best_plan = plan
        if err <= marginal_tolerance:
            break
        if max(u.max(initial=0.0), v.max(initial=0.0)) > _ABSORB_THRESHOLD:
            with np.errstate(divide="ignore"):
                a = np.clip(a + np.log(u), -_LOG_CLIP, _LOG_CLIP)
                b = np.clip(b + np.log(v), -_LOG_CLIP, _LOG_CLIP)
            kernel = _scaled_kernel(log_kernel, a, b)
            u = np.ones_like(u)
            v = np.ones_like(v)

    return TransportPlan(
        values=best_plan,
        row_marginals=py,
        col_marginals=px,
        iterations_used=iterations,
    )


def _scaled_kernel(log_kernel: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    exponent = log_kernel + a[:, None] + b[None, :]
    with np.errstate(over="ignore"):
        return np.exp(np.minimum(exponent, _LOG_CLIP))


def masses_from_labels(
    exemplar_mask: LabelMask, source_mask: LabelMask
) -> np.ndarray:
    """Exemplar-side marginal from class-area ratios.

    An exemplar pixel of class k receives pre-normalization mass
    ``area_x(k) / area_y(k)``; the vector is then scaled to sum to 1.
    Pixels of classes absent from the source (and unlabeled pixels) get
    mass 0.
    """
    if exemplar_mask.num_classes != source_mask.num_classes:
        raise ValueError(
            "masks must share a class vocabulary: "
            f"{exemplar_mask.num_classes} vs {source_mask.num_classes}"
        )
    areas_y = class_areas(exemplar_mask).astype(np.float64)
    areas_x = class_areas(source_mask).astype(np.float64)
    ratio = np.divide(
        areas_x, areas_y, out=np.zeros_like(areas_x), where=areas_y > 0.0
    )
    flat = exemplar_mask.ids.reshape(-1)
    labeled = flat != exemplar_mask.ignore_id
    masses = np.zeros(flat.size, dtype=np.float64)
    masses[labeled] = ratio[flat[labeled].astype(np.intp)]
    return _scale_to_probability(masses)


def masses_from_features(
    exemplar_features: np.ndarray, source_features: np.ndarray
) -> np.ndarray:
    """Unsupervised exemplar-side marginal from similarity mass ratios.

    Estimates a semantic area for every exemplar position from the row
    sums of the clipped self- and cross-similarity matrices and uses
    their ratio as pre-normalization mass.  The self row sum is at least
    the unit self-similarity for any nonzero feature, keeping the
    division safe; zero-norm positions fall back to mass 0.
    """
    z_self = cosine_similarity_matrix(exemplar_features, exemplar_features)
    z_cross = cosine_similarity_matrix(exemplar_features, source_features)
    r_self = z_self.sum(axis=1)
    r_cross = z_cross.sum(axis=1)
    masses = np.divide(
        r_cross, r_self, out=np.zeros_like(r_cross), where=r_self > 0.0
    )
    return _scale_to_probability(masses)


def _scale_to_probability(masses: np.ndarray) -> np.ndarray:
    total = masses.sum()
    if total <= 0.0:
        raise ValueError("no shared classes: every exemplar position has mass 0")
    return masses / total


def warp_style(style: np.ndarray, plan: TransportPlan) -> np.ndarray:
    """Barycentric projection of an exemplar style map onto the source grid.

    Each output position is the plan-weighted average of exemplar style
    vectors, with weights normalized per column; output values therefore
    stay inside the exemplar's per-channel range.
    """
    style = np.asarray(style)
    flat = flatten_spatial(style).astype(np.float64)
    if flat.shape[1] != plan.rows:
        raise ValueError(
            f"style covers {flat.shape[1]} positions, plan has {plan.rows} rows"
        )
    weights = _column_normalized(plan)
    warped = flat @ weights
    h, w = _require_col_grid(plan)
    return unflatten_spatial(warped, h, w).astype(np.float32)


def warp_labels(exemplar_mask: LabelMask, plan: TransportPlan) -> LabelMask:
    """Hard class assignment on the source grid via warped one-hot scores.

    Ties break toward the smallest class id.
    """
    if exemplar_mask.height * exemplar_mask.width != plan.rows:
        raise ValueError("mask spatial size does not match plan rows")
    scores = one_hot(exemplar_mask) @ _column_normalized(plan)
    ids = np.argmax(scores, axis=0).astype(np.uint16)
    h, w = _require_col_grid(plan)
    return LabelMask(
        ids.reshape(h, w),
        num_classes=exemplar_mask.num_classes,
        ignore_id=exemplar_mask.ignore_id,
    )


def _column_normalized(plan: TransportPlan) -> np.ndarray:
    sums = plan.values.sum(axis=0)
    dead = np.flatnonzero(sums <= 0.0)
    if dead.size:
        raise ValueError(
            f"transport plan column {int(dead[0])} has zero mass; "
            "the source position is unmatched"
        )
    return plan.values / sums


def _require_col_grid(plan: TransportPlan) -> tuple[int, int]:
    if plan.col_grid is None:
        raise ValueError("plan carries no source grid shape; call with_grids first")
    return plan.col_grid


def correspondence_accuracy(
    predicted: LabelMask, reference: LabelMask
) -> float:
    """Fraction of labeled pixels on which the two masks agree.

    Pixels unlabeled in either mask are excluded from both counts.
    """
    if predicted.ids.shape != reference.ids.shape:
        raise ValueError(
            f"mask shapes differ: {predicted.ids.shape} vs {reference.ids.shape}"
        )
    valid = predicted.labeled() & reference.labeled()
    total = int(valid.sum())
    if total == 0:
        raise ValueError("no labeled pixels to score")
    return float((predicted.ids[valid] == reference.ids[valid]).sum() / total)


class SemanticCorrespondence(BaseEstimator):
    """Estimator pairing a source image grid with an exemplar grid.

    ``fit`` consumes two (F, H, W) feature maps, solves the entropic
    transport problem between their flattened grids, and stores the
    coupling; ``transform`` then warps exemplar-side payloads onto the
    source grid.

    Parameters
    ----------
    reg : float, default=0.05
        Entropy regularization strength of the transport problem.
    mass_mode : {"uniform", "estimated", "labels"}, default="uniform"
        How the exemplar-side marginal is chosen: uniform, estimated
        from feature similarities, or computed from class-area ratios
        of label masks supplied to ``fit``.  The source-side marginal
        is always uniform.
    max_iterations : int, default=1000
        Sinkhorn iteration cap.
    marginal_tolerance : float, default=1e-8
        Convergence threshold on the worst marginal violation.

    Attributes
    ----------
    plan_ : TransportPlan
        Fitted coupling, exemplar rows by source columns.
    n_iter_ : int
        Sinkhorn iterations performed.
    achieved_tolerance_ : float
        Worst marginal violation of the fitted plan.
    """

    def __init__(
        self,
        reg: float = DEFAULT_REG,
        mass_mode: str = "uniform",
        max_iterations: int = DEFAULT_MAX_ITERATIONS,
        marginal_tolerance: float = DEFAULT_MARGINAL_TOLERANCE,
    ):
        self.reg = reg
        self.mass_mode = mass_mode
        self.max_iterations = max_iterations
        self.marginal_tolerance = marginal_tolerance

    def fit(
        self,
        X,
        Y=None,
        *,
        source_mask: LabelMask | None = None,
        exemplar_mask: LabelMask | None = None,
    ):
        """Solve the correspondence between source ``X`` and exemplar ``Y``.

        Both inputs are (F, H, W) feature maps with a shared channel
        count.  ``mass_mode="labels"`` additionally requires both masks,
        which are resampled to the two feature grids.
        """
        if Y is None:
            raise ValueError("exemplar features Y are required")
        fx = _check_feature_map(X, "X")
        fy = _check_feature_map(Y, "Y")
        if fx.shape[0] != fy.shape[0]:
            raise ValueError(
                f"channel counts differ: X has {fx.shape[0]}, Y has {fy.shape[0]}"
            )
        if self.mass_mode not in MASS_MODES:
            raise ValueError(
                f"mass_mode must be one of {MASS_MODES}, got {self.mass_mode!r}"
            )
        fx_flat = flatten_spatial(fx)
        fy_flat = flatten_spatial(fy)
        if self.mass_mode == "uniform":
            p_y = uniform_masses(fy_flat.shape[1])
        elif self.mass_mode == "estimated":
            p_y = masses_from_features(fy_flat, fx_flat)
        else:
            if source_mask is None or exemplar_mask is None:
                raise ValueError('mass_mode="labels" requires both masks')
            my, mx = _harmonize_vocabulary(exemplar_mask, source_mask)
            my = resize_mask_nearest(my, fy.shape[1], fy.shape[2])
            mx = resize_mask_nearest(mx, fx.shape[1], fx.shape[2])
            p_y = masses_from_labels(my, mx)
        plan = sinkhorn(
            build_cost(fy_flat, fx_flat),
            p_y,
            uniform_masses(fx_flat.shape[1]),
            reg=self.reg,
            max_iterations=self.max_iterations,
            marginal_tolerance=self.marginal_tolerance,
        )
        self.plan_ = plan.with_grids(
            (fy.shape[1], fy.shape[2]), (fx.shape[1], fx.shape[2])
        )
        self.n_iter_ = self.plan_.iterations_used
        self.achieved_tolerance_ = self.plan_.achieved_tolerance
        return self

    def transform(self, exemplar_style: np.ndarray) -> np.ndarray:
        """Warp an (S, Hy, Wy) exemplar style map onto the source grid."""
        check_is_fitted(self, "plan_")
        return warp_style(exemplar_style, self.plan_)

    def transform_labels(self, exemplar_mask: LabelMask) -> LabelMask:
        """Warp an exemplar label mask onto the source grid."""
        check_is_fitted(self, "plan_")
        mask = resize_mask_nearest(exemplar_mask, *self.plan_.row_grid)
        return warp_labels(mask, self.plan_)

    def score(self, exemplar_mask: LabelMask, reference_mask: LabelMask) -> float:
        """Label-warp accuracy against a source-side reference mask."""
        check_is_fitted(self, "plan_")
        warped = self.transform_labels(exemplar_mask)
        reference = resize_mask_nearest(reference_mask, *self.plan_.col_grid)
        return correspondence_accuracy(warped, reference)


def _check_feature_map(arr, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be a (F, H, W) feature map, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _harmonize_vocabulary(
    a: LabelMask, b: LabelMask
) -> tuple[LabelMask, LabelMask]:
    k = max(a.num_classes, b.num_classes)
    return a.with_classes(k), b.with_classes(k)
