"""Feature-space toolkit for dense exemplar-style transfer.

Implements the inference-time math of dense style exchange: entropic
optimal-transport semantic correspondence with imbalance-aware marginals,
dense style warping, positional style injection, and a class-localized
style metric, plus the on-disk tensor container tying the stages together.
"""

from densestyle._threads import apply_thread_cap as _apply_thread_cap

# BLAS thread caps only take effect before numpy initializes.
_apply_thread_cap()

from densestyle.correspondence import (
    SemanticCorrespondence,
    TransportPlan,
    build_cost,
    correspondence_accuracy,
    masses_from_features,
    masses_from_labels,
    sinkhorn,
    uniform_masses,
    warp_labels,
    warp_style,
)
from densestyle.maps import (
    IGNORE_ID,
    LabelMask,
    class_areas,
    cosine_similarity_matrix,
    flatten_spatial,
    load_feature_map,
    load_label_mask,
    load_style_map,
    one_hot,
    resize_mask_nearest,
    save_feature_map,
    save_label_mask,
    save_style_map,
    unflatten_spatial,
)
from densestyle.metric import (
    ClassGram,
    MetricReport,
    class_style_distance,
    localized_style_score,
    masked_gram,
)
from densestyle.style import (
    ModulationWeights,
    PonoStats,
    ToyDecoderWeights,
    dnorm,
    global_style,
    mix_style,
    pono_stats,
    project_modulation,
    toy_decode,
)
from densestyle.tensor import (
    BadMagicError,
    SizeMismatchError,
    TensorFormatError,
    TruncatedError,
    UnknownDtypeError,
    load_tensor,
    save_tensor,
)

__version__ = "0.1.0"

__all__ = [
    "BadMagicError",
    "ClassGram",
    "IGNORE_ID",
    "LabelMask",
    "MetricReport",
    "ModulationWeights",
    "PonoStats",
    "SemanticCorrespondence",
    "SizeMismatchError",
    "TensorFormatError",
    "ToyDecoderWeights",
    "TransportPlan",
    "TruncatedError",
    "UnknownDtypeError",
    "build_cost",
    "class_areas",
    "class_style_distance",
    "correspondence_accuracy",
    "cosine_similarity_matrix",
    "dnorm",
    "flatten_spatial",
    "global_style",
    "load_feature_map",
    "load_label_mask",
    "load_style_map",
    "load_tensor",
    "localized_style_score",
    "masked_gram",
    "masses_from_features",
    "masses_from_labels",
    "mix_style",
    "one_hot",
    "pono_stats",
    "project_modulation",
    "resize_mask_nearest",
    "save_feature_map",
    "save_label_mask",
    "save_style_map",
    "save_tensor",
    "sinkhorn",
    "toy_decode",
    "unflatten_spatial",
    "uniform_masses",
    "warp_labels",
    "warp_style",
    "__version__",
]
