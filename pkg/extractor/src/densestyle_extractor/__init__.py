"""Image-to-tensor client for the densestyle toolkit.

Extracts correspondence backbone features (early plus upsampled deep
stage, per-stage L2-normalized) and early VGG metric features from real
images, converts label masks to matching resolutions, and writes
everything in the toolkit's DST1 container format.
"""

from densestyle_extractor.backbones import (
    CorrespondenceTrunk,
    MissingWeightsError,
    load_correspondence_trunk,
    load_metric_backbone,
)
from densestyle_extractor.dst import read_dst, write_dst
from densestyle_extractor.extract import (
    ExtractionJob,
    correspondence_features,
    metric_features,
    prepare_mask,
    resize_mask_nearest,
    run_job,
)

__version__ = "0.1.0"

__all__ = [
    "CorrespondenceTrunk",
    "ExtractionJob",
    "MissingWeightsError",
    "correspondence_features",
    "load_correspondence_trunk",
    "load_metric_backbone",
    "metric_features",
    "prepare_mask",
    "read_dst",
    "resize_mask_nearest",
    "run_job",
    "write_dst",
    "__version__",
]
