"""Severity-graded image distortions over COCO datasets and robustness scoring
for object detectors."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .coco_io import (
    Annotation,
    CocoDataset,
    Detection,
    annotation_mask,
    decode_rle,
    encode_rle,
    load_dataset,
    load_detections,
    parse_dataset,
    parse_detections,
    rasterize_polygons,
)
from .distortions import ALL_KINDS, DistortionKind, DistortionSpec, TargetPolicy, apply, derive_seed
from .evaluator import aggregate_stats, coco_map, relative_improvement, robustness_rate

__all__ = [
    "BACKEND",
    "ALL_KINDS",
    "Annotation",
    "CocoDataset",
    "Detection",
    "DistortionKind",
    "DistortionSpec",
    "TargetPolicy",
    "aggregate_stats",
    "annotation_mask",
    "apply",
    "coco_map",
    "decode_rle",
    "derive_seed",
    "encode_rle",
    "load_dataset",
    "load_detections",
    "parse_dataset",
    "parse_detections",
    "rasterize_polygons",
    "relative_improvement",
    "robustness_rate",
]
