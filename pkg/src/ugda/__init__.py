"""User-guided domain adaptation for extreme-point-driven 3D annotation."""

__version__ = "0.1.0"

from .errors import (
    CheckpointError,
    ContractViolationError,
    EmptyMaskError,
    InvalidArgumentError,
    UgdaError,
)
from .heatmaps import HeatmapVolume, render_heatmaps
from .metrics import dice_score, mxa
from .points import ExtremePointSet, extract_extreme_points
from .volume import (
    ProbabilityMap,
    SegmentationMask,
    Volume,
    binarize,
    resample_volume,
    window_normalize,
)

__all__ = [
    "CheckpointError",
    "ContractViolationError",
    "EmptyMaskError",
    "ExtremePointSet",
    "HeatmapVolume",
    "InvalidArgumentError",
    "ProbabilityMap",
    "SegmentationMask",
    "UgdaError",
    "Volume",
    "binarize",
    "dice_score",
    "extract_extreme_points",
    "mxa",
    "render_heatmaps",
    "resample_volume",
    "window_normalize",
]
