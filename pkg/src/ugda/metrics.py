"""Overlap and extreme-point alignment metrics."""

from __future__ import annotations

import numpy as np

from .errors import EmptyMaskError, InvalidArgumentError
from .points import SLOTS, ExtremePointSet, extract_extreme_points
from .volume import SegmentationMask


def dice_score(a: SegmentationMask, b: SegmentationMask) -> float:
    """Dice-Sorensen coefficient 2|a n b| / (|a| + |b|); 1.0 when both empty."""
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = int(a.voxels.sum())
    nb = int(b.voxels.sum())
    if na == 0 and nb == 0:
        return 1.0
    inter = int(np.logical_and(a.voxels, b.voxels).sum())
    return 2.0 * inter / (na + nb)


def point_distance_mm(p, q, spacing_mm) -> float:
    """Euclidean distance between two voxel coordinates in millimetres."""
    return float(
        np.sqrt(sum(((pc - qc) * s) ** 2 for pc, qc, s in zip(p, q, spacing_mm)))
    )


def mxa(pred: SegmentationMask, gt_points: ExtremePointSet) -> float:
    """Mean extreme-point accuracy in mm.

    Extracts the prediction's six extreme points, pairs each (axis, side)
    slot with its ground-truth counterpart, and averages the six Euclidean
    distances in physical units.  An empty prediction raises
    :class:`EmptyMaskError`; callers aggregating over volumes flag and
    exclude such rows rather than propagating infinities.
    """
    if pred.is_empty():
        raise EmptyMaskError("predicted mask is empty; MXA undefined")
    if tuple(pred.spacing_mm) != tuple(gt_points.spacing_mm):
        raise InvalidArgumentError(
            f"spacing mismatch: {pred.spacing_mm} vs {gt_points.spacing_mm}"
        )
    gt_points.check_in_bounds(pred.shape)
    pred_points = extract_extreme_points(pred)
    dists = [
        point_distance_mm(pred_points.points[slot], gt_points.points[slot], pred.spacing_mm)
        for slot in SLOTS
    ]
    return float(np.mean(dists))
