"""Extreme-point sets: extraction from masks, JSON persistence, remapping.

An extreme-point set holds exactly six voxel coordinates, one per
(axis, side) slot: the foreground voxels attaining the min/max coordinate
along each of x, y, z.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import audit
from .errors import EmptyMaskError, InvalidArgumentError
from .volume import SegmentationMask, Spacing, _check_spacing

AXES = ("x", "y", "z")
SIDES = ("min", "max")
SLOTS = tuple((a, s) for a in AXES for s in SIDES)

SOURCE_HUMAN = "human_click"
SOURCE_DERIVED = "derived_from_mask"
SOURCE_PREDICTED = "predicted"
_SOURCES = (SOURCE_HUMAN, SOURCE_DERIVED, SOURCE_PREDICTED)


@dataclass(frozen=True)
class ExtremePointSet:
    """Six extreme-point voxel coordinates keyed by (axis, side)."""

    points: dict[tuple[str, str], tuple[int, int, int]]
    spacing_mm: Spacing
    source: str
    study_id: str = ""

    def __post_init__(self):
        pts = {k: tuple(int(c) for c in v) for k, v in self.points.items()}
        if set(pts) != set(SLOTS):
            raise InvalidArgumentError(
                f"expected exactly the 6 slots {SLOTS}, got {sorted(pts)}"
            )
        for axis_idx, axis in enumerate(AXES):
            if pts[(axis, "min")][axis_idx] > pts[(axis, "max")][axis_idx]:
                raise InvalidArgumentError(
                    f"{axis}-min point lies beyond {axis}-max along {axis}"
                )
        if self.source not in _SOURCES:
            raise InvalidArgumentError(f"unknown source {self.source!r}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "spacing_mm", _check_spacing(self.spacing_mm))

    def as_array(self) -> np.ndarray:
        """(6, 3) int array in canonical slot order."""
        return np.array([self.points[slot] for slot in SLOTS], dtype=np.int64)

    def check_in_bounds(self, shape) -> None:
        for slot, ijk in self.points.items():
            if any(not 0 <= c < n for c, n in zip(ijk, shape)):
                raise InvalidArgumentError(
                    f"point {slot} at {ijk} is outside grid of shape {tuple(shape)}"
                )


def extract_extreme_points(m: SegmentationMask) -> ExtremePointSet:
    """Find the six extreme points of a nonempty mask.

    Among voxels attaining an axis extremum, the one nearest (Euclidean,
    in voxels) to the in-mask centroid of that extremal slice is chosen;
    remaining ties break lexicographically by (i, j, k).
    """
    fg = np.argwhere(m.voxels > 0)
    if fg.size == 0:
        raise EmptyMaskError("cannot extract extreme points from an empty mask")
    points: dict[tuple[str, str], tuple[int, int, int]] = {}
    for axis_idx, axis in enumerate(AXES):
        coords = fg[:, axis_idx]
        for side, extremum in (("min", coords.min()), ("max", coords.max())):
            slice_pts = fg[coords == extremum]
            centroid = slice_pts.mean(axis=0)
            d2 = ((slice_pts - centroid) ** 2).sum(axis=1)
            order = np.lexsort((slice_pts[:, 2], slice_pts[:, 1], slice_pts[:, 0], d2))
            points[(axis, side)] = tuple(int(c) for c in slice_pts[order[0]])
    return ExtremePointSet(points, m.spacing_mm, SOURCE_DERIVED, m.study_id)


def map_point(ijk, from_shape, to_shape) -> tuple[int, int, int]:
    """Map a voxel coordinate between grids using the pixel-center convention."""
    out = []
    for c, n, t in zip(ijk, from_shape, to_shape):
        x = (c + 0.5) * (t / n) - 0.5
        out.append(int(min(max(round(x), 0), t - 1)))
    return tuple(out)


def map_point_set(e: ExtremePointSet, from_shape, to_shape, new_spacing) -> ExtremePointSet:
    """Remap all six points to a resampled grid.

    The min<=max slot invariant is restored by swapping if rounding ever
    collapses an axis.
    """
    pts = {slot: map_point(ijk, from_shape, to_shape) for slot, ijk in e.points.items()}
    for axis_idx, axis in enumerate(AXES):
        lo, hi = pts[(axis, "min")], pts[(axis, "max")]
        if lo[axis_idx] > hi[axis_idx]:
            pts[(axis, "min")], pts[(axis, "max")] = hi, lo
    return ExtremePointSet(pts, new_spacing, e.source, e.study_id)


def to_json_dict(e: ExtremePointSet) -> dict:
    return {
        "study_id": e.study_id,
        "spacing_mm": [float(s) for s in e.spacing_mm],
        "source": e.source,
        "points": [
            {"axis": axis, "side": side, "ijk": list(e.points[(axis, side)])}
            for axis, side in SLOTS
        ],
    }


def from_json_dict(d: dict) -> ExtremePointSet:
    points = {(p["axis"], p["side"]): tuple(p["ijk"]) for p in d["points"]}
    if len(points) != len(d["points"]):
        raise InvalidArgumentError("duplicate (axis, side) slot in point list")
    return ExtremePointSet(points, tuple(d["spacing_mm"]), d["source"], d["study_id"])


def dumps(e: ExtremePointSet) -> str:
    """Canonical JSON encoding; byte-stable for round-trip equality."""
    return json.dumps(to_json_dict(e), indent=2) + "\n"


def loads(text: str) -> ExtremePointSet:
    return from_json_dict(json.loads(text))


def save_points(path: str | Path, e: ExtremePointSet) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(e))


def load_points(path: str | Path) -> ExtremePointSet:
    audit.record_read(path)
    return loads(Path(path).read_text())
