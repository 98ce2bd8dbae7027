"""Core 3D grid types and resampling/windowing/binarization operations.

Grids are numpy arrays indexed ``[i, j, k]`` for the x/y/z axes, with
per-axis physical spacing in millimetres.  All operations are pure
functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import nifti
from .errors import InvalidArgumentError

Spacing = tuple[float, float, float]


def _check_spacing(spacing_mm) -> Spacing:
    spacing = tuple(float(s) for s in spacing_mm)
    if len(spacing) != 3 or min(spacing) <= 0:
        raise InvalidArgumentError(f"spacing must be 3 positive reals, got {spacing_mm}")
    return spacing


@dataclass(frozen=True)
class Volume:
    """A 3D scalar image with per-axis spacing in mm."""

    voxels: np.ndarray
    spacing_mm: Spacing
    study_id: str = ""

    def __post_init__(self):
        vox = np.asarray(self.voxels)
        if vox.ndim != 3:
            raise InvalidArgumentError(f"volume must be 3D, got shape {vox.shape}")
        if not np.isfinite(vox).all():
            raise InvalidArgumentError("volume intensities must be finite")
        object.__setattr__(self, "voxels", vox)
        object.__setattr__(self, "spacing_mm", _check_spacing(self.spacing_mm))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.voxels.shape


@dataclass(frozen=True)
class SegmentationMask:
    """A binary foreground mask on the same kind of grid as :class:`Volume`."""

    voxels: np.ndarray
    spacing_mm: Spacing
    study_id: str = ""

    def __post_init__(self):
        vox = np.asarray(self.voxels)
        if vox.ndim != 3:
            raise InvalidArgumentError(f"mask must be 3D, got shape {vox.shape}")
        if not np.isin(vox, (0, 1)).all():
            raise InvalidArgumentError("mask values must be 0 or 1")
        object.__setattr__(self, "voxels", vox.astype(np.uint8))
        object.__setattr__(self, "spacing_mm", _check_spacing(self.spacing_mm))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.voxels.shape

    def is_empty(self) -> bool:
        return not self.voxels.any()


@dataclass(frozen=True)
class ProbabilityMap:
    """Soft foreground prediction, every voxel in [0, 1]."""

    voxels: np.ndarray
    spacing_mm: Spacing
    study_id: str = ""

    def __post_init__(self):
        vox = np.asarray(self.voxels, dtype=np.float32)
        if vox.ndim != 3:
            raise InvalidArgumentError(f"probability map must be 3D, got shape {vox.shape}")
        if vox.size and (float(vox.min()) < 0.0 or float(vox.max()) > 1.0):
            raise InvalidArgumentError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "voxels", vox)
        object.__setattr__(self, "spacing_mm", _check_spacing(self.spacing_mm))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.voxels.shape


def _resample_grid(voxels: np.ndarray, target_shape, order: int) -> np.ndarray:
    """Resample with the pixel-center mapping in_coord = (out + 0.5) * n_in / n_out - 0.5."""
    coords = np.meshgrid(
        *[
            (np.arange(t) + 0.5) * (n / t) - 0.5
            for n, t in zip(voxels.shape, target_shape)
        ],
        indexing="ij",
    )
    return ndimage.map_coordinates(
        voxels.astype(np.float64), np.stack(coords), order=order, mode="nearest"
    )


def resample_volume(v: Volume, target_shape, mode: str = "linear") -> Volume:
    """Resample a volume to ``target_shape``.

    Spacing is rescaled so the physical extent (shape * spacing) is
    preserved.  ``mode="nearest"`` must be used for label grids.
    """
    target_shape = tuple(int(t) for t in target_shape)
    if len(target_shape) != 3 or min(target_shape) < 2:
        raise InvalidArgumentError(f"target shape components must be >= 2, got {target_shape}")
    if mode not in ("linear", "nearest"):
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    new_spacing = tuple(
        s * n / t for s, n, t in zip(v.spacing_mm, v.shape, target_shape)
    )
    if target_shape == v.shape:
        return replace(v, spacing_mm=new_spacing)
    order = 1 if mode == "linear" else 0
    out = _resample_grid(v.voxels, target_shape, order)
    return Volume(out.astype(v.voxels.dtype, copy=False), new_spacing, v.study_id)


def resample_mask(m: SegmentationMask, target_shape) -> SegmentationMask:
    """Nearest-neighbour resampling for binary masks."""
    as_vol = Volume(m.voxels.astype(np.float32), m.spacing_mm, m.study_id)
    out = resample_volume(as_vol, target_shape, mode="nearest")
    return SegmentationMask(out.voxels.astype(np.uint8), out.spacing_mm, m.study_id)


def window_normalize(v: Volume, lo: float, hi: float) -> Volume:
    """Map intensities linearly from [lo, hi] to [0, 1], clipping outside."""
    if not lo < hi:
        raise InvalidArgumentError(f"window requires lo < hi, got ({lo}, {hi})")
    out = np.clip((v.voxels.astype(np.float32) - lo) / (hi - lo), 0.0, 1.0)
    return Volume(out, v.spacing_mm, v.study_id)


def binarize(p: ProbabilityMap, threshold: float = 0.5) -> SegmentationMask:
    """Threshold a probability map; voxels with p >= threshold become foreground."""
    if not 0.0 < threshold < 1.0:
        raise InvalidArgumentError(f"threshold must be in (0, 1), got {threshold}")
    return SegmentationMask(
        (p.voxels >= threshold).astype(np.uint8), p.spacing_mm, p.study_id
    )


def largest_connected_component(m: SegmentationMask) -> SegmentationMask:
    """Keep only the largest 6-connected foreground component (optional cleanup)."""
    if m.is_empty():
        return m
    labels, n = ndimage.label(m.voxels)
    if n <= 1:
        return m
    sizes = ndimage.sum_labels(np.ones_like(m.voxels), labels, index=range(1, n + 1))
    keep = int(np.argmax(sizes)) + 1
    return SegmentationMask((labels == keep).astype(np.uint8), m.spacing_mm, m.study_id)


def load_volume(path: str | Path, study_id: str = "") -> Volume:
    voxels, spacing = nifti.read_nifti(path)
    return Volume(voxels.astype(np.float32), spacing, study_id or Path(path).name.split(".")[0])


def save_volume(path: str | Path, v: Volume) -> None:
    nifti.write_nifti(path, v.voxels.astype(np.float32), v.spacing_mm)


def load_mask(path: str | Path, study_id: str = "") -> SegmentationMask:
    voxels, spacing = nifti.read_nifti(path)
    return SegmentationMask(
        voxels.astype(np.uint8), spacing, study_id or Path(path).name.split(".")[0]
    )


def save_mask(path: str | Path, m: SegmentationMask) -> None:
    nifti.write_nifti(path, m.voxels.astype(np.uint8), m.spacing_mm)
