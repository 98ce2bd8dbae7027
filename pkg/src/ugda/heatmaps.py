"""Gaussian heatmap rendering for extreme-point sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .points import SLOTS, ExtremePointSet

DEFAULT_SIGMA_VOX = 5.0


@dataclass(frozen=True)
class HeatmapVolume:
    """Six per-point Gaussian channels plus their summed, clamped channel.

    Each channel peaks at exactly 1.0 on its point's voxel; the summed
    channel is clamped to [0, 1] so it stays in the same range as the
    individual Gaussians.
    """

    channels: np.ndarray  # (6, nx, ny, nz), slot order as points.SLOTS
    summed: np.ndarray  # (nx, ny, nz)
    sigma_vox: float


def render_heatmaps(
    e: ExtremePointSet, shape, sigma_vox: float = DEFAULT_SIGMA_VOX
) -> HeatmapVolume:
    """Render one 3D Gaussian per extreme point, exp(-||v - p||^2 / (2 sigma^2)).

    Distances are in voxel units.  Points must lie inside ``shape``.
    """
    if sigma_vox <= 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma_vox}")
    shape = tuple(int(n) for n in shape)
    e.check_in_bounds(shape)
    ii, jj, kk = np.ogrid[: shape[0], : shape[1], : shape[2]]
    channels = np.empty((6, *shape), dtype=np.float32)
    inv = 1.0 / (2.0 * sigma_vox * sigma_vox)
    for c, slot in enumerate(SLOTS):
        pi, pj, pk = e.points[slot]
        d2 = (ii - pi) ** 2 + (jj - pj) ** 2 + (kk - pk) ** 2
        channels[c] = np.exp(-d2 * inv)
    summed = np.clip(channels.sum(axis=0), 0.0, 1.0).astype(np.float32)
    return HeatmapVolume(channels, summed, float(sigma_vox))


def sum_and_clamp(channels: np.ndarray) -> np.ndarray:
    """Collapse a (6, ...) channel stack into the single clamped input channel."""
    return np.clip(channels.sum(axis=0), 0.0, 1.0)
