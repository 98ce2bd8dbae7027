"""Independent brute-force oracles used to freeze expected test values.

Everything here is written as plain loops over voxels, deliberately
avoiding the vectorized implementations under test.
"""

from __future__ import annotations

import math

import numpy as np


def brute_dice(a: np.ndarray, b: np.ndarray) -> float:
    na = nb = inter = 0
    for idx in np.ndindex(a.shape):
        av, bv = int(a[idx]), int(b[idx])
        na += av
        nb += bv
        inter += av and bv
    if na == 0 and nb == 0:
        return 1.0
    return 2.0 * inter / (na + nb)


def brute_binarize(p: np.ndarray, threshold: float) -> np.ndarray:
    out = np.zeros(p.shape, dtype=np.uint8)
    for idx in np.ndindex(p.shape):
        out[idx] = 1 if p[idx] >= threshold else 0
    return out


def brute_extreme_points(mask: np.ndarray) -> dict:
    """Exhaustive-scan extreme points with the centroid/lexicographic rule."""
    fg = [idx for idx in np.ndindex(mask.shape) if mask[idx]]
    assert fg, "empty mask"
    points = {}
    for axis_idx, axis in enumerate(("x", "y", "z")):
        vals = [p[axis_idx] for p in fg]
        for side, extremum in (("min", min(vals)), ("max", max(vals))):
            slice_pts = [p for p in fg if p[axis_idx] == extremum]
            n = len(slice_pts)
            centroid = tuple(sum(p[d] for p in slice_pts) / n for d in range(3))
            best = min(
                slice_pts,
                key=lambda p: (
                    sum((p[d] - centroid[d]) ** 2 for d in range(3)),
                    p[0],
                    p[1],
                    p[2],
                ),
            )
            points[(axis, side)] = best
    return points


def brute_mxa(pred_mask: np.ndarray, gt_points: dict, spacing) -> float:
    pred_points = brute_extreme_points(pred_mask)
    total = 0.0
    for slot, q in gt_points.items():
        p = pred_points[slot]
        total += math.sqrt(sum(((p[d] - q[d]) * spacing[d]) ** 2 for d in range(3)))
    return total / 6.0


def brute_trilinear(vol: np.ndarray, coord) -> float:
    """Trilinear interpolation at a continuous coordinate, edge-clamped."""
    cs = [min(max(c, 0.0), n - 1.0) for c, n in zip(coord, vol.shape)]
    lo = [int(math.floor(c)) for c in cs]
    hi = [min(l + 1, n - 1) for l, n in zip(lo, vol.shape)]
    f = [c - l for c, l in zip(cs, lo)]
    acc = 0.0
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                w = (
                    (f[0] if di else 1 - f[0])
                    * (f[1] if dj else 1 - f[1])
                    * (f[2] if dk else 1 - f[2])
                )
                i = hi[0] if di else lo[0]
                j = hi[1] if dj else lo[1]
                k = hi[2] if dk else lo[2]
                acc += w * float(vol[i, j, k])
    return acc


def resample_coord(out_idx: int, n_in: int, n_out: int) -> float:
    """Pixel-center mapping used by the resampler."""
    return (out_idx + 0.5) * (n_in / n_out) - 0.5


def random_blob(rng: np.random.Generator, shape, p_seed: float = 0.5) -> np.ndarray:
    """A random nonempty blob: thresholded smoothed noise, retried until nonempty."""
    while True:
        field = rng.random(shape)
        # crude 3-voxel box smoothing via shifts
        sm = field.copy()
        for axis in range(3):
            sm = sm + np.roll(field, 1, axis=axis) + np.roll(field, -1, axis=axis)
        mask = (sm > np.quantile(sm, 1 - p_seed * rng.uniform(0.2, 0.8))).astype(np.uint8)
        if mask.any():
            return mask
