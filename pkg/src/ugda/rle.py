"""Run-length codec for binary masks in transport payloads.

Masks are flattened z-major (x fastest, z slowest) and encoded as
alternating run lengths starting from value 0, so an all-background mask
is a single count and a mask starting with foreground begins with a zero
count.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError


def rle_encode(mask: np.ndarray) -> dict:
    mask = np.asarray(mask)
    if mask.ndim != 3:
        raise InvalidArgumentError(f"expected a 3D mask, got shape {mask.shape}")
    if not np.isin(mask, (0, 1)).all():
        raise InvalidArgumentError("mask values must be 0 or 1")
    flat = mask.astype(np.uint8).ravel(order="F")
    changes = np.flatnonzero(np.diff(flat)) + 1
    boundaries = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(boundaries).tolist()
    if flat.size and flat[0] == 1:
        counts = [0] + counts
    return {
        "shape": [int(n) for n in mask.shape],
        "order": "z_major",
        "first_value": 0,
        "counts": [int(c) for c in counts],
    }


def rle_decode(payload: dict) -> np.ndarray:
    shape = tuple(int(n) for n in payload["shape"])
    counts = payload["counts"]
    if payload.get("order", "z_major") != "z_major":
        raise InvalidArgumentError(f"unknown RLE order {payload.get('order')!r}")
    if payload.get("first_value", 0) != 0:
        raise InvalidArgumentError("RLE runs must start from value 0")
    total = int(np.prod(shape))
    if sum(counts) != total:
        raise InvalidArgumentError(
            f"RLE counts sum to {sum(counts)}, expected {total}"
        )
    flat = np.empty(total, dtype=np.uint8)
    pos = 0
    value = 0
    for c in counts:
        flat[pos : pos + c] = value
        pos += c
        value ^= 1
    return flat.reshape(shape, order="F")
