"""Minimal single-file NIfTI-1 reader/writer.

Supports the subset this project needs: 3D grids of uint8/int16/int32/
float32/float64, little- or big-endian, optionally gzip-compressed, with
voxel spacing carried on the sform affine diagonal.  Data is stored
x-fastest as the format prescribes, so arrays round-trip bit-exactly.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from . import audit
from .errors import InvalidArgumentError

HEADER_SIZE = 348
VOX_OFFSET = 352.0
MAGIC = b"n+1\x00"

_DTYPE_CODES = {
    np.dtype(np.uint8): (2, 8),
    np.dtype(np.int16): (4, 16),
    np.dtype(np.int32): (8, 32),
    np.dtype(np.float32): (16, 32),
    np.dtype(np.float64): (64, 64),
}
_CODE_DTYPES = {code: dt for dt, (code, _) in _DTYPE_CODES.items()}


def write_nifti(path: str | Path, voxels: np.ndarray, spacing_mm) -> None:
    """Write a 3D array as a single-file NIfTI-1 image.

    The affine is diagonal (sform_code=1) with ``spacing_mm`` on the
    diagonal; ``.gz`` paths are gzip-compressed with mtime=0 so identical
    grids produce identical bytes.
    """
    voxels = np.asarray(voxels)
    if voxels.ndim != 3:
        raise InvalidArgumentError(f"expected a 3D grid, got shape {voxels.shape}")
    if voxels.dtype not in _DTYPE_CODES:
        raise InvalidArgumentError(f"unsupported dtype {voxels.dtype}")
    sx, sy, sz = (float(s) for s in spacing_mm)
    if min(sx, sy, sz) <= 0:
        raise InvalidArgumentError(f"spacing must be positive, got {spacing_mm}")

    code, bitpix = _DTYPE_CODES[voxels.dtype]
    nx, ny, nz = voxels.shape

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<c", hdr, 38, b"r")
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, code, bitpix)
    struct.pack_into("<8f", hdr, 76, 0.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, VOX_OFFSET)
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    struct.pack_into("<b", hdr, 123, 2)  # xyzt_units: mm
    struct.pack_into("<2h", hdr, 252, 0, 1)  # qform_code=0, sform_code=1
    struct.pack_into("<4f", hdr, 280, sx, 0.0, 0.0, 0.0)
    struct.pack_into("<4f", hdr, 296, 0.0, sy, 0.0, 0.0)
    struct.pack_into("<4f", hdr, 312, 0.0, 0.0, sz, 0.0)
    hdr[344:348] = MAGIC

    payload = bytes(hdr) + b"\x00" * 4 + np.asfortranarray(voxels).tobytes(order="F")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".gz":
        with open(path, "wb") as raw:
            with gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0) as f:
                f.write(payload)
    else:
        with open(path, "wb") as f:
            f.write(payload)


def _parse_header(hdr: bytes):
    if len(hdr) < HEADER_SIZE:
        raise InvalidArgumentError("truncated NIfTI header")
    for endian in ("<", ">"):
        if struct.unpack_from(endian + "i", hdr, 0)[0] == HEADER_SIZE:
            break
    else:
        raise InvalidArgumentError("not a NIfTI-1 file (bad sizeof_hdr)")

    dim = struct.unpack_from(endian + "8h", hdr, 40)
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise InvalidArgumentError(f"bad ndim {ndim}")
    shape = tuple(int(d) for d in dim[1 : 1 + ndim])
    if any(d > 1 for d in shape[3:]) or len(shape) < 3:
        raise InvalidArgumentError(f"only 3D images supported, got dims {shape}")
    shape = shape[:3]

    code = struct.unpack_from(endian + "h", hdr, 70)[0]
    if code not in _CODE_DTYPES:
        raise InvalidArgumentError(f"unsupported NIfTI datatype code {code}")
    dtype = _CODE_DTYPES[code].newbyteorder(endian)

    pixdim = struct.unpack_from(endian + "8f", hdr, 76)
    vox_offset = int(struct.unpack_from(endian + "f", hdr, 108)[0])
    scl_slope, scl_inter = struct.unpack_from(endian + "2f", hdr, 112)
    sform_code = struct.unpack_from(endian + "h", hdr, 254)[0]
    if sform_code > 0:
        srow_x = struct.unpack_from(endian + "4f", hdr, 280)
        srow_y = struct.unpack_from(endian + "4f", hdr, 296)
        srow_z = struct.unpack_from(endian + "4f", hdr, 312)
        spacing = (abs(srow_x[0]), abs(srow_y[1]), abs(srow_z[2]))
    else:
        spacing = (abs(pixdim[1]), abs(pixdim[2]), abs(pixdim[3]))
    if min(spacing) == 0:
        spacing = tuple(s if s > 0 else 1.0 for s in spacing)
    return shape, dtype, spacing, vox_offset, (scl_slope, scl_inter)


def read_nifti(path: str | Path) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Read a NIfTI-1 file, returning ``(voxels, spacing_mm)``.

    Spacing comes from the sform affine diagonal when present.  Scale
    slope/intercept are applied only when non-trivial, so files written by
    :func:`write_nifti` round-trip bit-exactly.
    """
    with audit.open_for_read(path) as f:
        blob = f.read()
    shape, dtype, spacing, vox_offset, (slope, inter) = _parse_header(blob)
    n = int(np.prod(shape))
    data = blob[vox_offset : vox_offset + n * dtype.itemsize]
    if len(data) < n * dtype.itemsize:
        raise InvalidArgumentError(f"truncated NIfTI data in {path}")
    voxels = np.frombuffer(data, dtype=dtype).reshape(shape, order="F")
    voxels = np.ascontiguousarray(voxels.astype(dtype.newbyteorder("=")))
    if slope not in (0.0, 1.0) or inter != 0.0:
        voxels = voxels.astype(np.float32) * slope + inter
    return voxels, tuple(float(s) for s in spacing)


def read_nifti_header(path: str | Path) -> dict:
    """Read just the header: shape, spacing and dtype, without the voxels."""
    with audit.open_for_read(path) as f:
        hdr = f.read(HEADER_SIZE)
    shape, dtype, spacing, _, _ = _parse_header(hdr)
    return {"shape": shape, "spacing_mm": spacing, "dtype": str(np.dtype(dtype.newbyteorder("=")))}
