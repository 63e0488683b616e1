"""Binary field snapshots and PGM heatmaps.

Snapshot layout (all little-endian, see docs/FORMATS.md):

    bytes 0..7    magic b"AGG2SNAP"
    bytes 8..15   format version, uint64 (currently 1)
    bytes 16..31  nx, ny node counts, uint64 each
    bytes 32..71  xmin, xmax, ymin, ymax, t as float64
    bytes 72..    ny*nx float64 values, j-major with i contiguous

The PGM heatmap is binary P5 with maxval 255 and the fixed value map
``pixel = rint(clamp(u, 0, ubar) / ubar * 255)`` (ties round to even, so a
field at exactly ubar/2 renders as 128).  Pixel rows run from y = ymax down
to y = ymin so images display with y upward.
"""

from __future__ import annotations

import struct
from typing import NamedTuple

import numpy as np

from .grid import Field, Grid2D

MAGIC = b"AGG2SNAP"
VERSION = 1
_HEADER = struct.Struct("<8sQQQddddd")


class SnapshotError(ValueError):
    """Corrupt or truncated snapshot file."""


class Snapshot(NamedTuple):
    field: Field
    t: float


def write_snapshot(field: Field, t: float, path) -> None:
    g = field.grid
    header = _HEADER.pack(MAGIC, VERSION, g.nx, g.ny,
                          g.xmin, g.xmax, g.ymin, g.ymax, float(t))
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_snapshot(path) -> Snapshot:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise SnapshotError(f"{path}: file shorter than the snapshot header")
    magic, version, nx, ny, xmin, xmax, ymin, ymax, t = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"{path}: unsupported snapshot version {version}")
    expected = _HEADER.size + 8 * nx * ny
    if len(raw) != expected:
        raise SnapshotError(
            f"{path}: payload has {len(raw) - _HEADER.size} bytes, "
            f"expected {8 * nx * ny}"
        )
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(ny, nx)
    grid = Grid2D(nx=int(nx), ny=int(ny), xmin=xmin, xmax=xmax, ymin=ymin, ymax=ymax)
    return Snapshot(field=Field(grid, vals), t=t)


def write_pgm(field: Field, ubar: float, path) -> None:
    """8-bit P5 heatmap with the fixed [0, ubar] -> [0, 255] value map."""
    g = field.grid
    scaled = np.clip(field.values, 0.0, ubar) / ubar * 255.0
    pixels = np.rint(scaled).astype(np.uint8)[::-1, :]  # top row = ymax
    with open(path, "wb") as fh:
        fh.write(f"P5\n{g.nx} {g.ny}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
