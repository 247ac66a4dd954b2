"""Self-describing binary dumps of matrix-valued grid fields ("VTXG" files).

Layout, all little-endian::

    b"VTXG"  u16 version  u16 ndim  u32 shape[ndim]
    u8 p  u8 q            (bidegree tag of the form)
    u16 rows  u16 cols    (rank pair of the matrix values)
    float64 data          (interleaved re/im, row-major over shape)

``shape`` is the full array shape, so a field of r x s matrices on an N x N
grid has shape (N, N, r, s) and rank pair (r, s).  Scalar fields use (1, 1).
"""
from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"VTXG"
VERSION = 1
_HEAD = struct.Struct("<4sHH")
_TAIL = struct.Struct("<BBHH")


@dataclass(frozen=True)
class GridDump:
    data: np.ndarray
    bidegree: tuple[int, int] = (0, 0)
    ranks: tuple[int, int] = (1, 1)


def atomic_write(path: str | Path, payload: bytes) -> None:
    """Write via a temporary file in the same directory and rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def encode(data, bidegree=(0, 0), ranks=None) -> bytes:
    a = np.asarray(data, dtype=np.complex128)
    if ranks is None:
        ranks = tuple(a.shape[2:4]) if a.ndim == 4 else (1, 1)
    p, q = bidegree
    if p not in (0, 1) or q not in (0, 1):
        raise FormatError(f"bidegree tag must have entries in {{0, 1}}, got {bidegree}")
    head = _HEAD.pack(MAGIC, VERSION, a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    body = np.ascontiguousarray(a).astype("<c16", copy=False).tobytes(order="C")
    return head + _TAIL.pack(p, q, *ranks) + body


def decode(buf: bytes) -> GridDump:
    if len(buf) < _HEAD.size or buf[:4] != MAGIC:
        raise FormatError("not a VTXG grid dump (bad magic)")
    _, version, ndim = _HEAD.unpack_from(buf)
    if version != VERSION:
        raise FormatError(f"unsupported VTXG version {version}")
    off = _HEAD.size
    shape = struct.unpack_from(f"<{ndim}I", buf, off)
    off += 4 * ndim
    p, q, r, s = _TAIL.unpack_from(buf, off)
    off += _TAIL.size
    count = int(np.prod(shape)) if ndim else 1
    if len(buf) - off != 16 * count:
        raise FormatError(f"payload holds {len(buf) - off} bytes, expected {16 * count}")
    data = np.frombuffer(buf, dtype="<c16", count=count, offset=off).reshape(shape)
    return GridDump(data.astype(np.complex128), (p, q), (r, s))


def save_grid(path, data, bidegree=(0, 0), ranks=None) -> None:
    atomic_write(path, encode(data, bidegree, ranks))


def load_grid(path) -> GridDump:
    return decode(Path(path).read_bytes())
