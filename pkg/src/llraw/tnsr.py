"""TNSR v1 binary tensor format.

Layout, all integers little-endian:

    magic   4 bytes  b"TNSR"
    version u32      1
    dtype   u32      1 = little-endian IEEE-754 binary64
    ndim    u32
    dims    ndim * u64
    payload row-major float64 values

Write/read round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from llraw.errors import FormatError

MAGIC = b"TNSR"
VERSION = 1
DTYPE_F64_LE = 1


def write_tnsr(path, tensor) -> None:
    arr = np.ascontiguousarray(tensor, dtype="<f8")
    header = MAGIC + struct.pack("<III", VERSION, DTYPE_F64_LE, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes())


def read_tnsr(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated TNSR header")
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    version, dtype, ndim = struct.unpack_from("<III", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported TNSR version {version}")
    if dtype != DTYPE_F64_LE:
        raise FormatError(f"{path}: unsupported dtype code {dtype}")
    offset = 16
    if len(raw) < offset + 8 * ndim:
        raise FormatError(f"{path}: truncated dims block")
    dims = struct.unpack_from(f"<{ndim}Q", raw, offset)
    offset += 8 * ndim
    count = int(np.prod(dims, dtype=np.uint64)) if ndim else 1
    expected = offset + 8 * count
    if len(raw) != expected:
        raise FormatError(
            f"{path}: payload is {len(raw) - offset} bytes, dims {dims} require {8 * count}"
        )
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
    return data.reshape(dims).astype(np.float64)
