"""Binary tensor container with a fixed little-endian layout.

Layout: magic bytes ``STMPTNSR``, version (u32), rank (u32), one u64 per
dimension, then the row-major float64 payload.  Round trips are bitwise
exact; payloads containing NaN are rejected at read time.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"STMPTNSR"
VERSION = 1


class TensorFileError(ValueError):
    """Malformed tensor file."""


def write_tensor(path, array) -> None:
    array = np.ascontiguousarray(array, dtype="<f8")
    header = MAGIC + struct.pack("<II", VERSION, array.ndim)
    header += struct.pack(f"<{array.ndim}Q", *array.shape)
    Path(path).write_bytes(header + array.tobytes())


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise TensorFileError(f"{path}: missing {MAGIC!r} magic bytes")
    offset = len(MAGIC)
    version, rank = struct.unpack_from("<II", raw, offset)
    offset += 8
    if version != VERSION:
        raise TensorFileError(f"{path}: unsupported version {version}")
    if len(raw) < offset + 8 * rank:
        raise TensorFileError(f"{path}: truncated dimension header")
    dims = struct.unpack_from(f"<{rank}Q", raw, offset)
    offset += 8 * rank
    count = int(np.prod(dims, dtype=np.uint64)) if rank else 1
    expected = 8 * count
    payload = raw[offset:]
    if len(payload) != expected:
        raise TensorFileError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    data = np.frombuffer(payload, dtype="<f8").reshape(dims)
    if np.isnan(data).any():
        raise TensorFileError(f"{path}: payload contains NaN")
    return data.copy()
