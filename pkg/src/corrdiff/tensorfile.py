"""Raw tensor files: 8-byte magic ``CDTENSOR``, uint32 rank, uint32 dims, float32 payload (all little-endian)."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"CDTENSOR"


def to_bytes(x) -> bytes:
    x = np.asarray(x)
    if x.ndim < 1 or min(x.shape) < 1:
        raise FormatError(f"cannot store tensor of shape {x.shape}")
    head = MAGIC + struct.pack(f"<I{x.ndim}I", x.ndim, *x.shape)
    return head + np.ascontiguousarray(x, dtype="<f4").tobytes()


def from_bytes(data: bytes, name: str = "<bytes>") -> np.ndarray:
    if len(data) == 0:
        raise FormatError(f"{name}: empty file")
    if len(data) < 12 or data[:8] != MAGIC:
        raise FormatError(f"{name}: not a CDTENSOR file")
    (rank,) = struct.unpack("<I", data[8:12])
    if rank < 1 or len(data) < 12 + 4 * rank:
        raise FormatError(f"{name}: bad rank {rank}")
    dims = struct.unpack(f"<{rank}I", data[12:12 + 4 * rank])
    if min(dims) < 1:
        raise FormatError(f"{name}: nonpositive dimension in {dims}")
    payload = data[12 + 4 * rank:]
    if len(payload) != 4 * int(np.prod(dims)):
        raise FormatError(f"{name}: payload holds {len(payload)} bytes, dims {dims} need {4 * int(np.prod(dims))}")
    x = np.frombuffer(payload, dtype="<f4").reshape(dims)
    if not np.all(np.isfinite(x)):
        raise FormatError(f"{name}: tensor contains non-finite values")
    return x.astype(np.float32)


def read_tensor(path) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from None
    return from_bytes(data, str(path))


def write_tensor(path, x) -> None:
    Path(path).write_bytes(to_bytes(x))
