"""VOLNORM1 parameter container.

Layout (all integers little-endian uint32)::

    b"VOLNORM1"
    repeated until EOF:
        name_len, name (utf-8), rank, dims[rank], float32 payload (C order)
"""
from __future__ import annotations

import os
import struct

import numpy as np

from ..errors import MalformedHeader, TruncatedData

__all__ = ["save_params", "load_params", "MAGIC"]

MAGIC = b"VOLNORM1"


def encode_params(arrays: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC]
    for name, arr in arrays.items():
        raw = name.encode("utf-8")
        arr = np.array(arr, dtype="<f4", order="C")  # keeps 0-d arrays 0-d
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_params(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:8] != MAGIC:
        raise MalformedHeader("not a VOLNORM1 checkpoint")
    out: dict[str, np.ndarray] = {}
    pos = 8

    def take(n):
        nonlocal pos
        if pos + n > len(blob):
            raise TruncatedData("checkpoint ends mid-record")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    while pos < len(blob):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(take(4 * count), dtype="<f4").reshape(dims)
        out[name] = arr.astype(np.float32)
    return out


def save_params(arrays: dict[str, np.ndarray], path) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(encode_params(arrays))
    os.replace(tmp, path)


def load_params(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return decode_params(fh.read())
