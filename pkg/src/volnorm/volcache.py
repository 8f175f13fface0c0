"""VOLCACHE array container for normalised volumes.

Layout (little-endian)::

    b"VOLCACHE"          8 bytes
    version              uint8 (currently 1)
    rank                 uint8
    dims[rank]           uint32 each
    payload              float32, C order

The payload is bit-exact: reading back a written array returns identical
float32 values.
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .errors import MalformedHeader, TruncatedData, UnsupportedDatatype

__all__ = ["MAGIC", "VERSION", "encode_array", "decode_array", "save_array", "load_array"]

MAGIC = b"VOLCACHE"
VERSION = 1


def encode_array(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype != np.float32:
        arr = arr.astype(np.float32)
    if arr.ndim > 255:
        raise UnsupportedDatatype("rank above 255")
    head = MAGIC + struct.pack("<BB", VERSION, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_array(blob: bytes) -> np.ndarray:
    if len(blob) < 10 or blob[:8] != MAGIC:
        raise MalformedHeader("not a VOLCACHE file")
    version, rank = struct.unpack_from("<BB", blob, 8)
    if version != VERSION:
        raise MalformedHeader(f"unsupported VOLCACHE version {version}")
    pos = 10 + 4 * rank
    if len(blob) < pos:
        raise TruncatedData("VOLCACHE header truncated")
    dims = struct.unpack_from(f"<{rank}I", blob, 10)
    count = int(np.prod(dims)) if rank else 1
    if len(blob) != pos + 4 * count:
        raise TruncatedData(f"expected {4 * count} payload bytes, found {len(blob) - pos}")
    return np.frombuffer(blob, dtype="<f4", offset=pos, count=count).reshape(dims).astype(np.float32)


def save_array(arr: np.ndarray, path) -> None:
    """Write atomically (temp file then rename)."""
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(encode_array(arr))
    os.replace(tmp, path)


def load_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_array(fh.read())
