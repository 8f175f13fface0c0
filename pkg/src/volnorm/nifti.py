"""Minimal single-file NIfTI-1 reader/writer (little-endian only).

Supported datatypes are unsigned 8-bit (code 2), signed 16-bit (code 4) and
float32 (code 16). Array axis 0 of a :class:`Volume3D` maps to NIfTI ``i``
(the fastest-varying axis on disk), so ``data[s, r, c]`` sits at file index
``s + r*ni + c*ni*nj``. Orientation and modality are kept in the ``descrip``
field as ``orient=<name>;modality=<label>``; files lacking that tag are read
as Coronal.
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .errors import MalformedHeader, TruncatedData, UnsupportedDatatype
from .volume import Mask3D, Orientation, Volume3D

__all__ = ["read_nifti", "write_nifti", "read_mask", "write_mask", "HEADER_SIZE", "DATA_OFFSET"]

HEADER_SIZE = 348
DATA_OFFSET = 352
MAGIC = b"n+1\x00"

DTYPES = {
    2: np.dtype("<u1"),
    4: np.dtype("<i2"),
    16: np.dtype("<f4"),
}
CODES = {"uint8": 2, "int16": 4, "float32": 16}

# (offset, struct format) of the header fields we read or write
_F = {
    "sizeof_hdr": (0, "<i"),
    "dim": (40, "<8h"),
    "datatype": (70, "<h"),
    "bitpix": (72, "<h"),
    "pixdim": (76, "<8f"),
    "vox_offset": (108, "<f"),
    "scl_slope": (112, "<f"),
    "scl_inter": (116, "<f"),
    "xyzt_units": (123, "<B"),
    "descrip": (148, "80s"),
    "magic": (344, "4s"),
}


def _get(buf: bytes, name: str):
    off, fmt = _F[name]
    vals = struct.unpack_from(fmt, buf, off)
    return vals if len(vals) > 1 else vals[0]


def _put(buf: bytearray, name: str, *vals) -> None:
    off, fmt = _F[name]
    struct.pack_into(fmt, buf, off, *vals)


def _parse_descrip(raw: bytes) -> dict:
    text = raw.split(b"\x00", 1)[0].decode("ascii", errors="replace")
    out = {}
    for part in text.split(";"):
        if "=" in part:
            k, v = part.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def _read_raw(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HEADER_SIZE:
        raise MalformedHeader(f"{path}: file shorter than a NIfTI-1 header")
    if _get(blob, "sizeof_hdr") != HEADER_SIZE:
        raise MalformedHeader(f"{path}: sizeof_hdr is not 348 (big-endian or not NIfTI-1)")
    if _get(blob, "magic") != MAGIC:
        raise MalformedHeader(f"{path}: magic {_get(blob, 'magic')!r} is not single-file NIfTI-1")
    dim = _get(blob, "dim")
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise MalformedHeader(f"{path}: invalid dim[0]={ndim}")
    shape = [int(d) for d in dim[1:ndim + 1]]
    if any(d < 1 for d in shape):
        raise MalformedHeader(f"{path}: non-positive dimension in {shape}")
    if ndim > 3 and any(d != 1 for d in shape[3:]):
        raise MalformedHeader(f"{path}: only 3D volumes are supported, got {shape}")
    shape = (shape + [1, 1, 1])[:3]
    code = _get(blob, "datatype")
    if code not in DTYPES:
        raise UnsupportedDatatype(f"{path}: datatype code {code}")
    dtype = DTYPES[code]
    offset = int(_get(blob, "vox_offset"))
    if offset < HEADER_SIZE:
        raise MalformedHeader(f"{path}: vox_offset {offset} inside header")
    nbytes = int(np.prod(shape)) * dtype.itemsize
    if len(blob) < offset + nbytes:
        raise TruncatedData(f"{path}: expected {nbytes} data bytes at offset {offset}")
    flat = np.frombuffer(blob, dtype=dtype, count=int(np.prod(shape)), offset=offset)
    data = flat.reshape(shape, order="F")
    pixdim = _get(blob, "pixdim")
    spacing = tuple(float(p) if p > 0 else 1.0 for p in pixdim[1:4])
    slope = _get(blob, "scl_slope")
    inter = _get(blob, "scl_inter")
    if slope != 0 and np.isfinite(slope) and (slope != 1 or inter != 0):
        data = data.astype(np.float64) * slope + inter
    meta = _parse_descrip(_get(blob, "descrip"))
    return data, spacing, meta


def read_nifti(path, orientation=None) -> Volume3D:
    """Load a NIfTI-1 file as a :class:`Volume3D`.

    ``scl_slope``/``scl_inter`` are applied when the slope is non-zero.
    An explicit ``orientation`` overrides the one stored in the header.
    """
    data, spacing, meta = _read_raw(path)
    if orientation is None:
        orientation = meta.get("orient", Orientation.CORONAL.value)
    modality = meta.get("modality", "synthetic")
    if modality == "mask":
        modality = "synthetic"
    return Volume3D(np.asarray(data, dtype=np.float32), spacing, orientation, modality)


def read_mask(path) -> Mask3D:
    data, spacing, meta = _read_raw(path)
    orientation = meta.get("orient", Orientation.CORONAL.value)
    return Mask3D(np.asarray(data) != 0, spacing, orientation)


def _encode(data: np.ndarray, datatype: str) -> tuple[int, np.ndarray]:
    if datatype not in CODES:
        raise UnsupportedDatatype(f"cannot write datatype {datatype!r}")
    code = CODES[datatype]
    dtype = DTYPES[code]
    if dtype.kind in "iu":
        info = np.iinfo(dtype)
        if not np.array_equal(data, np.round(data)) or data.min() < info.min or data.max() > info.max:
            raise UnsupportedDatatype(f"values do not fit {datatype} exactly")
    return code, data.astype(dtype)


def _write(path, data, spacing, descrip: str, datatype: str) -> None:
    code, arr = _encode(np.asarray(data), datatype)
    hdr = bytearray(HEADER_SIZE)
    _put(hdr, "sizeof_hdr", HEADER_SIZE)
    _put(hdr, "dim", 3, *arr.shape, 1, 1, 1, 1)
    _put(hdr, "datatype", code)
    _put(hdr, "bitpix", arr.dtype.itemsize * 8)
    _put(hdr, "pixdim", 1.0, *spacing, 0.0, 0.0, 0.0, 0.0)
    _put(hdr, "vox_offset", float(DATA_OFFSET))
    _put(hdr, "scl_slope", 1.0)
    _put(hdr, "scl_inter", 0.0)
    _put(hdr, "xyzt_units", 2)  # millimetres
    _put(hdr, "descrip", descrip.encode("ascii")[:79])
    _put(hdr, "magic", MAGIC)
    payload = arr.tobytes(order="F")
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(bytes(hdr))
        fh.write(b"\x00" * (DATA_OFFSET - HEADER_SIZE))
        fh.write(payload)
    os.replace(tmp, path)


def write_nifti(vol: Volume3D, path, datatype: str = "float32") -> None:
    """Write ``vol`` as single-file NIfTI-1; the data starts at byte 352."""
    descrip = f"orient={vol.orientation.value};modality={vol.modality}"
    _write(path, vol.data, vol.spacing, descrip, datatype)


def write_mask(mask: Mask3D, path) -> None:
    descrip = f"orient={mask.orientation.value};modality=mask"
    _write(path, mask.data.astype(np.uint8), mask.spacing, descrip, "uint8")
