"""3D volume containers and the geometric operations every other module relies on.

Axis convention
---------------
A volume's ``data`` is indexed ``(s, r, c)``: ``s`` is the slice axis of the
current orientation, ``r`` and ``c`` are the in-plane row and column axes.
Spacing is stored in the same order, in millimetres.

Reorientation is a pure axis permutation. Every conversion passes through
the coronal frame, and the two primitive swaps are involutions::

    Axial    <-> Coronal   swap axes (0, 1)
    Sagittal <-> Coronal   swap axes (0, 2)
    Axial    <-> Sagittal  Axial -> Coronal -> Sagittal (and reverse)
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConstantVolume,
    EmptyVolume,
    InsufficientSlices,
    InvalidVolume,
    ShapeMismatch,
)

__all__ = [
    "Orientation",
    "Volume3D",
    "Mask3D",
    "reorient",
    "crop_to_bounding_box",
    "uniform_select",
    "scale_to_u8",
    "resize_nearest",
    "MODALITIES",
]

MODALITIES = ("FLAIR", "T1wCE", "T2w")
_LABELS = MODALITIES + ("synthetic", "mask")


class Orientation(enum.Enum):
    AXIAL = "Axial"
    SAGITTAL = "Sagittal"
    CORONAL = "Coronal"

    @classmethod
    def parse(cls, value: "Orientation | str") -> "Orientation":
        if isinstance(value, cls):
            return value
        for member in cls:
            if member.value.lower() == str(value).lower():
                return member
        raise ValueError(f"unknown orientation {value!r}")


# swap applied to go from the orientation to Coronal (and back)
_TO_CORONAL_SWAP = {
    Orientation.CORONAL: None,
    Orientation.AXIAL: (0, 1),
    Orientation.SAGITTAL: (0, 2),
}


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.flags.writeable = False
    return arr


def _check_spacing(spacing) -> tuple[float, float, float]:
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
        raise InvalidVolume(f"spacing must be three positive reals, got {spacing}")
    return spacing


@dataclass(frozen=True, eq=False)
class Volume3D:
    """A 3D float32 scalar grid with spacing, orientation and modality label.

    Construction copies the input into a read-only array, so instances can be
    shared between workers without defensive copies.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    orientation: Orientation = Orientation.CORONAL
    modality: str = "synthetic"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3 or min(data.shape) < 1:
            raise InvalidVolume(f"expected a non-empty 3D grid, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise InvalidVolume("volume contains NaN or Inf")
        if (data < 0).any():
            raise InvalidVolume("volume intensities must be >= 0")
        if self.modality not in _LABELS:
            raise InvalidVolume(f"unknown modality label {self.modality!r}")
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))
        object.__setattr__(self, "orientation", Orientation.parse(self.orientation))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def n_slices(self) -> int:
        return self.data.shape[0]

    @property
    def voxel_volume(self) -> float:
        return float(np.prod(self.spacing))

    def with_data(self, data, spacing=None, orientation=None) -> "Volume3D":
        return Volume3D(
            data,
            self.spacing if spacing is None else spacing,
            self.orientation if orientation is None else orientation,
            self.modality,
        )

    def __eq__(self, other):
        if not isinstance(other, Volume3D):
            return NotImplemented
        return (
            self.orientation == other.orientation
            and self.spacing == other.spacing
            and self.modality == other.modality
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class Mask3D:
    """Binary 3D grid; stored as a read-only boolean array."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    orientation: Orientation = field(default=Orientation.CORONAL)

    def __post_init__(self):
        raw = np.asarray(self.data)
        if raw.ndim != 3 or min(raw.shape) < 1:
            raise InvalidVolume(f"expected a non-empty 3D grid, got shape {raw.shape}")
        if raw.dtype != bool:
            if not np.isin(raw, (0, 1)).all():
                raise InvalidVolume("mask values must be 0 or 1")
            raw = raw.astype(bool)
        object.__setattr__(self, "data", _freeze(raw))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))
        object.__setattr__(self, "orientation", Orientation.parse(self.orientation))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def count(self) -> int:
        return int(self.data.sum())

    def check_pairs(self, vol: Volume3D) -> None:
        if vol.shape != self.shape:
            raise ShapeMismatch(f"mask shape {self.shape} != volume shape {vol.shape}")

    def __eq__(self, other):
        if not isinstance(other, Mask3D):
            return NotImplemented
        return (
            self.orientation == other.orientation
            and self.spacing == other.spacing
            and np.array_equal(self.data, other.data)
        )


def _swap(data: np.ndarray, spacing, axes):
    if axes is None:
        return data, tuple(spacing)
    a, b = axes
    sp = list(spacing)
    sp[a], sp[b] = sp[b], sp[a]
    return np.swapaxes(data, a, b), tuple(sp)


def reorient(vol, target):
    """Permute axes so the slice axis matches ``target``.

    Works on both :class:`Volume3D` and :class:`Mask3D`. No resampling is
    done; spacing travels with its axis.
    """
    target = Orientation.parse(target)
    if vol.orientation == target:
        return vol
    data, spacing = _swap(vol.data, vol.spacing, _TO_CORONAL_SWAP[vol.orientation])
    data, spacing = _swap(data, spacing, _TO_CORONAL_SWAP[target])
    if isinstance(vol, Mask3D):
        return Mask3D(data, spacing, target)
    return Volume3D(data, spacing, target, vol.modality)


def crop_to_bounding_box(vol: Volume3D, threshold: float = 0.0):
    """Crop to the smallest box holding every voxel above ``threshold``.

    Returns
    -------
    (Volume3D, tuple[int, int, int])
        The cropped volume and the offset of its origin in ``vol``.
    """
    above = vol.data > threshold
    if not above.any():
        raise EmptyVolume(f"no voxel exceeds threshold {threshold}")
    lo, hi = [], []
    for axis in range(3):
        other = tuple(a for a in range(3) if a != axis)
        idx = np.flatnonzero(above.any(axis=other))
        lo.append(int(idx[0]))
        hi.append(int(idx[-1]) + 1)
    sub = vol.data[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    return vol.with_data(sub), tuple(lo)


def uniform_select(n: int, target: int) -> list[int]:
    """Indices ``round(i * (n - 1) / (target - 1))`` with halves rounded up.

    Integer arithmetic only, so the endpoints ``0`` and ``n - 1`` are exact.
    """
    if target < 2:
        raise ValueError("target must be >= 2")
    if n < target:
        raise InsufficientSlices(f"cannot select {target} of {n} slices")
    den = target - 1
    return [(2 * i * (n - 1) + den) // (2 * den) for i in range(target)]


def scale_to_u8(vol: Volume3D) -> Volume3D:
    """Linearly map the value range of ``vol`` onto [0, 255] (float32 output)."""
    lo = float(vol.data.min())
    hi = float(vol.data.max())
    if hi == lo:
        raise ConstantVolume("cannot rescale a constant volume")
    factor = 255.0 / (hi - lo)
    scaled = (vol.data.astype(np.float64) - lo) * factor
    return vol.with_data(np.clip(scaled, 0.0, 255.0))


def resize_nearest(image: np.ndarray, shape) -> np.ndarray:
    """Nearest-neighbour resize of the trailing two axes of ``image``."""
    h, w = image.shape[-2:]
    th, tw = shape
    if (h, w) == (th, tw):
        return image
    rows = np.minimum((np.arange(th) + 0.5) * h / th, h - 1).astype(int)
    cols = np.minimum((np.arange(tw) + 0.5) * w / tw, w - 1).astype(int)
    return image[..., rows[:, None], cols[None, :]]
