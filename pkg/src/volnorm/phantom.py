"""Analytic Gaussian-mixture phantoms with exact ground truth at any slice position.

Blob geometry lives in normalised coordinates ``u = index / (dim - 1)`` so one
phantom can be rendered at any grid size; rendering the same subject with
fewer slices is how thick-slice acquisitions are simulated. Field values
below ``cutoff`` are set to zero, giving a black background.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig
from .volume import MODALITIES, Mask3D, Orientation, Volume3D

__all__ = ["PhantomConfig", "Blob", "Phantom", "make_phantom", "make_subject", "LABEL_TUMOR_SIGMA"]


@dataclass(frozen=True)
class PhantomConfig:
    shape: tuple[int, int, int] = (32, 64, 64)
    n_blobs: int = 4
    tumor: bool = True
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    orientation: str = "Axial"
    modality: str = "synthetic"
    cutoff: float = 0.2
    tumor_sigma: tuple[float, float] = (0.06, 0.12)

    def validate(self) -> None:
        if len(self.shape) != 3 or min(self.shape) < 8:
            raise InvalidConfig(f"phantom shape must be >= 8 per axis, got {self.shape}")
        if self.n_blobs < 0:
            raise InvalidConfig("n_blobs must be >= 0")
        if self.cutoff < 0:
            raise InvalidConfig("cutoff must be >= 0")
        lo, hi = self.tumor_sigma
        if not 0 < lo <= hi:
            raise InvalidConfig(f"bad tumor_sigma range {self.tumor_sigma}")
        if self.modality not in MODALITIES + ("synthetic",):
            raise InvalidConfig(f"unknown modality {self.modality!r}")


@dataclass(frozen=True)
class Blob:
    amplitude: float
    center: tuple[float, float, float]
    sigma: tuple[float, float, float]
    gains: dict = field(default_factory=dict)

    def gain(self, modality: str) -> float:
        return self.gains.get(modality, 1.0)


def _grid_coord(idx, dim):
    return np.asarray(idx, dtype=np.float64) / (dim - 1)


@dataclass(frozen=True)
class Phantom:
    blobs: tuple[Blob, ...]
    tumor_index: int | None
    cutoff: float

    @classmethod
    def sample(cls, seed, n_blobs: int = 4, tumor: bool = True,
               cutoff: float = 0.2, tumor_sigma=(0.06, 0.12)) -> "Phantom":
        rng = np.random.default_rng(seed)
        blobs = []
        for k in range(n_blobs):
            is_tumor = tumor and k == n_blobs - 1
            if k == 0 and not is_tumor:
                amp = 1.0
                center = 0.5 + rng.uniform(-0.05, 0.05, 3)
                sigma = rng.uniform(0.18, 0.24, 3)
                gains = {m: float(rng.uniform(0.8, 1.2)) for m in MODALITIES}
            elif is_tumor:
                amp = float(rng.uniform(0.6, 1.0))
                center = 0.5 + rng.uniform(-0.18, 0.18, 3)
                sigma = np.full(3, rng.uniform(*tumor_sigma)) * rng.uniform(0.9, 1.1, 3)
                gains = {m: float(rng.uniform(0.5, 1.5)) for m in MODALITIES}
            else:
                amp = float(rng.uniform(0.25, 0.6))
                center = 0.5 + rng.uniform(-0.2, 0.2, 3)
                sigma = rng.uniform(0.05, 0.14, 3)
                gains = {m: float(rng.uniform(0.5, 1.5)) for m in MODALITIES}
            blobs.append(Blob(float(amp), tuple(map(float, center)), tuple(map(float, sigma)), gains))
        tumor_index = n_blobs - 1 if (tumor and n_blobs > 0) else None
        return cls(tuple(blobs), tumor_index, float(cutoff))

    def evaluate(self, z, y, x, shape, modality: str = "synthetic") -> np.ndarray:
        """Closed-form intensity at (broadcastable) voxel coordinates of a ``shape`` grid."""
        u = (_grid_coord(z, shape[0]), _grid_coord(y, shape[1]), _grid_coord(x, shape[2]))
        out = np.zeros(np.broadcast_shapes(*(np.shape(a) for a in u)))
        for b in self.blobs:
            q = sum(((u[a] - b.center[a]) / b.sigma[a]) ** 2 for a in range(3))
            out = out + b.amplitude * b.gain(modality) * np.exp(-0.5 * q)
        return np.where(out >= self.cutoff, out, 0.0)

    def slice_at(self, z: float, shape, modality: str = "synthetic") -> np.ndarray:
        """Analytic cross-section at (possibly fractional) slice position ``z``."""
        y = np.arange(shape[1])[:, None]
        x = np.arange(shape[2])[None, :]
        return self.evaluate(np.float64(z), y, x, shape, modality)

    def render(self, shape, modality: str = "synthetic") -> np.ndarray:
        z, y, x = (np.arange(n) for n in shape)
        return self.evaluate(z[:, None, None], y[None, :, None], x[None, None, :], shape, modality)

    def tumor_mask(self, shape) -> np.ndarray:
        """Voxels where the tumor blob exceeds half its peak."""
        if self.tumor_index is None:
            return np.zeros(shape, dtype=bool)
        b = self.blobs[self.tumor_index]
        z, y, x = (np.arange(n) for n in shape)
        u = (_grid_coord(z, shape[0])[:, None, None],
             _grid_coord(y, shape[1])[None, :, None],
             _grid_coord(x, shape[2])[None, None, :])
        q = sum(((u[a] - b.center[a]) / b.sigma[a]) ** 2 for a in range(3))
        return q < 2.0 * np.log(2.0)

    def tumor_center_voxel(self, shape) -> tuple[float, float, float]:
        b = self.blobs[self.tumor_index]
        return tuple(b.center[a] * (shape[a] - 1) for a in range(3))


def make_phantom(seed, config: PhantomConfig | None = None) -> tuple[Volume3D, Mask3D]:
    """Render a deterministic phantom volume and its tumor mask."""
    config = config or PhantomConfig()
    config.validate()
    ph = Phantom.sample(seed, config.n_blobs, config.tumor, config.cutoff, config.tumor_sigma)
    data = ph.render(config.shape, config.modality)
    vol = Volume3D(data.astype(np.float32), config.spacing, Orientation.parse(config.orientation),
                   config.modality)
    mask = Mask3D(ph.tumor_mask(config.shape), config.spacing, vol.orientation)
    return vol, mask


# tumor size depends on the label: class 1 tumors are drawn larger
LABEL_TUMOR_SIGMA = {0: (0.06, 0.10), 1: (0.08, 0.12)}


def make_subject(seed, label: int, n_slices: int = 33, size: int = 64, orientation: str = "Axial",
                 n_blobs: int = 5, extent_mm: float = 128.0):
    """One labelled subject: the three modalities of one phantom plus its tumor mask.

    The label enters only through the tumor radius range
    (:data:`LABEL_TUMOR_SIGMA`), so the two classes overlap slightly. The
    slice axis spans the same physical extent as the in-plane axes, so fewer
    slices means thicker ones.
    """
    if label not in LABEL_TUMOR_SIGMA:
        raise InvalidConfig("label must be 0 or 1")
    shape = (n_slices, size, size)
    PhantomConfig(shape=shape, n_blobs=n_blobs, orientation=orientation).validate()
    ph = Phantom.sample(seed, n_blobs, True, 0.2, LABEL_TUMOR_SIGMA[label])
    spacing = (extent_mm / n_slices, extent_mm / size, extent_mm / size)
    orient = Orientation.parse(orientation)
    vols = {m: Volume3D(ph.render(shape, m).astype(np.float32), spacing, orient, m) for m in MODALITIES}
    mask = Mask3D(ph.tumor_mask(shape), spacing, orient)
    return vols, mask
