"""Mask-based radiomic features and segmentation overlap metrics.

Feature families: location (centroid), shape (volume, exposed-face surface
area, sphericity), first-order statistics, GLCM texture and GLRLM texture.
Texture features use intensities quantised to ``levels`` equal-width bins
over the masked range, so they do not change under positive affine
rescaling of the volume. First-order features use raw intensities.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (DegenerateRegion, EmptyMask, InvalidVolume, LengthMismatch,
                     MissingModality, ShapeMismatch)
from .volume import MODALITIES, Mask3D, Volume3D

__all__ = [
    "DIRECTIONS",
    "LOCATION_SHAPE_NAMES",
    "MODALITY_FEATURES",
    "FEATURE_NAMES",
    "FeatureVector",
    "GLCMatrix",
    "GLRLMatrix",
    "centroid",
    "shape_features",
    "first_order",
    "quantize",
    "glcm",
    "glcm_features",
    "glrlm",
    "glrlm_features",
    "extract_all",
    "iou",
    "dice",
    "write_feature_table",
    "read_feature_table",
]

# one representative of each +/- pair in the 26-neighbourhood
DIRECTIONS: tuple[tuple[int, int, int], ...] = (
    (0, 0, 1), (0, 1, 0), (1, 0, 0),
    (0, 1, 1), (0, 1, -1), (1, 0, 1), (1, 0, -1), (1, 1, 0), (1, -1, 0),
    (1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1),
)

LOCATION_SHAPE_NAMES = ("Xc", "Yc", "Zc", "Volume", "SurfaceArea", "Sphericity")
MODALITY_FEATURES = (
    "Energy", "TotalEnergy", "Entropy", "Mean", "Variance",
    "GLCM-Contrast", "GLCM-Correlation", "GLCM-ASM", "GLCM-IDM",
    "GLRLM-SRE", "GLRLM-LRE",
)
FEATURE_NAMES = LOCATION_SHAPE_NAMES + tuple(
    f"{m}_{f}" for m in MODALITIES for f in MODALITY_FEATURES
)


@dataclass(frozen=True)
class FeatureVector:
    """The 39 named features in registry order."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != len(FEATURE_NAMES):
            raise LengthMismatch(f"expected {len(FEATURE_NAMES)} features, got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise InvalidVolume("feature vector contains non-finite values")
        object.__setattr__(self, "values", vals)

    @property
    def names(self) -> tuple[str, ...]:
        return FEATURE_NAMES

    def __getitem__(self, name: str) -> float:
        return self.values[FEATURE_NAMES.index(name)]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.values))

    def to_array(self) -> np.ndarray:
        return np.array(self.values)


@dataclass(frozen=True)
class GLCMatrix:
    counts: np.ndarray  # levels x levels, symmetric

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def normalized(self) -> np.ndarray:
        return self.counts / self.total


@dataclass(frozen=True)
class GLRLMatrix:
    counts: np.ndarray  # levels x max_run; column j holds runs of length j + 1

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def normalized(self) -> np.ndarray:
        return self.counts / self.total


def _mask_array(mask) -> np.ndarray:
    arr = mask.data if isinstance(mask, Mask3D) else np.asarray(mask, dtype=bool)
    if not arr.any():
        raise EmptyMask("mask has no voxels")
    return arr


def _paired(vol, mask) -> tuple[np.ndarray, np.ndarray]:
    m = _mask_array(mask)
    data = vol.data if isinstance(vol, Volume3D) else np.asarray(vol)
    if data.shape != m.shape:
        raise ShapeMismatch(f"volume {data.shape} vs mask {m.shape}")
    return data.astype(np.float64), m


# -- location and shape ------------------------------------------------------

def centroid(mask) -> tuple[float, float, float]:
    """Mean voxel index of the mask along axes 0, 1, 2 (reported as Xc, Yc, Zc)."""
    idx = np.argwhere(_mask_array(mask))
    return tuple(float(v) for v in idx.mean(axis=0))


def shape_features(mask, spacing=None) -> tuple[float, float, float]:
    """Voxel-count volume, exposed-face surface area and sphericity."""
    m = _mask_array(mask)
    if spacing is None:
        spacing = mask.spacing if isinstance(mask, Mask3D) else (1.0, 1.0, 1.0)
    s = tuple(float(v) for v in spacing)
    volume = float(m.sum()) * s[0] * s[1] * s[2]
    padded = np.pad(m, 1)
    area = 0.0
    for axis in range(3):
        faces = np.count_nonzero(np.diff(padded.astype(np.int8), axis=axis))
        others = [s[a] for a in range(3) if a != axis]
        area += faces * others[0] * others[1]
    sphericity = math.pi ** (1 / 3) * (6 * volume) ** (2 / 3) / area
    return volume, area, sphericity


# -- first order -------------------------------------------------------------

def first_order(vol, mask, voxel_volume: float | None = None, bins: int = 64):
    """Energy, total energy, entropy (bits, ``bins``-bin histogram), mean, population variance."""
    data, m = _paired(vol, mask)
    x = data[m]
    if voxel_volume is None:
        voxel_volume = vol.voxel_volume if isinstance(vol, Volume3D) else 1.0
    energy = float(np.sum(x * x))
    lo, hi = float(x.min()), float(x.max())
    if hi > lo:
        hist, _ = np.histogram(x, bins=bins, range=(lo, hi))
        p = hist[hist > 0] / x.size
        entropy = float(-np.sum(p * np.log2(p)))
    else:
        entropy = 0.0
    return energy, voxel_volume * energy, entropy, float(x.mean()), float(x.var())


# -- texture -----------------------------------------------------------------

def quantize(values: np.ndarray, lo: float, hi: float, levels: int) -> np.ndarray:
    """Equal-width binning of ``[lo, hi]`` into ``levels`` integer levels."""
    if hi <= lo:
        return np.zeros(np.shape(values), dtype=np.int64)
    q = np.floor((np.asarray(values, dtype=np.float64) - lo) / (hi - lo) * levels)
    return np.clip(q, 0, levels - 1).astype(np.int64)


def _crop_quantized(vol, mask, levels):
    data, m = _paired(vol, mask)
    x = data[m]
    q = quantize(data, float(x.min()), float(x.max()), levels)
    idx = np.argwhere(m)
    lo, hi = idx.min(axis=0), idx.max(axis=0) + 1
    box = tuple(slice(a, b) for a, b in zip(lo, hi))
    # pad by one so every shifted view stays in bounds
    return np.pad(q[box], 1), np.pad(m[box], 1)


def _shifted(arr, d):
    """View of ``arr`` aligned so element ``v`` maps to ``v + d`` in the core grid."""
    sl = []
    for step, n in zip(d, arr.shape):
        sl.append(slice(1 + step, n - 1 + step))
    return arr[tuple(sl)]


def _core(arr):
    return arr[1:-1, 1:-1, 1:-1]


def glcm(vol, mask, levels: int = 32, offsets: Sequence = DIRECTIONS) -> GLCMatrix:
    """Symmetric co-occurrence counts over all in-mask voxel pairs at ``offsets``."""
    q, m = _crop_quantized(vol, mask, levels)
    counts = np.zeros((levels, levels), dtype=np.float64)
    qa, ma = _core(q), _core(m)
    for d in offsets:
        qb, mb = _shifted(q, d), _shifted(m, d)
        both = ma & mb
        i, j = qa[both], qb[both]
        np.add.at(counts, (i, j), 1.0)
        np.add.at(counts, (j, i), 1.0)
    if counts.sum() == 0:
        raise DegenerateRegion("no in-mask voxel pairs for the requested offsets")
    return GLCMatrix(counts)


def glcm_features(m: GLCMatrix) -> tuple[float, float, float, float]:
    """Contrast, correlation, angular second moment, inverse difference moment."""
    p = m.normalized()
    n = p.shape[0]
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    diff2 = (i - j) ** 2
    contrast = float(np.sum(p * diff2))
    asm = float(np.sum(p * p))
    idm = float(np.sum(p / (1.0 + diff2)))
    pi, pj = p.sum(axis=1), p.sum(axis=0)
    lv = np.arange(n)
    mu_i, mu_j = float(lv @ pi), float(lv @ pj)
    var_i = float(((lv - mu_i) ** 2) @ pi)
    var_j = float(((lv - mu_j) ** 2) @ pj)
    if var_i <= 1e-15 or var_j <= 1e-15:
        corr = 1.0
    else:
        corr = float(np.sum(p * (i - mu_i) * (j - mu_j)) / math.sqrt(var_i * var_j))
    return contrast, corr, asm, idm


def glrlm(vol, mask, levels: int = 32, directions: Sequence = DIRECTIONS) -> GLRLMatrix:
    """Maximal equal-level runs of in-mask voxels, pooled over ``directions``."""
    q, m = _crop_quantized(vol, mask, levels)
    runs: list[tuple[np.ndarray, np.ndarray]] = []
    longest = 1
    for d in directions:
        d = tuple(d)
        back = tuple(-v for v in d)
        qa, ma = _core(q), _core(m)
        prev_same = _shifted(m, back) & (_shifted(q, back) == qa)
        start = ma & ~prev_same
        coords = np.argwhere(start) + 1  # into the padded grid
        level = q[tuple(coords.T)]
        length = np.ones(len(coords), dtype=np.int64)
        alive = np.ones(len(coords), dtype=bool)
        pos = coords.copy()
        step = np.array(d)
        while alive.any():
            pos = pos + step
            k = np.flatnonzero(alive)
            p = tuple(pos[k].T)
            cont = m[p] & (q[p] == level[k])
            length[k[cont]] += 1
            alive[k[~cont]] = False
        runs.append((level, length))
        if len(length):
            longest = max(longest, int(length.max()))
    counts = np.zeros((levels, longest), dtype=np.float64)
    for level, length in runs:
        np.add.at(counts, (level, length - 1), 1.0)
    if counts.sum() == 0:
        raise DegenerateRegion("mask contains no runs")
    return GLRLMatrix(counts)


def glrlm_features(m: GLRLMatrix) -> tuple[float, float]:
    """Short-run and long-run emphasis, normalised by the number of runs."""
    p = m.normalized()
    j = np.arange(1, p.shape[1] + 1, dtype=np.float64)
    sre = float(np.sum(p / (j * j)))
    lre = float(np.sum(p * (j * j)))
    return sre, lre


# -- assembly ----------------------------------------------------------------

def _modality_block(vol: Volume3D, mask, levels: int) -> list[float]:
    block = list(first_order(vol, mask))
    block += glcm_features(glcm(vol, mask, levels))
    block += glrlm_features(glrlm(vol, mask, levels))
    return block


def extract_all(volumes: Mapping[str, Volume3D], mask: Mask3D, levels: int = 32) -> FeatureVector:
    """All 39 features for one subject, in :data:`FEATURE_NAMES` order."""
    missing = [m for m in MODALITIES if m not in volumes]
    if missing:
        raise MissingModality(f"missing modalities: {', '.join(missing)}")
    for m in MODALITIES:
        mask.check_pairs(volumes[m])
    values = list(centroid(mask)) + list(shape_features(mask))
    for m in MODALITIES:
        values += _modality_block(volumes[m], mask, levels)
    return FeatureVector(tuple(values))


# -- overlap metrics ---------------------------------------------------------

def _pair(a, b):
    a = a.data if isinstance(a, Mask3D) else np.asarray(a, dtype=bool)
    b = b.data if isinstance(b, Mask3D) else np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    return a, b


def iou(a, b) -> float:
    a, b = _pair(a, b)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def dice(a, b) -> float:
    a, b = _pair(a, b)
    total = np.count_nonzero(a) + np.count_nonzero(b)
    if total == 0:
        return 1.0
    return 2.0 * np.count_nonzero(a & b) / total


# -- feature table -----------------------------------------------------------

def write_feature_table(path, rows: Sequence[tuple[str, int, FeatureVector]]) -> None:
    """Tab-separated table: ``subject``, ``label``, then the 39 features (round-trip exact)."""
    lines = ["\t".join(("subject", "label") + FEATURE_NAMES)]
    for subject, label, fv in rows:
        lines.append("\t".join([str(subject), str(int(label))] + [repr(v) for v in fv.values]))
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_feature_table(path):
    """Returns ``(subjects, labels, X, names)``."""
    with open(path, encoding="utf-8") as fh:
        header, *body = [ln.rstrip("\n") for ln in fh if ln.strip()]
    cols = header.split("\t")
    if cols[:2] != ["subject", "label"]:
        raise InvalidVolume("feature table must start with subject and label columns")
    subjects, labels, rows = [], [], []
    for ln in body:
        parts = ln.split("\t")
        if len(parts) != len(cols):
            raise LengthMismatch(f"row has {len(parts)} fields, header has {len(cols)}")
        subjects.append(parts[0])
        labels.append(int(parts[1]))
        rows.append([float(v) for v in parts[2:]])
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(cols) - 2)
    return subjects, np.array(labels, dtype=np.int64), X, tuple(cols[2:])
