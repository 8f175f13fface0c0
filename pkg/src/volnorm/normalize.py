"""Slice-count normalisation: copy and generator imputation, 128-slice resampling,
coronal reorientation, and the error comparison used to judge imputers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import LengthMismatch, ModelMissing, ShapeMismatch, TooFewSlices
from .isgen import Generator, IsGenModel
from .mlkit.stats import t_two_sided_p
from .volume import Orientation, Volume3D, reorient, resize_nearest, uniform_select

__all__ = [
    "SliceImputer",
    "copy_impute_round",
    "isgen_impute_round",
    "rounds_needed",
    "normalize_volume",
    "mae_0_255",
    "PairedResult",
    "paired_comparison",
]

Imputer = Callable[[np.ndarray, np.ndarray], np.ndarray]


class SliceImputer:
    """Adapts a trained generator to raw-intensity slices of any in-plane size.

    Slices are mapped to [0, 1] with ``value_range``, resized to the model's
    input size, passed through the generator, then mapped back.
    """

    def __init__(self, generator: Generator | IsGenModel, value_range: tuple[float, float]):
        if isinstance(generator, IsGenModel):
            generator = generator.generator
        self.generator = generator
        self.lo, self.hi = map(float, value_range)

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        size = self.generator.config.image_size
        span = self.hi - self.lo
        if span <= 0:
            return a.copy()

        def prep(x):
            x = np.clip((x.astype(np.float64) - self.lo) / span, 0.0, 1.0)
            return resize_nearest(x, (size, size))

        mid = self.generator.predict(prep(a), prep(b))
        mid = resize_nearest(mid, a.shape)
        return (mid.astype(np.float64) * span + self.lo).astype(np.float32)


def _check_round(slices) -> None:
    if len(slices) < 2:
        raise TooFewSlices(f"need at least 2 slices, got {len(slices)}")


def copy_impute_round(slices: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Insert a copy of the left neighbour into every gap (``2n - 1`` slices)."""
    _check_round(slices)
    out = []
    for left in slices[:-1]:
        out.extend((left, left))
    out.append(slices[-1])
    return out


def _as_imputer(G, slices) -> Imputer:
    if G is None:
        raise ModelMissing("no generator supplied for imputation")
    if isinstance(G, (Generator, IsGenModel)):
        lo = min(float(s.min()) for s in slices)
        hi = max(float(s.max()) for s in slices)
        return SliceImputer(G, (lo, hi))
    return G


def isgen_impute_round(slices: Sequence[np.ndarray], G) -> list[np.ndarray]:
    """Insert ``G(s_i, s_{i+1})`` between every adjacent pair.

    ``G`` may be a :class:`Generator`, an :class:`IsGenModel` or any callable
    ``(a, b) -> middle``. Original slices land at even output positions.
    """
    _check_round(slices)
    imputer = _as_imputer(G, slices)
    out = []
    for a, b in zip(slices[:-1], slices[1:]):
        mid = np.asarray(imputer(a, b), dtype=np.float32)
        if mid.shape != a.shape:
            raise ShapeMismatch(f"imputer returned {mid.shape} for slices of shape {a.shape}")
        out.extend((a, mid))
    out.append(slices[-1])
    return out


def rounds_needed(n: int, target: int = 128) -> int:
    """Number of doubling rounds until ``2**k * (n - 1) + 1 >= target``."""
    if n < 2:
        raise TooFewSlices("need at least 2 slices")
    k = 0
    while (n - 1) * 2 ** k + 1 < target:
        k += 1
    return k


def normalize_volume(vol: Volume3D, G=None, target: int = 128, impute_round=None) -> Volume3D:
    """Bring ``vol`` to a ``target``-cubed coronal volume.

    Imputation rounds run in the native orientation until there are at least
    ``target`` slices; ``target`` of them are then picked uniformly, the
    in-plane axes are nearest-neighbour resized to ``target``, and finally
    the volume is permuted into the coronal frame. Spacing is updated so the
    physical extent of every axis is kept.

    ``impute_round`` overrides the per-round function (defaults to generator
    imputation with ``G``); pass :func:`copy_impute_round` for the baseline.
    """
    n = vol.n_slices
    if n < 2:
        raise TooFewSlices(f"need at least 2 slices, got {n}")
    slices = list(vol.data)
    if len(slices) < target:
        if impute_round is None:
            imputer = _as_imputer(G, slices)

            def impute_round(s):
                return isgen_impute_round(s, imputer)

        while len(slices) < target:
            slices = impute_round(slices)
    count = len(slices)
    chosen = uniform_select(count, target)
    data = np.stack([slices[i] for i in chosen])
    data = resize_nearest(data, (target, target))

    s, r, c = vol.spacing
    _, h, w = vol.shape
    spacing = (
        s * ((n - 1) / (target - 1)),
        r * (h / target),
        c * (w / target),
    )
    out = Volume3D(data, spacing, vol.orientation, vol.modality)
    return reorient(out, Orientation.CORONAL)


def mae_0_255(pred: np.ndarray, truth: np.ndarray, value_range=(0.0, 255.0)) -> float:
    """Mean absolute error after mapping ``value_range`` (the truth volume's range) onto [0, 255]."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeMismatch(f"{pred.shape} vs {truth.shape}")
    lo, hi = map(float, value_range)
    if hi <= lo:
        raise ValueError("value_range must be increasing")
    factor = 255.0 / (hi - lo)
    return float(np.mean(np.abs((pred - lo) * factor - (truth - lo) * factor)))


@dataclass(frozen=True)
class PairedResult:
    mean_a: float
    mean_b: float
    t: float
    p: float
    df: int
    significant: bool
    degenerate: bool = False


def paired_comparison(errors_a, errors_b, alpha: float = 0.05) -> PairedResult:
    """Two-sided paired t-test on per-case differences ``a - b``.

    When every difference is identical the variance is zero: the result is
    flagged ``degenerate`` with ``p = 0`` for a non-zero mean difference and
    ``p = 1`` otherwise.
    """
    a = np.asarray(errors_a, dtype=np.float64)
    b = np.asarray(errors_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"paired samples must be equal-length vectors, got {a.shape}, {b.shape}")
    n = a.size
    if n < 2:
        raise LengthMismatch("need at least 2 pairs")
    d = a - b
    mean_d = float(d.mean())
    sd = float(d.std(ddof=1))
    df = n - 1
    if sd == 0.0 or np.all(d == d[0]):
        if mean_d == 0.0:
            return PairedResult(float(a.mean()), float(b.mean()), 0.0, 1.0, df, False, True)
        t = math.copysign(math.inf, mean_d)
        return PairedResult(float(a.mean()), float(b.mean()), t, 0.0, df, 0.0 < alpha, True)
    t = mean_d / (sd / math.sqrt(n))
    p = t_two_sided_p(t, df)
    return PairedResult(float(a.mean()), float(b.mean()), t, p, df, p < alpha)
