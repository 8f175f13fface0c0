"""Choosing the contiguous slice window fed to a classifier.

Two strategies: the baseline centres the window on the slice with the
largest supra-threshold cross-section; the enhanced one centres it on the
slice with the largest tumor area.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyMask, EmptyVolume, ShapeMismatch, WindowTooLarge
from .volume import Mask3D, Volume3D

__all__ = [
    "central_image_index",
    "tumor_center_index",
    "select_window",
    "Selection",
    "enhanced_selection",
    "baseline_selection",
    "write_manifest",
    "read_manifest",
]


def central_image_index(vol: Volume3D, threshold: float = 0.0) -> int:
    """Slice with the most voxels above ``threshold``; ties go to the smallest index."""
    counts = np.count_nonzero(vol.data > threshold, axis=(1, 2))
    if counts.max() == 0:
        raise EmptyVolume(f"no voxel above {threshold}")
    return int(np.argmax(counts))


def tumor_center_index(mask: Mask3D) -> int:
    """Slice with the largest mask area; ties go to the smallest index."""
    areas = np.count_nonzero(mask.data, axis=(1, 2))
    if areas.max() == 0:
        raise EmptyMask("mask has no voxels")
    return int(np.argmax(areas))


def select_window(center: int, n: int = 64, total: int = 128) -> range:
    """``n`` contiguous indices around ``center``, shifted to stay inside ``[0, total)``."""
    if total < n:
        raise WindowTooLarge(f"window of {n} does not fit {total} slices")
    start = min(max(center - n // 2, 0), total - n)
    return range(start, start + n)


@dataclass(frozen=True)
class Selection:
    volume: Volume3D
    center: int
    window: range


def _cut(vol: Volume3D, center: int, n: int) -> Selection:
    win = select_window(center, n, vol.n_slices)
    sub = vol.with_data(vol.data[win.start:win.stop])
    return Selection(sub, center, win)


def enhanced_selection(vol: Volume3D, mask: Mask3D, n: int = 64) -> Selection:
    """Window of ``n`` slices centred on the largest tumor cross-section."""
    if vol.shape != mask.shape:
        raise ShapeMismatch(f"volume {vol.shape} vs mask {mask.shape}")
    return _cut(vol, tumor_center_index(mask), n)


def baseline_selection(vol: Volume3D, n: int = 64, threshold: float = 0.0) -> Selection:
    """Window of ``n`` slices centred on the largest brain cross-section."""
    return _cut(vol, central_image_index(vol, threshold), n)


def write_manifest(path, rows: Sequence[tuple[str, int, range]]) -> None:
    """Tab-separated ``subject center start stop`` lines with a header."""
    lines = ["subject\tcenter\tstart\tstop"]
    lines += [f"{s}\t{c}\t{w.start}\t{w.stop}" for s, c, w in rows]
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_manifest(path) -> list[tuple[str, int, range]]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.split("\t") for ln in fh.read().splitlines()[1:] if ln]
    return [(s, int(c), range(int(a), int(b))) for s, c, a, b in lines]
