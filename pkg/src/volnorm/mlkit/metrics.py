"""Binary classification metrics and AUROC."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import LengthMismatch, OneClassOnly

__all__ = ["METRIC_NAMES", "Confusion", "confusion", "binary_metrics", "auroc", "average_ranks"]

METRIC_NAMES = ("Accuracy", "Sensitivity", "Specificity", "PPV", "NPV", "AUROC")


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(y_true, y_pred) -> Confusion:
    t = np.asarray(y_true).astype(bool)
    p = np.asarray(y_pred).astype(bool)
    if t.shape != p.shape:
        raise LengthMismatch(f"{t.shape} vs {p.shape}")
    return Confusion(int(np.sum(t & p)), int(np.sum(~t & p)), int(np.sum(t & ~p)), int(np.sum(~t & ~p)))


def _ratio(num: int, den: int) -> float:
    return num / den if den else math.nan


def binary_metrics(tp, fp=None, fn=None, tn=None) -> dict[str, float]:
    """Accuracy, sensitivity, specificity, PPV and NPV.

    Accepts a :class:`Confusion` or four counts. A zero denominator yields
    ``nan``, which marks the metric undefined; averaging helpers skip it.
    """
    if isinstance(tp, Confusion):
        tp, fp, fn, tn = tp.tp, tp.fp, tp.fn, tp.tn
    return {
        "Accuracy": _ratio(tp + tn, tp + fp + fn + tn),
        "Sensitivity": _ratio(tp, tp + fn),
        "Specificity": _ratio(tn, tn + fp),
        "PPV": _ratio(tp, tp + fp),
        "NPV": _ratio(tn, tn + fn),
    }


def average_ranks(values) -> np.ndarray:
    """1-based ranks with ties sharing their mean rank."""
    _, inv, counts = np.unique(np.asarray(values), return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    return (upper - (counts - 1) / 2.0)[inv.reshape(-1)]


def auroc(scores, labels) -> float:
    """P(random positive scores above random negative), ties counting one half."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).astype(bool).reshape(-1)
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.shape} scores vs {y.shape} labels")
    n1 = int(y.sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise OneClassOnly("AUROC needs both classes")
    r1 = float(average_ranks(s)[y].sum())
    return (r1 - n1 * (n1 + 1) / 2.0) / (n1 * n0)
