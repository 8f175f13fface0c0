"""Two-factor ANOVA with replication."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import UnbalancedDesign
from .stats import f_ppf, f_sf

__all__ = ["AnovaRow", "AnovaTable", "anova_two_way"]


@dataclass(frozen=True)
class AnovaRow:
    source: str
    ss: float
    df: int
    ms: float
    f: float = math.nan
    p: float = math.nan
    f_crit: float = math.nan


@dataclass(frozen=True)
class AnovaTable:
    rows: tuple[AnovaRow, ...]
    alpha: float
    zero_within_variance: bool

    def __getitem__(self, source: str) -> AnovaRow:
        for r in self.rows:
            if r.source == source:
                return r
        raise KeyError(source)

    def to_text(self) -> str:
        lines = ["source\tSS\tdf\tMS\tF\tp\tF_crit"]
        for r in self.rows:
            vals = [r.ss, r.df, r.ms, r.f, r.p, r.f_crit]
            lines.append("\t".join([r.source] + ["NA" if isinstance(v, float) and math.isnan(v)
                                                 else repr(v) for v in vals]))
        if self.zero_within_variance:
            lines.append("# within-cell variance is zero: F and p are undefined")
        return "\n".join(lines) + "\n"


def _as_cube(values) -> np.ndarray:
    try:
        arr = np.asarray(values, dtype=np.float64)
    except ValueError:
        raise UnbalancedDesign("cells have different replication counts") from None
    if arr.ndim != 3:
        raise UnbalancedDesign(f"expected factor_a x factor_b x replicates, got shape {arr.shape}")
    a, b, r = arr.shape
    if a < 2 or b < 2:
        raise UnbalancedDesign("each factor needs at least 2 levels")
    if r < 2:
        raise UnbalancedDesign("need at least 2 replicates per cell")
    if not np.isfinite(arr).all():
        raise UnbalancedDesign("missing or non-finite observations")
    return arr


def anova_two_way(values, alpha: float = 0.05,
                  names: tuple[str, str] = ("Factor A", "Factor B")) -> AnovaTable:
    """ANOVA for a balanced ``(a, b, r)`` array: two factors, ``r`` replicates per cell.

    Returns rows for both factors, their interaction, the within-cell error
    and the total. When the within-cell variance is zero the F ratios are
    undefined; they are reported as ``nan`` and the table is flagged.
    """
    x = _as_cube(values)
    a, b, r = x.shape
    grand = x.mean()
    cell = x.mean(axis=2)
    ma, mb = x.mean(axis=(1, 2)), x.mean(axis=(0, 2))
    ss_a = b * r * float(np.sum((ma - grand) ** 2))
    ss_b = a * r * float(np.sum((mb - grand) ** 2))
    ss_cells = r * float(np.sum((cell - grand) ** 2))
    ss_ab = ss_cells - ss_a - ss_b
    ss_w = float(np.sum((x - cell[:, :, None]) ** 2))
    ss_t = float(np.sum((x - grand) ** 2))
    df_a, df_b = a - 1, b - 1
    df_ab, df_w = df_a * df_b, a * b * (r - 1)
    ms_w = ss_w / df_w
    zero = ss_w <= 1e-12 * max(ss_t, 1e-300)
    rows = []
    for source, ss, df in ((names[0], ss_a, df_a), (names[1], ss_b, df_b),
                           ("Interaction", ss_ab, df_ab)):
        ms = ss / df
        crit = f_ppf(1.0 - alpha, df, df_w)
        if zero:
            rows.append(AnovaRow(source, ss, df, ms, math.nan, math.nan, crit))
        else:
            f = ms / ms_w
            rows.append(AnovaRow(source, ss, df, ms, f, f_sf(f, df, df_w), crit))
    rows.append(AnovaRow("Within", ss_w, df_w, ms_w))
    rows.append(AnovaRow("Total", ss_t, a * b * r - 1, math.nan))
    return AnovaTable(tuple(rows), alpha, zero)
