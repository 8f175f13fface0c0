"""Population-level extrapolation of a classifier's sensitivity and specificity."""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import InvalidRates

__all__ = ["Impact", "impact_extrapolation", "PrevalenceCheck", "implied_prevalences"]


def _rate(name: str, v: float) -> float:
    v = float(v)
    if not 0.0 <= v <= 1.0 or math.isnan(v):
        raise InvalidRates(f"{name} must lie in [0, 1], got {v}")
    return v


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class Impact:
    correctly_recommended: int
    correctly_discouraged: int


def impact_extrapolation(population: int, prevalence: float, sensitivity: float,
                         specificity: float) -> Impact:
    """Patients whose treatment recommendation the classifier gets right.

    ``correctly_recommended = round(N * prevalence * sensitivity)`` and
    ``correctly_discouraged = round(N * (1 - prevalence) * specificity)``,
    rounding halves up.
    """
    if population < 0:
        raise InvalidRates("population must be non-negative")
    prev = _rate("prevalence", prevalence)
    sens = _rate("sensitivity", sensitivity)
    spec = _rate("specificity", specificity)
    return Impact(_round_half_up(population * prev * sens),
                  _round_half_up(population * (1.0 - prev) * spec))


@dataclass(frozen=True)
class PrevalenceCheck:
    from_recommended: float | None
    from_discouraged: float | None
    consistent: bool
    note: str

    def report(self) -> str:
        lines = []
        if self.from_recommended is not None:
            lines.append(f"prevalence implied by correctly recommended: {self.from_recommended:.6f}")
        if self.from_discouraged is not None:
            lines.append(f"prevalence implied by correctly discouraged: {self.from_discouraged:.6f}")
        lines.append(self.note)
        return "\n".join(lines)


def _reproduces(population, prevalence, sens, spec, rec, disc) -> bool:
    if not 0.0 <= prevalence <= 1.0:
        return False
    got = impact_extrapolation(population, prevalence, sens, spec)
    ok = True
    if rec is not None:
        ok &= abs(got.correctly_recommended - rec) <= 1
    if disc is not None:
        ok &= abs(got.correctly_discouraged - disc) <= 1
    return ok


def implied_prevalences(population: int, sensitivity: float, specificity: float,
                        recommended: int | None = None,
                        discouraged: int | None = None) -> PrevalenceCheck:
    """Invert the extrapolation for each reported count separately.

    ``consistent`` is true when a single prevalence reproduces every given
    count to within one patient; otherwise ``note`` states the mismatch.
    """
    sens = _rate("sensitivity", sensitivity)
    spec = _rate("specificity", specificity)
    p_rec = recommended / (population * sens) if recommended is not None and sens > 0 else None
    p_disc = 1.0 - discouraged / (population * spec) if discouraged is not None and spec > 0 else None
    # prevalences whose rounded counts land within one patient of each report
    lo, hi = 0.0, 1.0
    if p_rec is not None:
        lo = max(lo, (recommended - 1.5) / (population * sens))
        hi = min(hi, (recommended + 1.5) / (population * sens))
    if p_disc is not None:
        lo = max(lo, 1.0 - (discouraged + 1.5) / (population * spec))
        hi = min(hi, 1.0 - (discouraged - 1.5) / (population * spec))
    consistent = lo < hi and _reproduces(population, (lo + hi) / 2.0, sens, spec,
                                         recommended, discouraged)
    if consistent:
        note = "a single prevalence reproduces the reported counts"
    elif p_rec is not None and p_disc is not None:
        note = (f"INCONSISTENT: no single prevalence reproduces both counts "
                f"(implied prevalences differ by {abs(p_rec - p_disc):.6f}; "
                f"implied positives {population * p_rec:.0f} vs {population * p_disc:.0f})")
    else:
        note = "INCONSISTENT: the implied prevalence lies outside [0, 1]"
    return PrevalenceCheck(p_rec, p_disc, consistent, note)
