"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor

__all__ = ["finite_difference_check"]


def finite_difference_check(
    f: Callable[[], Tensor],
    params: dict[str, Tensor],
    eps: float = 1e-3,
    dtype=np.float64,
    max_coords: int | None = None,
    seed: int = 0,
    corrupt: Callable[[str, np.ndarray], np.ndarray] | None = None,
) -> float:
    """Worst relative discrepancy between analytic and numeric gradients.

    ``f`` rebuilds the graph from ``params`` and returns a scalar. For each
    checked coordinate the numeric derivative is ``(f(p+eps) - f(p-eps)) / 2eps``
    and the error is ``|a - n| / max(|a|, |n|, 1e-8)``.

    Parameters are cast to ``dtype`` for the duration of the check (float64 by
    default, so roundoff does not swamp the comparison) and restored after.
    ``max_coords`` caps the number of coordinates tested per parameter; a
    seeded random subset is drawn when a tensor is larger. ``corrupt`` lets
    tests tamper with analytic gradients to confirm the checker notices.
    """
    saved = {k: (p.data, p.grad) for k, p in params.items()}
    try:
        for p in params.values():
            p.data = p.data.astype(dtype)
            p.grad = np.zeros_like(p.data)
        loss = f()
        loss.backward()
        analytic = {k: p.grad.copy() for k, p in params.items()}
        if corrupt is not None:
            analytic = {k: corrupt(k, g) for k, g in analytic.items()}

        rng = np.random.default_rng(seed)
        worst = 0.0
        for name, p in params.items():
            flat = p.data.reshape(-1)
            coords = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                coords = rng.choice(flat.size, size=max_coords, replace=False)
            a_flat = analytic[name].reshape(-1)
            for i in coords:
                orig = flat[i]
                flat[i] = orig + eps
                fp = float(f().data)
                flat[i] = orig - eps
                fm = float(f().data)
                flat[i] = orig
                num = (fp - fm) / (2 * eps)
                a = float(a_flat[i])
                err = abs(a - num) / max(abs(a), abs(num), 1e-8)
                worst = max(worst, err)
        return worst
    finally:
        for k, p in params.items():
            p.data, p.grad = saved[k]
