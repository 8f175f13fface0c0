"""Plain SGD and Adam updates over a ``{name: Tensor}`` parameter dict."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidConfig, ShapeMismatch
from .tensor import Tensor

__all__ = ["OptimizerState", "sgd_step", "adam_step", "step", "zero_grad"]


@dataclass
class OptimizerState:
    lr: float = 1e-3
    kind: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    buffers: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0:
            raise InvalidConfig(f"learning rate must be > 0, got {self.lr}")
        if self.kind not in ("adam", "sgd"):
            raise InvalidConfig(f"unknown optimizer {self.kind!r}")


def zero_grad(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.zero_grad()


def sgd_step(params: dict[str, Tensor], state: OptimizerState) -> None:
    for p in params.values():
        p.data -= np.asarray(state.lr * p.grad, dtype=p.data.dtype)
    state.step += 1


def adam_step(params: dict[str, Tensor], state: OptimizerState) -> None:
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        if name not in state.buffers:
            state.buffers[name] = (np.zeros_like(p.data), np.zeros_like(p.data))
        m, v = state.buffers[name]
        if m.shape != p.shape:
            raise ShapeMismatch(f"optimizer buffer for {name} has shape {m.shape}, param {p.shape}")
        g = p.grad
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p.data -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.data.dtype)


def step(params: dict[str, Tensor], state: OptimizerState) -> None:
    if state.kind == "adam":
        adam_step(params, state)
    else:
        sgd_step(params, state)
