"""Learnable parameters and the Adam update."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .tensor import Tensor

DEFAULT_LR = 1e-4
BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


class NumericError(FloatingPointError):
    """A non-finite value reached the optimizer or a loss."""


class Param(Tensor):
    """Leaf tensor carrying its gradient and Adam moment estimates."""

    __slots__ = ("adam_m", "adam_v", "step_count")

    def __init__(self, data, name: str | None = None):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0

    @property
    def value(self) -> np.ndarray:
        return self.data


def adam_step(
    p: Param,
    lr: float = DEFAULT_LR,
    beta1: float = BETA1,
    beta2: float = BETA2,
    eps: float = EPS,
) -> None:
    """One bias-corrected Adam update of ``p`` in place; zeroes ``p.grad``."""
    g = p.grad
    if not np.all(np.isfinite(g)):
        raise NumericError(f"non-finite gradient for parameter {p.name or '<unnamed>'}")
    p.step_count += 1
    t = p.step_count
    p.adam_m *= beta1
    p.adam_m += (1.0 - beta1) * g
    p.adam_v *= beta2
    p.adam_v += (1.0 - beta2) * (g * g)
    m_hat = p.adam_m / (1.0 - beta1**t)
    v_hat = p.adam_v / (1.0 - beta2**t)
    p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
    g.fill(0.0)


class Adam:
    def __init__(self, params: Iterable[Param], lr: float = DEFAULT_LR):
        self.params = list(params)
        self.lr = lr

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for p in self.params:
            adam_step(p, self.lr)
