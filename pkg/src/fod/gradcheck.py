"""Central finite-difference verification of computed gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, recording_stop_gradients, replaying_stop_gradients


@dataclass
class Mismatch:
    param: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    rel_err: float


@dataclass
class GradCheckReport:
    checked: int = 0
    max_rel_err: float = 0.0
    mismatches: list[Mismatch] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def gradient_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    atol: float = 1e-8,
) -> GradCheckReport:
    """Compare backprop gradients with central differences for every entry.

    Stop-gradient nodes are frozen at the values recorded during the analytic
    pass, so both routes see them as constants.  An entry fails when
    ``|a - n| > tol * max(|a|, |n|) + atol``.
    """
    for p in params:
        p.zero_grad()
    with recording_stop_gradients() as log:
        loss = loss_fn()
        backward(loss)
    analytic = [np.array(p.grad, copy=True) for p in params]

    def evaluate() -> float:
        with replaying_stop_gradients(log):
            return loss_fn().item()

    report = GradCheckReport()
    for k, (p, grad) in enumerate(zip(params, analytic)):
        name = p.name or f"param{k}"
        for idx in np.ndindex(*p.data.shape):
            orig = p.data[idx]
            p.data[idx] = orig + h
            up = evaluate()
            p.data[idx] = orig - h
            down = evaluate()
            p.data[idx] = orig
            num = (up - down) / (2.0 * h)
            a = float(grad[idx])
            scale = max(abs(a), abs(num))
            rel = abs(a - num) / scale if scale > 0 else 0.0
            report.checked += 1
            if abs(a - num) > tol * scale + atol:
                report.mismatches.append(Mismatch(name, idx, a, num, rel))
            elif scale > atol / tol:
                report.max_rel_err = max(report.max_rel_err, rel)
    for p in params:
        p.zero_grad()
    return report
