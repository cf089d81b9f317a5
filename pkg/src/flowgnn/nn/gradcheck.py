"""Finite-difference verification of analytic gradients.

The model function must be deterministic: calling it twice with the same
parameter values has to return the same loss. Batch-norm running-stat
updates are harmless here because train-mode outputs depend only on the
current batch, not on the running estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tensor import Parameter


@dataclass
class CoordinateCheck:
    param: str
    index: tuple[int, int]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    checks: list[CoordinateCheck] = field(default_factory=list)
    tol: float = 1e-4

    @property
    def max_rel_error(self) -> float:
        return max((c.rel_error for c in self.checks), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    def failures(self) -> list[CoordinateCheck]:
        return [c for c in self.checks if c.rel_error >= self.tol]


def finite_difference_check(
    model_fn: Callable[[], "object"],
    params: list[Parameter],
    h: float = 1e-5,
    tol: float = 1e-4,
    rng: np.random.Generator | None = None,
    coords_per_param: int = 10,
) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    Relative error per coordinate is |a - n| / max(1, |a|, |n|), so tiny
    gradients are judged on absolute error.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    loss = model_fn()
    loss.backward()
    analytic = [p.grad.copy() for p in params]

    report = GradCheckReport(tol=tol)
    for p, grad in zip(params, analytic):
        size = p.data.size
        count = min(coords_per_param, size)
        flat = rng.choice(size, size=count, replace=False)
        for k in flat:
            i, j = np.unravel_index(k, p.data.shape)
            original = p.data[i, j]
            p.data[i, j] = original + h
            f_plus = model_fn().item()
            p.data[i, j] = original - h
            f_minus = model_fn().item()
            p.data[i, j] = original
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(grad[i, j])
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            report.checks.append(
                CoordinateCheck(p.name, (int(i), int(j)), a, numeric, rel)
            )
    return report
