"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from emofuse.nn.core import Param


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    per_param: dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def gradient_check(
    loss_fn: Callable[[], float],
    params: list[Param],
    epsilon: float = 1e-5,
    tolerance: float = 1e-5,
) -> GradCheckReport:
    """Compare each p.grad against (f(p+eps) - f(p-eps)) / (2 eps).

    The caller runs forward/backward first so p.grad holds the analytic
    gradient; loss_fn must then re-evaluate the same loss deterministically
    (dropout off or masks frozen) without touching the gradients. Relative
    error uses denominator max(|analytic|, |numeric|, 1e-8).
    """
    analytic = {p.name: p.grad.copy() for p in params}
    per_param: dict[str, float] = {}
    worst = ("", 0.0)
    for p in params:
        a = analytic[p.name].ravel()
        flat = p.value.ravel()  # view; in-place edits perturb the model
        worst_here = 0.0
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            f_plus = loss_fn()
            flat[j] = orig - epsilon
            f_minus = loss_fn()
            flat[j] = orig
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            denom = max(abs(a[j]), abs(numeric), 1e-8)
            rel = abs(a[j] - numeric) / denom
            worst_here = max(worst_here, rel)
        per_param[p.name] = worst_here
        if worst_here >= worst[1]:
            worst = (p.name, worst_here)
    return GradCheckReport(
        max_rel_error=worst[1], worst_param=worst[0], per_param=per_param, tolerance=tolerance
    )
