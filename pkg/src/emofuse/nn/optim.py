"""SGD and Adam parameter updates, plus global-norm gradient clipping."""

from __future__ import annotations

import numpy as np

from emofuse.errors import EmofuseError
from emofuse.nn.core import Param


class OptimizerError(EmofuseError):
    """Raised when a step would apply non-finite gradients."""


def _check_finite(params: list[Param]):
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise OptimizerError(f"non-finite gradient in parameter {p.name!r}; step aborted")


class Sgd:
    def __init__(self, params: list[Param], lr: float):
        if lr <= 0.0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr

    def step(self):
        _check_finite(self.params)
        for p in self.params:
            p.value -= self.lr * p.grad

    def zero_grads(self):
        for p in self.params:
            p.grad[...] = 0.0


class Adam:
    def __init__(
        self,
        params: list[Param],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr <= 0.0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.value) for p in params]
        self._v = [np.zeros_like(p.value) for p in params]

    def step(self):
        _check_finite(self.params)
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self._m, self._v):
            m += (1.0 - self.beta1) * (p.grad - m)
            v += (1.0 - self.beta2) * (p.grad**2 - v)
            p.value -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def zero_grads(self):
        for p in self.params:
            p.grad[...] = 0.0


def clip_global_norm(params: list[Param], max_norm: float) -> float:
    """Scale all gradients down so their joint L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        total += float((p.grad**2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return norm
