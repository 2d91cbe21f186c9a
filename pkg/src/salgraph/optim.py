"""Adaptive-moment optimizer with bias correction and hyperbolic lr decay."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Adam:
    """Standard Adam over a fixed parameter list.

    The effective rate at step t is ``lr / (1 + decay * t)`` with t counting
    from 1; moment buffers mirror each parameter's shape.
    """

    def __init__(self, params: list[Tensor], lr: float = 1e-3, decay: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.decay = float(decay)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ValueError(f"parameter {i} has no gradient; "
                                 "call backward (or zero_grad) first")
        self.step_count += 1
        t = self.step_count
        lr_t = self.lr / (1.0 + self.decay * t)
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= lr_t * (m / c1) / (np.sqrt(v / c2) + self.eps)
