"""Dense layers, parameter init, and Adam."""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad


def kaiming_uniform(rng, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Dense:
    def __init__(self, fan_in: int, fan_out: int, rng, name: str = "dense"):
        self.w = ad.Tensor(kaiming_uniform(rng, fan_in, fan_out), requires_grad=True, name=f"{name}.w")
        self.b = ad.Tensor(np.zeros(fan_out), requires_grad=True, name=f"{name}.b")

    def __call__(self, x: ad.Tensor) -> ad.Tensor:
        return ad.matmul(x, self.w) + self.b

    def parameters(self) -> list:
        return [self.w, self.b]


class Adam:
    def __init__(self, params, lr: float = 1e-3, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, lr: float | None = None):
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def cosine_lr(epoch: int, epochs: int, lr0: float = 5e-4, lr_min: float = 5e-5, frac: float = 0.9) -> float:
    """Cosine decay from ``lr0`` to ``lr_min`` over the first ``frac`` of training, then flat."""
    span = frac * epochs
    if span <= 0 or epoch >= span:
        return lr_min
    return lr_min + 0.5 * (lr0 - lr_min) * (1 + math.cos(math.pi * epoch / span))
