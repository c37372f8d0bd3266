"""Parameter optimizers operating in place on a model's parameter arrays."""
from __future__ import annotations

from typing import Mapping

import numpy as np

from .. import kernels


class SGD:
    def __init__(self, params: Mapping[str, np.ndarray], lr: float = 0.05, momentum: float = 0.9):
        self.params = dict(params)
        self.lr = lr
        self.momentum = momentum
        self.buffers = {k: np.zeros_like(v) for k, v in self.params.items()}

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            kernels.sgd_momentum_(p, grads[k], self.buffers[k], self.lr, self.momentum)


class Adam:
    def __init__(self, params: Mapping[str, np.ndarray], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.params.items()}

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        corr1 = 1.0 - self.b1 ** self.t
        corr2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            kernels.adam_param_(p, grads[k], self.m[k], self.v[k], self.lr, self.b1, self.b2,
                                corr1, corr2, self.eps)


def make_optimizer(kind: str, params, lr: float, momentum: float = 0.9,
                   betas=(0.9, 0.999), eps: float = 1e-8):
    if kind == "sgd":
        return SGD(params, lr, momentum)
    if kind == "adam":
        return Adam(params, lr, tuple(betas), eps)
    raise ValueError(f"unknown optimizer {kind!r}")
