"""Finite-difference verification of every primitive and both task losses."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .models import classification_loss, vae_loss
from .tensor import Record, finite_difference_gradient, relative_error


@dataclass
class CheckResult:
    name: str
    points: int
    max_rel_err: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.max_rel_err < self.tol


def _scalarize(out: T.Tensor, w: np.ndarray) -> T.Tensor:
    # random linear functional so every output coordinate contributes
    return T.sum(T.multiply(out, T.Tensor(w)))


def _case_unary(fn, sampler):
    def case(rng):
        x = sampler(rng)
        w = rng.standard_normal(fn(T.Tensor(x)).shape)
        return [x], lambda a: _scalarize(fn(a[0]), w)
    return case


def _case_binary(fn, sampler):
    def case(rng):
        a, b = sampler(rng)
        w = rng.standard_normal(fn(T.Tensor(a), T.Tensor(b)).shape)
        return [a, b], lambda t: _scalarize(fn(t[0], t[1]), w)
    return case


def _normal(shape):
    return lambda rng: rng.standard_normal(shape)


def _away_from_zero(shape):
    def sample(rng):
        x = rng.standard_normal(shape)
        return np.where(np.abs(x) < 1e-3, 0.5, x)
    return sample


def _pair(sa, sb=None):
    sb = sb or sa
    return lambda rng: (rng.standard_normal(sa), rng.standard_normal(sb))


def _ce_case(rng):
    logits = rng.standard_normal((4, 3)) * 2
    labels = rng.integers(0, 3, size=4)
    return [logits], lambda t: classification_loss(t[0], labels)


def _vae_case(rng):
    recon, target = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    mu, lv = rng.standard_normal((3, 2)), 0.5 * rng.standard_normal((3, 2))
    return [recon, mu, lv], lambda t: vae_loss(t[0], target, t[1], t[2])


CASES: dict[str, Callable] = {
    "matmul": _case_binary(T.matmul, _pair((3, 4), (4, 2))),
    "add": _case_binary(T.add, _pair((3, 4))),
    "subtract": _case_binary(T.subtract, _pair((3, 4))),
    "multiply": _case_binary(T.multiply, _pair((3, 4))),
    "relu": _case_unary(T.relu, _away_from_zero((3, 4))),
    "tanh": _case_unary(T.tanh, _normal((3, 4))),
    "exp": _case_unary(T.exp, _normal((3, 4))),
    "log": _case_unary(T.log, lambda rng: rng.uniform(0.2, 3.0, (3, 4))),
    "mean": _case_unary(T.mean, _normal((3, 4))),
    "mean(axis=1)": _case_unary(lambda x: T.mean(x, axis=1), _normal((3, 4))),
    "sum": _case_unary(T.sum, _normal((3, 4))),
    "sum(axis=0)": _case_unary(lambda x: T.sum(x, axis=0), _normal((3, 4))),
    "bias_add": _case_binary(T.bias_add, _pair((3, 4), (4,))),
    "softmax": _case_unary(T.softmax, _normal((3, 4))),
    "square": _case_unary(T.square, _normal((3, 4))),
    "classification_loss": _ce_case,
    "vae_loss": _vae_case,
}


def check_case(case, rng, h: float = 1e-5) -> float:
    """Worst relative error over all inputs of one random instance of ``case``."""
    inputs, f = case(rng)
    rec = Record()
    leaves = [rec.leaf(x) for x in inputs]
    grads = rec.backward(f(leaves))
    worst = 0.0
    for i, x in enumerate(inputs):
        def fi(xi, i=i):
            args = [T.Tensor(v) for v in inputs]
            args[i] = T.Tensor(xi)
            return f(args).item()
        fd = finite_difference_gradient(fi, x, h)
        worst = max(worst, relative_error(grads[leaves[i]], fd))
    return worst


def run_gradcheck(points: int = 100, h: float = 1e-5, tol: float = 1e-4, seed: int = 0,
                  names=None) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for name, case in CASES.items():
        if names is not None and name not in names:
            continue
        worst = max(check_case(case, rng, h) for _ in range(points))
        results.append(CheckResult(name, points, worst, tol))
    return results
