"""Input-space perturbation: adversarial sign steps and constructive (ICP) descent.

All rules consume a *gradient oracle*: a callable ``x -> (loss, dloss/dx)``
evaluated with model parameters held fixed.  Inputs are never modified in
place; every function returns fresh arrays detached from any record.

Adversarial rules ascend the loss:

    fgsm:       x + eps * sign(g)

Constructive rules descend it:

    sgd-icp:    x - eps * g
    adam-icp:   x - eps * m * sqrt(1 - b2^t) / ((1 - b1^t) * (sqrt(v) + delta))
    ademamix:   x - eps * (m1 + a * m2 * (1 - b1^t)) * sqrt(1 - b2^t)
                    / ((1 - b1^t) * (sqrt(v) + delta))

The AdEMAMix-ICP rule keeps the ``(1 - b1^t)`` factor on the slow-moment term
as written in the method description; that differs from the optimizer it is
named after, which applies the bias correction to ``m1`` alone.  Its second
moment follows the Adam-ICP update.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .tensor import ShapeError, Tensor

GradOracle = Callable[[np.ndarray], tuple[float, np.ndarray]]

ADVERSARIAL = ("fgsm", "ifgsm")
CONSTRUCTIVE = ("sgd-icp", "adam-icp", "ademamix-icp")
VARIANTS = ADVERSARIAL + CONSTRUCTIVE


@dataclass
class PerturbConfig:
    variant: str = "sgd-icp"
    eps: float = 0.002
    steps: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    beta3: float = 0.9999
    alpha_mix: float = 5.0
    delta: float = 1e-8
    clamp: tuple[float, float] | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        if isinstance(self.steps, bool) or int(self.steps) != self.steps or self.steps < 0:
            raise ValueError("steps must be an integer >= 0")
        self.steps = int(self.steps)
        for name in ("beta1", "beta2", "beta3"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.alpha_mix < 0:
            raise ValueError("alpha_mix must be >= 0")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.clamp is not None:
            lo, hi = self.clamp
            if not lo < hi:
                raise ValueError("clamp must be an increasing [lo, hi] pair")
            self.clamp = (float(lo), float(hi))


@dataclass
class PerturbState:
    t: int
    m: np.ndarray
    v: np.ndarray
    m2: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "PerturbState":
        return cls(0, np.zeros(shape), np.zeros(shape), np.zeros(shape))


def _array(x) -> np.ndarray:
    return np.array(x.value if isinstance(x, Tensor) else x, dtype=np.float64)


def _query(oracle: GradOracle, x: np.ndarray) -> tuple[float, np.ndarray]:
    loss, g = oracle(x)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != x.shape:
        raise ShapeError(f"oracle gradient has shape {g.shape}, input has {x.shape}")
    return float(loss), g


def _check_state(state: PerturbState, shape):
    for name in ("m", "v", "m2"):
        arr = getattr(state, name)
        if arr is None or np.shape(arr) != shape:
            raise ShapeError(f"state.{name} has shape {np.shape(arr)}, input has {shape}")


# -- update rules on an already-evaluated gradient ---------------------------

def _sgd_update(x, g, eps):
    return x - eps * g


def _adam_update(x, g, cfg: PerturbConfig, state: PerturbState):
    t = state.t + 1
    corr1 = 1.0 - cfg.beta1 ** t
    corr2 = np.sqrt(1.0 - cfg.beta2 ** t)
    x_new, m, v = kernels.adam_icp(x, g, state.m, state.v, cfg.eps, cfg.beta1, cfg.beta2,
                                   corr1, corr2, cfg.delta)
    return x_new, PerturbState(t, m, v, state.m2)


def _ademamix_update(x, g, cfg: PerturbConfig, state: PerturbState):
    t = state.t + 1
    corr1 = 1.0 - cfg.beta1 ** t
    corr2 = np.sqrt(1.0 - cfg.beta2 ** t)
    x_new, m, m2, v = kernels.ademamix_icp(x, g, state.m, state.m2, state.v, cfg.eps, cfg.beta1,
                                           cfg.beta2, cfg.beta3, cfg.alpha_mix, corr1, corr2,
                                           cfg.delta)
    return x_new, PerturbState(t, m, v, m2)


# -- public step operations --------------------------------------------------

def fgsm_step(x, oracle: GradOracle, eps: float) -> np.ndarray:
    """One signed ascent step ``x + eps * sign(grad)``; ``sign(0) = 0``."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    x = _array(x)
    _, g = _query(oracle, x)
    return kernels.sign_step(x, g, eps)


def ifgsm_refine(x, oracle: GradOracle, eps: float, steps: int) -> tuple[np.ndarray, list[float]]:
    """Iterated FGSM.  Returns the final point and ``steps + 1`` loss values."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if not eps > 0:
        raise ValueError("eps must be > 0")
    x = _array(x)
    losses = []
    for _ in range(steps):
        loss, g = _query(oracle, x)
        losses.append(loss)
        x = kernels.sign_step(x, g, eps)
    losses.append(_query(oracle, x)[0])
    return x, losses


def icp_step_sgd(x, oracle: GradOracle, eps: float) -> np.ndarray:
    if not eps > 0:
        raise ValueError("eps must be > 0")
    x = _array(x)
    _, g = _query(oracle, x)
    return _sgd_update(x, g, eps)


def icp_step_adam(x, oracle: GradOracle, cfg: PerturbConfig,
                  state: PerturbState) -> tuple[np.ndarray, PerturbState]:
    x = _array(x)
    _check_state(state, x.shape)
    _, g = _query(oracle, x)
    return _adam_update(x, g, cfg, state)


def icp_step_ademamix(x, oracle: GradOracle, cfg: PerturbConfig,
                      state: PerturbState) -> tuple[np.ndarray, PerturbState]:
    x = _array(x)
    _check_state(state, x.shape)
    _, g = _query(oracle, x)
    return _ademamix_update(x, g, cfg, state)


def icp_refine(x, oracle: GradOracle, cfg: PerturbConfig) -> tuple[np.ndarray, list[float]]:
    """Run ``cfg.steps`` constructive steps from a fresh state.

    Returns the refined input and the loss before step 1 through after the
    last step.  The optional clamp is applied after every step.
    """
    if cfg.variant not in CONSTRUCTIVE:
        raise ValueError(f"icp_refine needs a constructive variant, got {cfg.variant!r}")
    x = _array(x)
    state = PerturbState.zeros(x.shape)
    losses = []
    for _ in range(cfg.steps):
        loss, g = _query(oracle, x)
        losses.append(loss)
        if cfg.variant == "sgd-icp":
            x = _sgd_update(x, g, cfg.eps)
        elif cfg.variant == "adam-icp":
            x, state = _adam_update(x, g, cfg, state)
        else:
            x, state = _ademamix_update(x, g, cfg, state)
        if cfg.clamp is not None:
            x = np.clip(x, *cfg.clamp)
    losses.append(_query(oracle, x)[0])
    return x, losses


def refine(x, oracle: GradOracle, cfg: PerturbConfig) -> tuple[np.ndarray, list[float]]:
    """Dispatch on ``cfg.variant``, covering the adversarial variants too."""
    if cfg.variant == "fgsm":
        x = _array(x)
        loss0 = _query(oracle, x)[0]
        x1 = fgsm_step(x, oracle, cfg.eps)
        return x1, [loss0, _query(oracle, x1)[0]]
    if cfg.variant == "ifgsm":
        return ifgsm_refine(x, oracle, cfg.eps, cfg.steps)
    return icp_refine(x, oracle, cfg)
