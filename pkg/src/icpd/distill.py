"""Self-distillation loss pieces: layer weights, feature MSE, the alpha schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

SCHEMES = ("uniform", "linear-normalized")


@dataclass(frozen=True)
class DistillSchedule:
    k: int
    E: int
    weighted: bool = True
    scheme: str = "linear-normalized"

    def __post_init__(self):
        if not (0 <= self.k <= self.E and self.E >= 1):
            raise ValueError(f"need 0 <= k <= E and E >= 1, got k={self.k}, E={self.E}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")

    @property
    def control(self) -> bool:
        """True when no distillation epoch ever happens (k == E)."""
        return self.k == self.E

    def alpha(self, e: int) -> float:
        return alpha_schedule(e, self.k, self.E)

    def weights(self, n: int) -> np.ndarray | None:
        return layer_weights(n, self.scheme) if self.weighted else None


def layer_weights(n: int, scheme: str = "linear-normalized") -> np.ndarray:
    """Positive weights summing to 1; ``linear-normalized`` is ``i / (1 + ... + n)``."""
    if n < 1:
        raise ValueError("need at least one layer")
    if scheme == "uniform":
        return np.full(n, 1.0 / n)
    if scheme == "linear-normalized":
        i = np.arange(1, n + 1, dtype=np.float64)
        return i / (n * (n + 1) / 2)
    raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")


def mse(a: Tensor, b) -> Tensor:
    return T.mean(T.square(T.subtract(a, b)))


def distill_loss(F: Sequence[Tensor], F_prime: Sequence, weights=None) -> Tensor:
    """Sum (or weighted sum) of per-layer MSE between student and target features.

    ``F_prime`` is always treated as a constant target, even if a recorded
    tensor is passed in.
    """
    if len(F) != len(F_prime):
        raise ShapeError(f"{len(F)} student features vs {len(F_prime)} targets")
    if not F:
        raise ShapeError("no feature pairs to distill")
    if weights is not None and len(weights) != len(F):
        raise ShapeError(f"{len(weights)} weights for {len(F)} layers")
    total = None
    for i, (f, fp) in enumerate(zip(F, F_prime)):
        target = Tensor(fp.value if isinstance(fp, Tensor) else fp)
        if target.shape != f.shape:
            raise ShapeError(f"layer {i}: feature {f.shape} vs target {target.shape}")
        term = mse(f, target)
        if weights is not None:
            term = T.scale(term, float(weights[i]))
        total = term if total is None else T.add(total, term)
    return total


def alpha_schedule(e: int, k: int, E: int) -> float:
    """Task-loss weight for 1-indexed epoch ``e``: 1 up to ``k``, then cosine decay to 0 at ``E``."""
    if not 1 <= e <= E:
        raise ValueError(f"epoch {e} outside [1, {E}]")
    if e <= k:
        return 1.0
    if e == E:
        return 0.0  # cos(pi/2) is 6e-17 in floating point
    return math.cos(math.pi * (e - k) / (2 * (E - k)))


def total_loss(task: Tensor, dist: Tensor, alpha: float) -> Tensor:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return T.add(T.scale(task, alpha), T.scale(dist, 1.0 - alpha))
