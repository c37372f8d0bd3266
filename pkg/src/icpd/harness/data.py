"""Synthetic datasets: isotropic Gaussian clusters and a low-dimensional VAE manifold."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

KINDS = ("gaussian-clusters", "synthetic-vae")
DEFAULT_RADIUS = 0.6


class Dataset(NamedTuple):
    X: np.ndarray
    y: np.ndarray | None

    def __len__(self):
        return len(self.X)


@dataclass
class DatasetSpec:
    kind: str = "gaussian-clusters"
    n_classes: int = 3
    points_per_class: int = 200
    centers: list[list[float]] | None = None
    std: float = 0.2
    split: float = 0.8
    seed: int = 0
    label_noise: float = 0.0
    # synthetic-vae only
    n_points: int = 600
    data_width: int = 8
    latent_width: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.std > 0:
            raise ValueError("std must be > 0")
        if not 0.0 < self.split < 1.0:
            raise ValueError("split must lie in (0, 1)")
        if not 0.0 <= self.label_noise < 1.0:
            raise ValueError("label_noise must lie in [0, 1)")
        if self.kind == "gaussian-clusters":
            if self.n_classes < 2:
                raise ValueError("n_classes must be >= 2")
            if self.points_per_class < 1:
                raise ValueError("points_per_class must be >= 1")
            if self.centers is not None:
                c = np.asarray(self.centers, dtype=np.float64)
                if c.shape != (self.n_classes, 2):
                    raise ValueError(f"centers must be {self.n_classes} 2-vectors, got shape {c.shape}")
        else:
            if self.n_points < 2 or self.data_width < 1 or self.latent_width < 1:
                raise ValueError("n_points >= 2, data_width >= 1 and latent_width >= 1 required")

    def cluster_centers(self) -> np.ndarray:
        if self.centers is not None:
            return np.asarray(self.centers, dtype=np.float64)
        ang = 2 * np.pi * np.arange(self.n_classes) / self.n_classes + np.pi / 2
        return DEFAULT_RADIUS * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def _split(n: int, frac: float, rng) -> tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(n)
    cut = int(round(frac * n))
    cut = min(max(cut, 1), n - 1)
    return order[:cut], order[cut:]


def make_clusters(spec: DatasetSpec) -> tuple[Dataset, Dataset]:
    """Points ~ N(center_c, std^2 I) per class, split into train/test by ``spec.split``.

    Label noise, when configured, reassigns that fraction of *training* labels
    to a different class chosen uniformly; test labels stay clean.
    """
    if spec.kind != "gaussian-clusters":
        raise ValueError(f"make_clusters needs kind 'gaussian-clusters', got {spec.kind!r}")
    rng = np.random.default_rng(spec.seed)
    centers = spec.cluster_centers()
    n = spec.points_per_class
    X = np.concatenate([c + spec.std * rng.standard_normal((n, 2)) for c in centers])
    y = np.repeat(np.arange(spec.n_classes), n)
    tr, te = _split(len(X), spec.split, rng)
    ytr = y[tr].copy()
    if spec.label_noise > 0:
        flip = rng.random(len(tr)) < spec.label_noise
        shift = rng.integers(1, spec.n_classes, size=len(tr))
        ytr[flip] = (ytr[flip] + shift[flip]) % spec.n_classes
    return Dataset(X[tr], ytr), Dataset(X[te], y[te].copy())


def make_vae_data(spec: DatasetSpec) -> tuple[Dataset, Dataset]:
    """Smooth nonlinear image of a Gaussian latent plus isotropic noise."""
    if spec.kind != "synthetic-vae":
        raise ValueError(f"make_vae_data needs kind 'synthetic-vae', got {spec.kind!r}")
    rng = np.random.default_rng(spec.seed)
    mix = rng.standard_normal((spec.latent_width, spec.data_width))
    z = rng.standard_normal((spec.n_points, spec.latent_width))
    X = np.tanh(z @ mix) + spec.std * rng.standard_normal((spec.n_points, spec.data_width))
    tr, te = _split(spec.n_points, spec.split, rng)
    return Dataset(X[tr], None), Dataset(X[te], None)


def make_dataset(spec: DatasetSpec) -> tuple[Dataset, Dataset]:
    if spec.kind == "gaussian-clusters":
        return make_clusters(spec)
    return make_vae_data(spec)
