"""JSON run configuration with strict, path-aware validation.

A config is one JSON object; sections map onto the dataclasses below and
unknown fields anywhere are rejected.  Errors name the offending field as a
dotted path (``perturb.eps``) or, for malformed JSON, the file line/column.
"""
from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from ..distill import SCHEMES, DistillSchedule
from ..perturb import PerturbConfig
from .data import DatasetSpec


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    hidden: list[int] | None = None
    activation: str = "tanh"
    taps: list[str] | None = None
    latent_width: int = 2

    def __post_init__(self):
        if self.hidden is not None and (not self.hidden or min(self.hidden) < 1):
            raise ValueError("hidden must be a non-empty list of positive widths")
        if self.activation not in ("tanh", "relu"):
            raise ValueError("activation must be 'tanh' or 'relu'")
        if self.latent_width < 1:
            raise ValueError("latent_width must be >= 1")


@dataclass
class ScheduleConfig:
    k: int = 25
    weighted: bool = True
    scheme: str = "linear-normalized"
    E: int | None = None

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")


@dataclass
class OptimizerConfig:
    kind: str = "sgd"
    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    betas: list[float] = field(default_factory=lambda: [0.9, 0.999])
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError("kind must be 'sgd' or 'adam'")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if len(self.betas) != 2:
            raise ValueError("betas must have two entries")


@dataclass
class DemoConfig:
    eps: float = 0.002
    steps: int = 100
    variant: str = "sgd-icp"
    grid: int = 200
    pad: float = 0.1
    min_train_acc: float = 0.95

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.variant not in ("sgd-icp", "adam-icp", "ademamix-icp"):
            raise ValueError("variant must be a constructive ICP variant")
        if self.grid < 2:
            raise ValueError("grid must be >= 2")


@dataclass
class RunConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    perturb: PerturbConfig = field(default_factory=PerturbConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    epochs: int = 100
    seed: int = 0
    demo: DemoConfig = field(default_factory=DemoConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.schedule.E is not None and self.schedule.E != self.epochs:
            raise ValueError(f"schedule.E={self.schedule.E} does not match epochs={self.epochs}")
        if self.schedule.k > self.epochs:
            raise ValueError(f"schedule.k={self.schedule.k} exceeds epochs={self.epochs}")
        if self.perturb.variant in ("fgsm", "ifgsm") and self.schedule.k < self.epochs:
            raise ValueError("training needs a constructive perturb.variant")

    def distill_schedule(self) -> DistillSchedule:
        return DistillSchedule(self.schedule.k, self.epochs, self.schedule.weighted, self.schedule.scheme)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# dict -> dataclass with type checks
# ---------------------------------------------------------------------------

def _check(value, tp, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _check(value, inner[0], path)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        return [_check(v, args[0], f"{path}[{i}]") for i, v in enumerate(value)]
    if origin is tuple:
        if not isinstance(value, list) or len(value) != len(args):
            raise ConfigError(f"{path}: expected a list of {len(args)} numbers")
        return tuple(_check(v, a, f"{path}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported field type {tp}")  # pragma: no cover


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown field(s): {', '.join(where + u for u in unknown)}")
    kwargs = {k: _check(v, hints[k], f"{path}.{k}" if path else k) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path or '<root>'}: {exc}") from None


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
