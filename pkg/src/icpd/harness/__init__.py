from .config import ConfigError, RunConfig, load_config
from .data import DatasetSpec, make_clusters, make_vae_data
from .demo import UndertrainedError, demo_fig1
from .metrics import evaluate_metrics
from .train import (EpochRecord, NumericError, RunReport, run, train, train_epoch_baseline,
                    train_epoch_distill)

__all__ = [
    "ConfigError", "RunConfig", "load_config", "DatasetSpec", "make_clusters", "make_vae_data",
    "UndertrainedError", "demo_fig1", "evaluate_metrics", "EpochRecord", "NumericError",
    "RunReport", "run", "train", "train_epoch_baseline", "train_epoch_distill",
]
