"""Baseline and ICP self-distillation training loops, plus the config-driven runner."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__, kernels
from .. import tensor as T
from ..distill import DistillSchedule, distill_loss, total_loss
from ..models import (ClassifierModel, VAEModel, classification_loss, forward_with_features,
                      init_params, mlp_classifier, mlp_vae, vae_loss)
from ..perturb import PerturbConfig, icp_refine
from ..tensor import NonFiniteError, Record
from .config import RunConfig
from .data import Dataset, make_dataset
from .metrics import evaluate_metrics
from .optim import make_optimizer

log = logging.getLogger(__name__)

EPOCH_FIELDS = ("epoch", "alpha", "task_loss", "distill_loss", "train_acc", "test_acc",
                "macro_f1", "seconds")


class NumericError(RuntimeError):
    """Training produced a non-finite value."""


@dataclass
class EpochRecord:
    epoch: int
    alpha: float
    task_loss: float
    distill_loss: float
    train_acc: float | None
    test_acc: float | None
    macro_f1: float | None
    seconds: float
    test_loss: float | None = None


@dataclass
class RunReport:
    config: dict
    epochs: list[EpochRecord]
    final: dict
    total_seconds: float
    version: str = __version__
    backend: str = field(default_factory=lambda: kernels.BACKEND)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# tasks: how a batch turns into L_task, and how a model is scored
# ---------------------------------------------------------------------------

class ClassificationTask:
    def __init__(self, train: Dataset, test: Dataset):
        self.train, self.test = train, test

    def targets(self, idx, epoch, batch, seed):
        return self.train.y[idx]

    def loss(self, fwd, target):
        return classification_loss(fwd.output, target)

    def forward(self, model, x, record, target, track_params=True):
        return forward_with_features(model, x, record, track_params=track_params)

    def evaluate(self, model) -> dict:
        train_acc, _ = evaluate_metrics(model, self.train)
        test_acc, f1 = evaluate_metrics(model, self.test)
        return {"train_acc": train_acc, "test_acc": test_acc, "macro_f1": f1, "test_loss": None}


class VAETask:
    """Targets are (clean batch, fixed reparameterization noise) pairs.

    The noise is drawn once per batch so the ICP oracle sees the same
    deterministic objective at every refinement step.
    """

    def __init__(self, train: Dataset, test: Dataset, latent_width: int):
        self.train, self.test = train, test
        self.latent_width = latent_width

    def targets(self, idx, epoch, batch, seed):
        rng = np.random.default_rng([seed, 7919, epoch, batch])
        return self.train.X[idx], rng.standard_normal((len(idx), self.latent_width))

    def loss(self, fwd, target):
        recon, mu, log_var = fwd.output
        return vae_loss(recon, target[0], mu, log_var)

    def forward(self, model, x, record, target, track_params=True):
        return forward_with_features(model, x, record, track_params=track_params, noise=target[1])

    def evaluate(self, model) -> dict:
        fwd = forward_with_features(model, self.test.X)
        recon, mu, log_var = fwd.output
        test_loss = vae_loss(recon, self.test.X, mu, log_var).item()
        return {"train_acc": None, "test_acc": None, "macro_f1": None, "test_loss": test_loss}


def make_oracle(task, model, target):
    """Input-gradient oracle for ``task``'s loss with parameters frozen."""
    def oracle(x):
        rec = Record()
        fwd = task.forward(model, np.asarray(x, dtype=np.float64), rec, target, track_params=False)
        loss = task.loss(fwd, target)
        return loss.item(), rec.backward(loss)[fwd.input]
    return oracle


def _batches(n: int, batch_size: int, seed: int, epoch: int):
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _finish(model, task, epoch, alpha, task_losses, dist_losses, start) -> EpochRecord:
    scores = task.evaluate(model)
    rec = EpochRecord(epoch, alpha, float(np.mean(task_losses)), float(np.mean(dist_losses)),
                      scores["train_acc"], scores["test_acc"], scores["macro_f1"],
                      time.perf_counter() - start, scores["test_loss"])
    for name in ("task_loss", "distill_loss", "test_loss"):
        v = getattr(rec, name)
        if v is not None and not math.isfinite(v):
            raise NumericError(f"epoch {epoch}: {name} is not finite")
    return rec


def train_epoch_baseline(model, task, optimizer, epoch: int, *, seed: int = 0,
                         batch_size: int = 32):
    """One epoch of minibatch updates on the task loss alone (alpha = 1)."""
    start = time.perf_counter()
    losses = []
    for b, idx in enumerate(_batches(len(task.train), batch_size, seed, epoch)):
        target = task.targets(idx, epoch, b, seed)
        try:
            rec = Record()
            fwd = task.forward(model, task.train.X[idx], rec, target)
            loss = task.loss(fwd, target)
            grads = rec.backward(loss)
        except NonFiniteError as exc:
            raise NumericError(f"epoch {epoch}, batch {b}: {exc}") from exc
        optimizer.step({k: grads[t] for k, t in fwd.params.items()})
        losses.append(loss.item())
    return model, _finish(model, task, epoch, 1.0, losses, [0.0], start)


def distill_batch(model, task, x, target, perturb: PerturbConfig, schedule: DistillSchedule,
                  alpha: float):
    """Forward, ICP refinement, target features, combined loss and its parameter gradients.

    Returns ``(grads, task_loss, distill_loss, loss_trajectory)``.
    """
    rec = Record()
    fwd = task.forward(model, x, rec, target)
    l_task = task.loss(fwd, target)
    refined, traj = icp_refine(x, make_oracle(task, model, target), perturb)
    targets = [f.value for f in task.forward(model, refined, None, target, track_params=False).features]
    l_dist = distill_loss(fwd.features, targets, schedule.weights(len(fwd.features)))
    total = total_loss(l_task, l_dist, alpha)
    grads = rec.backward(total)
    return {k: grads[t] for k, t in fwd.params.items()}, l_task.item(), l_dist.item(), traj


def train_epoch_distill(model, task, optimizer, perturb: PerturbConfig, schedule: DistillSchedule,
                        epoch: int, *, seed: int = 0, batch_size: int = 32):
    """One self-distillation epoch (``epoch > k``)."""
    if epoch <= schedule.k:
        raise ValueError(f"epoch {epoch} is inside the baseline phase (k={schedule.k})")
    alpha = schedule.alpha(epoch)
    start = time.perf_counter()
    task_losses, dist_losses = [], []
    for b, idx in enumerate(_batches(len(task.train), batch_size, seed, epoch)):
        target = task.targets(idx, epoch, b, seed)
        try:
            grads, lt, ld, _ = distill_batch(model, task, task.train.X[idx], target, perturb,
                                             schedule, alpha)
        except NonFiniteError as exc:
            raise NumericError(f"epoch {epoch}, batch {b}: {exc}") from exc
        optimizer.step(grads)
        task_losses.append(lt)
        dist_losses.append(ld)
    return model, _finish(model, task, epoch, alpha, task_losses, dist_losses, start)


# ---------------------------------------------------------------------------
# config-driven construction and the full run
# ---------------------------------------------------------------------------

def build(cfg: RunConfig):
    """Model, task and optimizer for ``cfg``, deterministically seeded."""
    train, test = make_dataset(cfg.dataset)
    m = cfg.model
    if cfg.dataset.kind == "gaussian-clusters":
        model = mlp_classifier(2, m.hidden or (32, 32, 16), cfg.dataset.n_classes, m.activation, m.taps)
        task = ClassificationTask(train, test)
    else:
        model = mlp_vae(cfg.dataset.data_width, m.hidden or (16, 16), m.latent_width, m.activation,
                        m.taps)
        task = VAETask(train, test, m.latent_width)
    init_params(model, cfg.seed)
    o = cfg.optimizer
    optimizer = make_optimizer(o.kind, model.params, o.lr, o.momentum, o.betas, o.eps)
    return model, task, optimizer


def train(cfg: RunConfig, progress=None):
    """Baseline phase then distillation phase.  Returns ``(model, task, records)``."""
    model, task, optimizer = build(cfg)
    schedule = cfg.distill_schedule()
    if not schedule.control and len(_features_of(model)) < 1:
        raise ValueError("distillation needs at least one feature tap")
    records = []
    bs = cfg.optimizer.batch_size
    for e in range(1, cfg.epochs + 1):
        if e <= schedule.k:
            model, rec = train_epoch_baseline(model, task, optimizer, e, seed=cfg.seed, batch_size=bs)
        else:
            model, rec = train_epoch_distill(model, task, optimizer, cfg.perturb, schedule, e,
                                             seed=cfg.seed, batch_size=bs)
        records.append(rec)
        log.info("epoch %d alpha=%.4f task=%.5f dist=%.3g test_acc=%s", e, rec.alpha,
                 rec.task_loss, rec.distill_loss, rec.test_acc)
        if progress is not None:
            progress(rec)
    return model, task, records


def _features_of(model):
    if isinstance(model, ClassifierModel):
        return model.features.taps
    if isinstance(model, VAEModel):
        return model.encoder.taps
    return model.taps


def run(cfg: RunConfig, out_dir=None) -> RunReport:
    start = time.perf_counter()
    _, _, records = train(cfg)
    last = records[-1]
    final = {k: getattr(last, k) for k in ("train_acc", "test_acc", "macro_f1", "test_loss")}
    report = RunReport(cfg.to_dict(), records, final, time.perf_counter() - start)
    if out_dir is not None:
        write_outputs(report, out_dir)
    return report


def _cell(v):
    return "" if v is None else repr(v)


def write_epochs_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EPOCH_FIELDS)
        for r in records:
            w.writerow([_cell(getattr(r, f)) for f in EPOCH_FIELDS])


def write_outputs(report: RunReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_epochs_csv(report.epochs, out / "epochs.csv")
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
