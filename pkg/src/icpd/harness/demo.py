"""Decision-boundary demo contrasting i-FGSM and ICP on three Gaussian clusters.

Writes ``grid.csv`` (x, y, pred_class on a regular lattice), ``points.csv``
(original / i-FGSM / ICP coordinates with labels and predictions) and
``summary.json`` (the three accuracies).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..perturb import PerturbConfig, icp_refine, ifgsm_refine
from .config import RunConfig
from .data import Dataset
from .metrics import accuracy, predict
from .train import NumericError, build, train_epoch_baseline


class UndertrainedError(NumericError):
    pass


@dataclass
class DemoResult:
    train_acc: float
    acc_original: float
    acc_ifgsm: float
    acc_icp: float
    X: np.ndarray
    X_ifgsm: np.ndarray
    X_icp: np.ndarray
    labels: np.ndarray
    grid: np.ndarray
    grid_pred: np.ndarray

    def summary(self) -> dict:
        return {
            "train_acc": self.train_acc,
            "accuracy": {"original": self.acc_original, "ifgsm": self.acc_ifgsm, "icp": self.acc_icp},
            "n_points": int(len(self.labels)),
        }


def per_sample_oracle(model, labels):
    """Oracle on the *summed* cross-entropy, so each point sees its own loss gradient."""
    from ..models import classification_loss, forward_with_features
    from ..tensor import Record

    def oracle(x):
        rec = Record()
        fwd = forward_with_features(model, x, rec, track_params=False)
        loss = classification_loss(fwd.output, labels, reduction="sum")
        return loss.item(), rec.backward(loss)[fwd.input]
    return oracle


def decision_grid(model, X: np.ndarray, resolution: int, pad: float):
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = hi - lo
    lo, hi = lo - pad * span, hi + pad * span
    xs = np.linspace(lo[0], hi[0], resolution)
    ys = np.linspace(lo[1], hi[1], resolution)
    gx, gy = np.meshgrid(xs, ys)
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    return grid, predict(model, grid)


def perturb_points(model, data: Dataset, eps: float, steps: int, variant: str = "sgd-icp"):
    """(i-FGSM points, ICP points).  ``eps == 0`` leaves both sets untouched."""
    if eps == 0:
        return data.X.copy(), data.X.copy()
    oracle = per_sample_oracle(model, data.y)
    x_adv, _ = ifgsm_refine(data.X, oracle, eps, steps)
    x_icp, _ = icp_refine(data.X, oracle, PerturbConfig(variant=variant, eps=eps, steps=steps))
    return x_adv, x_icp


def demo_fig1(cfg: RunConfig, out_dir=None, model=None) -> DemoResult:
    """Train (unless ``model`` is given), perturb every point both ways, score and export."""
    if cfg.dataset.kind != "gaussian-clusters":
        raise ValueError("the decision-boundary demo needs a gaussian-clusters dataset")
    built, task, optimizer = build(cfg)
    if model is None:
        model = built
        for e in range(1, cfg.epochs + 1):
            train_epoch_baseline(model, task, optimizer, e, seed=cfg.seed,
                                 batch_size=cfg.optimizer.batch_size)
    train_acc = accuracy(predict(model, task.train.X), task.train.y)
    if train_acc < cfg.demo.min_train_acc:
        raise UndertrainedError(
            f"train accuracy {train_acc:.4f} is below the required {cfg.demo.min_train_acc:.2f}")

    data = Dataset(np.concatenate([task.train.X, task.test.X]),
                   np.concatenate([task.train.y, task.test.y]))
    d = cfg.demo
    x_adv, x_icp = perturb_points(model, data, d.eps, d.steps, d.variant)
    p0, p_adv, p_icp = predict(model, data.X), predict(model, x_adv), predict(model, x_icp)
    grid, grid_pred = decision_grid(model, data.X, d.grid, d.pad)
    result = DemoResult(train_acc, accuracy(p0, data.y), accuracy(p_adv, data.y),
                        accuracy(p_icp, data.y), data.X, x_adv, x_icp, data.y, grid, grid_pred)
    if out_dir is not None:
        _write(result, (p0, p_adv, p_icp), Path(out_dir))
    return result


def _write(res: DemoResult, preds, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "grid.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "pred_class"])
        for (x, y), c in zip(res.grid, res.grid_pred):
            w.writerow([repr(float(x)), repr(float(y)), int(c)])
    with open(out / "points.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x0", "y0", "x_ifgsm", "y_ifgsm", "x_icp", "y_icp", "label",
                    "pred0", "pred_ifgsm", "pred_icp"])
        for i in range(len(res.labels)):
            w.writerow([*(repr(float(v)) for v in (*res.X[i], *res.X_ifgsm[i], *res.X_icp[i])),
                        int(res.labels[i]), *(int(p[i]) for p in preds)])
    (out / "summary.json").write_text(json.dumps(res.summary(), indent=2, sort_keys=True) + "\n")
