import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from sklearn.metrics import f1_score

from icpd.cli import main
from icpd.distill import DistillSchedule
from icpd.harness.config import ConfigError, config_from_dict, load_config
from icpd.harness.data import DatasetSpec, make_clusters, make_vae_data
from icpd.harness.demo import UndertrainedError, demo_fig1, perturb_points
from icpd.harness.metrics import accuracy, evaluate_metrics, macro_f1
from icpd.harness.optim import SGD
from icpd.harness.train import (EPOCH_FIELDS, NumericError, build, distill_batch, run, train,
                                train_epoch_baseline, train_epoch_distill)
from icpd.perturb import PerturbConfig

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


# -- data ---------------------------------------------------------------------

def test_cluster_counts_and_determinism():
    spec = DatasetSpec(n_classes=3, points_per_class=200, split=0.8, seed=4)
    tr, te = make_clusters(spec)
    assert len(tr) == 480 and len(te) == 120
    tr2, te2 = make_clusters(spec)
    assert tr.X.tobytes() == tr2.X.tobytes() and np.array_equal(te.y, te2.y)


def test_cluster_means_within_clt_bound():
    spec = DatasetSpec(points_per_class=500, std=0.3, seed=2)
    tr, te = make_clusters(spec)
    X, y = np.concatenate([tr.X, te.X]), np.concatenate([tr.y, te.y])
    for c, center in enumerate(spec.cluster_centers()):
        pts = X[y == c]
        assert np.all(np.abs(pts.mean(axis=0) - center) < 4 * spec.std / math.sqrt(len(pts)))


def test_label_noise_only_touches_train():
    clean_tr, clean_te = make_clusters(DatasetSpec(seed=1))
    spec = DatasetSpec(seed=1, label_noise=0.1)
    noisy_tr, noisy_te = make_clusters(spec)
    assert np.array_equal(clean_te.y, noisy_te.y)
    frac = np.mean(clean_tr.y != noisy_tr.y)
    assert 0.05 < frac < 0.15


def test_dataset_spec_validation():
    for bad in ({"kind": "mnist"}, {"std": 0}, {"split": 1.0}, {"n_classes": 1},
                {"centers": [[0, 0]]}):
        with pytest.raises(ValueError):
            DatasetSpec(**bad)


def test_vae_data_shapes():
    tr, te = make_vae_data(DatasetSpec(kind="synthetic-vae", n_points=100, data_width=5))
    assert tr.X.shape == (80, 5) and te.X.shape == (20, 5) and tr.y is None


# -- metrics ------------------------------------------------------------------

def test_metrics_perfect():
    y = np.array([0, 1, 2, 2])
    assert accuracy(y, y) == 1.0 and macro_f1(y, y) == 1.0


def test_metrics_single_class_prediction():
    y = np.repeat([0, 1, 2], 10)
    pred = np.zeros(30, dtype=int)
    assert accuracy(pred, y) == pytest.approx(1 / 3)
    # per-class: F1_0 = 2*(1/3)/(1+1/3), others 0
    assert macro_f1(pred, y) == pytest.approx((2 * (1 / 3) / (1 + 1 / 3)) / 3)
    assert round(macro_f1(pred, y), 4) == 0.1667


def test_macro_f1_matches_sklearn(rng):
    for _ in range(20):
        y = rng.integers(0, 4, 50)
        pred = rng.integers(0, 5, 50)
        present = np.unique(y)
        expected = f1_score(y, pred, labels=present, average="macro", zero_division=0)
        assert macro_f1(pred, y) == pytest.approx(expected, abs=1e-12)


def test_random_labels_accuracy_near_chance(rng):
    n, c = 3000, 3
    y = rng.integers(0, c, n)
    pred = rng.integers(0, c, n)
    sd = math.sqrt((1 / c) * (1 - 1 / c) / n)
    assert abs(accuracy(pred, y) - 1 / c) < 4 * sd


def test_metrics_reject_empty(trained_mlp):
    model, _ = trained_mlp
    with pytest.raises(ValueError):
        evaluate_metrics(model, (np.zeros((0, 2)), np.zeros(0, dtype=int)))


# -- config -------------------------------------------------------------------

def test_shipped_configs_load():
    for path in CONFIGS.glob("*.json"):
        load_config(path)
    cfg = load_config(CONFIGS / "paper_defaults.json")
    assert (cfg.schedule.k, cfg.perturb.steps, cfg.schedule.weighted, cfg.epochs) == (25, 5, True, 100)


def test_config_unknown_field():
    with pytest.raises(ConfigError, match="perturb.bogus"):
        config_from_dict({"perturb": {"bogus": 1}})
    with pytest.raises(ConfigError, match="unknown field"):
        config_from_dict({"nope": 1})


def test_config_type_and_value_errors():
    with pytest.raises(ConfigError, match="perturb.steps"):
        config_from_dict({"perturb": {"steps": "five"}})
    with pytest.raises(ConfigError, match="perturb.*eps"):
        config_from_dict({"perturb": {"eps": -1}})
    with pytest.raises(ConfigError, match="does not match"):
        config_from_dict({"epochs": 10, "schedule": {"k": 2, "E": 11}})
    with pytest.raises(ConfigError, match="schedule.weighted"):
        config_from_dict({"schedule": {"weighted": 1}})


def test_config_json_error_has_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "epochs": 3,\n  "seed": ,\n}')
    with pytest.raises(ConfigError, match=r"bad.json:3:"):
        load_config(p)


# -- training -------------------------------------------------------------------

def _cfg(**over):
    base = {"epochs": 6, "schedule": {"k": 2}, "dataset": {"points_per_class": 60}}
    base.update(over)
    return config_from_dict(base)


def test_baseline_loss_decreases():
    cfg = _cfg(epochs=5, schedule={"k": 5})
    _, _, records = train(cfg)
    losses = [r.task_loss for r in records]
    assert losses[-1] < losses[0]
    assert all(r.alpha == 1.0 and r.distill_loss == 0.0 for r in records)


def test_phase_boundary_and_records_complete():
    _, _, records = train(_cfg())
    assert [r.epoch for r in records] == list(range(1, 7))
    assert all(r.alpha == 1.0 and r.distill_loss == 0.0 for r in records[:2])
    alphas = [r.alpha for r in records[2:]]
    assert all(b < a for a, b in zip(alphas, alphas[1:])) and alphas[-1] == 0.0
    assert all(r.distill_loss > 0 for r in records[2:])
    for r in records:
        for f in EPOCH_FIELDS:
            v = getattr(r, f)
            assert v is not None and math.isfinite(v)


def test_oracle_first_loss_equals_task_loss():
    cfg = _cfg()
    model, task, _ = build(cfg)
    idx = np.arange(32)
    y = task.train.y[idx]
    for variant in ("sgd-icp", "adam-icp", "ademamix-icp"):
        _, lt, _, traj = distill_batch(model, task, task.train.X[idx], y, PerturbConfig(variant),
                                       DistillSchedule(2, 6), 0.5)
        assert traj[0] == lt


def test_zero_steps_gives_zero_distillation_and_scaled_task_gradient():
    cfg = _cfg()
    model, task, _ = build(cfg)
    idx = np.arange(32)
    x, y = task.train.X[idx], task.train.y[idx]
    sched = DistillSchedule(2, 6)
    g_base, _, _, _ = distill_batch(model, task, x, y, PerturbConfig(steps=0), sched, 1.0)
    g, lt, ld, _ = distill_batch(model, task, x, y, PerturbConfig(steps=0), sched, 0.7)
    assert ld == 0.0
    for k in g:
        np.testing.assert_allclose(g[k], 0.7 * g_base[k], rtol=1e-13, atol=1e-300)
    g0, _, _, _ = distill_batch(model, task, x, y, PerturbConfig(steps=0), sched, 0.0)
    assert all(not v.any() for v in g0.values())


def test_zero_steps_epoch_matches_rescaled_baseline():
    # with momentum 0, a T=0 distillation epoch is a baseline epoch at lr * alpha
    cfg = _cfg(optimizer={"momentum": 0.0})
    sched = DistillSchedule(2, 6)
    e = 4
    alpha = sched.alpha(e)
    m1, task, _ = build(cfg)
    m2, _, _ = build(cfg)
    train_epoch_distill(m1, task, SGD(m1.params, 0.05, 0.0), PerturbConfig(steps=0), sched, e)
    _, rec = train_epoch_baseline(m2, task, SGD(m2.params, 0.05 * alpha, 0.0), e)
    for k, v in m1.params.items():
        np.testing.assert_allclose(v, m2.params[k], rtol=1e-12, atol=1e-14)


def test_distill_epoch_rejects_baseline_epoch():
    model, task, opt = build(_cfg())
    with pytest.raises(ValueError):
        train_epoch_distill(model, task, opt, PerturbConfig(), DistillSchedule(2, 6), 2)


def test_non_finite_training_aborts():
    cfg = _cfg(model={"activation": "relu"}, optimizer={"lr": 1e100, "momentum": 0.0},
               schedule={"k": 6})
    with pytest.raises(NumericError, match="epoch 1, batch"):
        train(cfg)


def test_control_equivalence():
    cfg = _cfg(epochs=4, schedule={"k": 4})
    _, _, run_records = train(cfg)
    model, task, opt = build(cfg)
    base = [train_epoch_baseline(model, task, opt, e, seed=cfg.seed)[1] for e in range(1, 5)]
    for a, b in zip(run_records, base):
        for f in EPOCH_FIELDS[:-1]:
            assert getattr(a, f) == getattr(b, f)


def test_run_outputs_are_deterministic(tmp_path):
    cfg = _cfg()
    run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")

    def rows(d):
        with open(d / "epochs.csv") as fh:
            return [{k: v for k, v in r.items() if k != "seconds"} for r in csv.DictReader(fh)]

    assert rows(tmp_path / "a") == rows(tmp_path / "b")
    ra = json.loads((tmp_path / "a" / "report.json").read_text())
    rb = json.loads((tmp_path / "b" / "report.json").read_text())
    for r in (ra, rb):
        r.pop("total_seconds")
        for e in r["epochs"]:
            e.pop("seconds")
    assert ra == rb
    with open(tmp_path / "a" / "epochs.csv") as fh:
        assert fh.readline().strip() == ",".join(EPOCH_FIELDS)


def test_vae_run_short():
    cfg = config_from_dict({"dataset": {"kind": "synthetic-vae", "n_points": 120}, "epochs": 3,
                            "schedule": {"k": 1}, "perturb": {"variant": "adam-icp"},
                            "optimizer": {"kind": "adam", "lr": 0.005}})
    _, _, records = train(cfg)
    assert records[0].train_acc is None and records[-1].alpha == 0.0
    assert all(math.isfinite(r.task_loss) and math.isfinite(r.test_loss) for r in records)
    assert records[-1].distill_loss > 0


# -- demo -----------------------------------------------------------------------

def test_demo_writes_artifacts(tmp_path):
    cfg = load_config(CONFIGS / "demo_fig1.json")
    cfg.demo.grid = 20
    res = demo_fig1(cfg, tmp_path)
    assert res.acc_icp >= res.acc_original > res.acc_ifgsm
    with open(tmp_path / "grid.csv") as fh:
        grid = list(csv.reader(fh))
    assert grid[0] == ["x", "y", "pred_class"] and len(grid) == 1 + 20 * 20
    with open(tmp_path / "points.csv") as fh:
        pts = list(csv.DictReader(fh))
    assert list(pts[0]) == ["x0", "y0", "x_ifgsm", "y_ifgsm", "x_icp", "y_icp", "label",
                            "pred0", "pred_ifgsm", "pred_icp"]
    assert len(pts) == 600
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["accuracy"]["ifgsm"] == res.acc_ifgsm


def test_demo_zero_eps_leaves_points(trained_mlp):
    model, task = trained_mlp
    a, b = perturb_points(model, task.test, 0.0, 100)
    assert np.array_equal(a, task.test.X) and np.array_equal(b, task.test.X)


def test_demo_rejects_undertrained():
    cfg = load_config(CONFIGS / "demo_fig1.json")
    cfg.epochs = 1
    cfg.demo.min_train_acc = 0.9999
    with pytest.raises(UndertrainedError, match="train accuracy"):
        demo_fig1(cfg)


# -- CLI ------------------------------------------------------------------------

def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def test_cli_run(tmp_path, capsys):
    cfg = _write(tmp_path, {"epochs": 3, "schedule": {"k": 1}, "dataset": {"points_per_class": 40}})
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "epochs.csv").exists() and (tmp_path / "out" / "report.json").exists()
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert len(report["epochs"]) == 3 and report["version"]


def test_cli_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert main(["run", "--config", str(bad)]) == 1
    assert "bad.json:1:" in capsys.readouterr().err
    assert main(["run", "--config", str(_write(tmp_path, {"extra": 1}))]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1


def test_cli_numeric_failure(tmp_path, capsys):
    cfg = _write(tmp_path, {"epochs": 2, "schedule": {"k": 2}, "model": {"activation": "relu"},
                            "optimizer": {"lr": 1e100, "momentum": 0.0}})
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "numeric failure" in capsys.readouterr().err


def test_cli_demo(tmp_path, capsys):
    data = json.loads((CONFIGS / "demo_fig1.json").read_text())
    data["demo"]["grid"] = 10
    assert main(["demo-fig1", "--config", str(_write(tmp_path, data)), "--out", str(tmp_path / "d")]) == 0
    assert json.loads(capsys.readouterr().out)["accuracy"]["icp"] >= 0.95
    data["epochs"] = 1
    data["schedule"]["k"] = 1
    data["demo"]["min_train_acc"] = 0.9999
    assert main(["demo-fig1", "--config", str(_write(tmp_path, data, "u.json")), "--out", str(tmp_path / "u")]) == 2


def test_cli_gradcheck_and_version(capsys):
    assert main(["gradcheck", "--points", "3"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out
    assert main(["version"]) == 0
    assert capsys.readouterr().out.startswith("icpd ")


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "icpd", "version"], capture_output=True, text=True)
    assert out.returncode == 0 and "icpd" in out.stdout


@pytest.mark.slow
def test_paper_defaults_full_run_is_finite():
    cfg = load_config(CONFIGS / "paper_defaults.json")
    _, _, records = train(cfg)
    assert len(records) == cfg.epochs
    for r in records:
        for f in EPOCH_FIELDS:
            assert math.isfinite(getattr(r, f))
    assert records[-1].alpha == 0.0
