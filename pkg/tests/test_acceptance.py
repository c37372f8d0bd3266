"""Acceptance criteria 1-9, each at its stated tolerance and time budget.

Every test prints one ``[PASS|FAIL] criterion N: ...`` line (also collected
into the terminal summary) before asserting.
"""
import csv
import dataclasses
import math
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from icpd.distill import alpha_schedule
from icpd.gradcheck import run_gradcheck
from icpd.harness.config import load_config
from icpd.harness.demo import demo_fig1
from icpd.harness.train import EPOCH_FIELDS, build, run, train, train_epoch_baseline
from icpd.models import vae_loss
from icpd.perturb import PerturbConfig, PerturbState, icp_refine, icp_step_adam, icp_step_ademamix
from icpd.tensor import Tensor

from tests.acceptance_log import record

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_criterion_1_gradient_correctness():
    start = time.perf_counter()
    results = run_gradcheck(points=100, h=1e-5, tol=1e-4, seed=0)
    elapsed = time.perf_counter() - start
    names = {r.name for r in results}
    worst = max(results, key=lambda r: r.max_rel_err)
    ok = (all(r.ok and r.points == 100 for r in results) and elapsed < 10.0
          and {"classification_loss", "vae_loss"} <= names)
    record("1", ok, f"{len(results)} cases, worst {worst.name} rel err {worst.max_rel_err:.2e} "
                    f"(< 1e-4), {elapsed:.1f}s (< 10s)")
    assert ok


def test_criterion_2_closed_form_sgd_icp(rng):
    worst = 0.0
    for eps in (0.01, 0.1, 0.5):
        for steps in (1, 5, 50):
            c = rng.normal(size=(4, 3))
            x0 = rng.normal(size=(4, 3))
            oracle = lambda x: (0.5 * float(np.sum((x - c) ** 2)), x - c)
            xT, _ = icp_refine(x0, oracle, PerturbConfig("sgd-icp", eps=eps, steps=steps))
            expected = c + (1 - eps) ** steps * (x0 - c)
            worst = max(worst, float(np.max(np.abs(xT - expected))))
    ok = worst < 1e-12
    record("2", ok, f"max abs error {worst:.2e} over 9 (eps, T) pairs (< 1e-12)")
    assert ok


def test_criterion_3_sign_collapse(rng):
    eps = 0.05
    x = rng.normal(size=50)
    g = rng.normal(size=50)
    oracle = lambda _x: (0.0, g)
    cfg = PerturbConfig("adam-icp", eps=eps, delta=0.0)
    x1, _ = icp_step_adam(x, oracle, cfg, PerturbState.zeros(x.shape))
    err_adam = float(np.max(np.abs((x1 - x) - (-eps * np.sign(g)))))

    cfg_mix = PerturbConfig("ademamix-icp", eps=eps, delta=0.0, alpha_mix=5.0, beta3=0.9999)
    x1m, _ = icp_step_ademamix(x, oracle, cfg_mix, PerturbState.zeros(x.shape))
    factor = 1 + cfg_mix.alpha_mix * (1 - cfg_mix.beta3)
    err_mix = float(np.max(np.abs((x1m - x) - (-eps * np.sign(g) * factor))))

    c = rng.normal(size=(6, 2))
    quad = lambda z: (0.5 * float(np.sum((z - c) ** 2)), z - c)
    x0 = rng.normal(size=(6, 2))
    a = PerturbConfig("adam-icp", eps=0.01, steps=50)
    b = PerturbConfig("ademamix-icp", eps=0.01, steps=50, alpha_mix=0.0)
    xa, la = icp_refine(x0, quad, a)
    xb, lb = icp_refine(x0, quad, b)
    bit_exact = xa.tobytes() == xb.tobytes() and la == lb

    ok = err_adam < 1e-12 and err_mix < 1e-12 and bit_exact
    record("3", ok, f"adam err {err_adam:.1e}, ademamix err {err_mix:.1e} (< 1e-12); "
                    f"alpha_mix=0 bit-exact over 50 steps: {bit_exact}")
    assert ok


def test_criterion_4_schedule_law(rng):
    pairs = [(25, 100)]
    while len(pairs) < 21:
        E = int(rng.integers(2, 300))
        pairs.append((int(rng.integers(0, E)), E))
    bad = []
    for k, E in pairs:
        a = [alpha_schedule(e, k, E) for e in range(1, E + 1)]
        ok = (all(v == 1.0 for v in a[:k]) and a[E - 1] == 0.0
              and all(y < x for x, y in zip(a[k:], a[k + 1:])) and (k == 0 or a[k] < 1.0))
        if not ok:
            bad.append((k, E))
    ok = not bad
    record("4", ok, f"{len(pairs)} (k, E) pairs checked exhaustively, violations: {bad or 'none'}")
    assert ok


@pytest.mark.slow
def test_criterion_5_demo_fig1():
    base = load_config(CONFIGS / "demo_fig1.json")
    assert base.demo.eps == 0.002 and base.demo.steps == 100
    start = time.perf_counter()
    rows = []
    for seed in range(5):
        cfg = dataclasses.replace(base, seed=seed,
                                  dataset=dataclasses.replace(base.dataset, seed=seed))
        res = demo_fig1(cfg)
        rows.append((seed, res.train_acc, res.acc_original, res.acc_ifgsm, res.acc_icp))
    elapsed = time.perf_counter() - start
    ok = elapsed < 180 and all(tr >= 0.95 and orig - adv >= 0.10 and icp >= orig
                               for _, tr, orig, adv, icp in rows)
    detail = "; ".join(f"s{s} train {tr:.3f} orig {o:.3f} ifgsm {a:.3f} icp {i:.3f}"
                       for s, tr, o, a, i in rows)
    record("5", ok, f"{detail}; {elapsed:.1f}s (< 180s)")
    assert ok


def test_criterion_6_control_equivalence():
    cfg = load_config(CONFIGS / "control.json")
    assert cfg.schedule.k == cfg.epochs
    report = run(cfg)
    model, task, opt = build(cfg)
    base = [train_epoch_baseline(model, task, opt, e, seed=cfg.seed,
                                 batch_size=cfg.optimizer.batch_size)[1]
            for e in range(1, cfg.epochs + 1)]
    fields = [f for f in EPOCH_FIELDS if f != "seconds"]
    mismatches = [(a.epoch, f) for a, b in zip(report.epochs, base) for f in fields
                  if getattr(a, f) != getattr(b, f)]
    ok = len(report.epochs) == len(base) == cfg.epochs and not mismatches
    record("6", ok, f"{cfg.epochs} control epochs vs baseline trainer, "
                    f"{len(mismatches)} mismatching fields")
    assert ok


@pytest.mark.slow
def test_criterion_7_directional_benefit():
    base = load_config(CONFIGS / "hardened.json")
    assert (base.schedule.k, base.epochs, base.perturb.steps, base.schedule.weighted) == (5, 20, 5, True)
    start = time.perf_counter()

    def median_acc(schedule_k, variant):
        accs = []
        for seed in range(5):
            cfg = dataclasses.replace(
                base, seed=seed,
                dataset=dataclasses.replace(base.dataset, seed=seed),
                schedule=dataclasses.replace(base.schedule, k=schedule_k),
                perturb=dataclasses.replace(base.perturb, variant=variant))
            accs.append(train(cfg)[2][-1].test_acc)
        return statistics.median(accs)

    control = median_acc(base.epochs, base.perturb.variant)
    medians = {v: median_acc(base.schedule.k, v) for v in ("sgd-icp", "adam-icp", "ademamix-icp")}
    elapsed = time.perf_counter() - start
    ok = (all(m >= control - 0.005 for m in medians.values())
          and any(m >= control for m in medians.values()) and elapsed < 900)
    detail = ", ".join(f"{v} {m:.4f}" for v, m in medians.items())
    record("7", ok, f"control median {control:.4f}; {detail}; {elapsed:.1f}s (< 900s)")
    assert ok


def test_criterion_8_vae_smoke():
    cfg = load_config(CONFIGS / "vae_smoke.json")
    assert cfg.epochs == 20 and cfg.dataset.kind == "synthetic-vae"
    _, _, records = train(cfg)
    finite = all(math.isfinite(r.task_loss) and math.isfinite(r.distill_loss)
                 and math.isfinite(r.test_loss) for r in records)
    distilled = [r for r in records if r.epoch > cfg.schedule.k]
    x = np.random.default_rng(0).normal(size=(7, 5))
    zero = vae_loss(Tensor(x), x, Tensor(np.zeros((7, 2))), Tensor(np.zeros((7, 2)))).item()
    ok = len(records) == 20 and finite and all(r.distill_loss > 0 for r in distilled) and zero == 0.0
    record("8", ok, f"{len(records)} epochs, all losses finite: {finite}, "
                    f"final test loss {records[-1].test_loss:.4f}, vae_loss at identity = {zero!r}")
    assert ok


def test_criterion_9_determinism(tmp_path):
    cfg = load_config(CONFIGS / "smoke.json")
    run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")

    def table(d):
        with open(d / "epochs.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        col = rows[0].index("seconds")
        return [r[:col] + r[col + 1:] for r in rows]

    ta, tb = table(tmp_path / "a"), table(tmp_path / "b")
    ok = ta == tb and len(ta) == cfg.epochs + 1
    record("9", ok, f"epochs.csv identical except seconds across two runs ({cfg.epochs} epochs)")
    assert ok
