import numpy as np
import pytest

from icpd.harness.config import config_from_dict
from icpd.harness.train import build, train_epoch_baseline


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def trained_mlp():
    """Default toy classifier fitted to the 3-cluster task (30 baseline epochs)."""
    cfg = config_from_dict({"epochs": 30, "schedule": {"k": 30}})
    model, task, opt = build(cfg)
    for e in range(1, cfg.epochs + 1):
        train_epoch_baseline(model, task, opt, e, seed=cfg.seed)
    return model, task


def pytest_terminal_summary(terminalreporter):
    from tests import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
