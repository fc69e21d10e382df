"""Session-scoped fixtures: the synthetic benchmark and trained models.

The expensive artifacts (50x50 synthetic table, its trained embeddings)
are built once and shared; tests treat them as read-only.
"""
from __future__ import annotations

import sys

import pytest

from cooc_atlas.data_model import generate_synthetic
from cooc_atlas.trainer import TrainConfig, train


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance-criterion verdict lines after the test summary."""
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "CRITERION_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def pair_synth():
    """The 50x50 planted-structure benchmark (ridge + spot + band)."""
    return generate_synthetic(50, 50, seed=7, samples=100)


@pytest.fixture(scope="session")
def recovery_run(pair_synth):
    """Structure-recovery protocol: raw-joint training, noisy SGD, clipping.

    The benchmark trains on the raw joint (no class reweighting), gaussian
    init, no L2, coordinates clipped to [-1, 1]; the readout correlates the
    planted surface with the model density at item coordinates.
    """
    cfg = TrainConfig(
        dims=(2,), lam=0.0, reg_norm="linf", init="gaussian", seed=0, use_c=False
    )
    model, report = train(pair_synth.table, cfg)
    return model, report


@pytest.fixture(scope="session")
def default_run(pair_synth):
    """The stock pipeline (class-augmented, pca init, l2) on the benchmark."""
    model, report = train(pair_synth.table, TrainConfig())
    return model, report
