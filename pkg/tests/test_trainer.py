"""Training configuration, initialization, the two-phase loop, and its
failure modes."""
from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest

from cooc_atlas.data_model import estimate_pu, generate_synthetic
from cooc_atlas.errors import DataError, NumericalError
from cooc_atlas.trainer import (
    NoiseSchedule,
    SigmaPolicy,
    TrainConfig,
    init_embeddings,
    pca_scores,
    prepare_from_provenance,
    prepare_table,
    train,
    train_multiway,
)
from helpers import random_table, table_from

QUICK = TrainConfig(warmup_iters=3, main_iters=3, use_c=False)


# -- sigma policy -----------------------------------------------------------


def test_sigma_policy_fixed_ignores_coordinates():
    policy = SigmaPolicy(mode="fixed", value=0.7)
    assert policy.derive(np.zeros((5, 2))) == 0.7
    assert policy.initial() == 0.7


def test_sigma_policy_variance_fraction_with_floor():
    policy = SigmaPolicy(mode="variance_fraction", value=0.5, floor=0.01)
    coords = np.array([[0.0, 0.0], [2.0, 0.0], [-2.0, 0.0], [0.0, 0.0]])
    mean_var = float(np.mean(np.var(coords, axis=0)))
    assert policy.derive(coords) == pytest.approx(0.5 * mean_var)
    assert policy.derive(np.zeros((4, 2))) == 0.01  # floored when coincident
    assert policy.initial() == 0.01


def test_sigma_policy_validation():
    with pytest.raises(DataError, match="mode"):
        SigmaPolicy(mode="adaptive")
    with pytest.raises(DataError, match="value"):
        SigmaPolicy(value=0.0)
    with pytest.raises(DataError, match="floor"):
        SigmaPolicy(floor=-1.0)


# -- noise schedule ---------------------------------------------------------


def test_noise_schedule_anneals_to_zero():
    sched = NoiseSchedule(initial=0.1, decay=2.0)
    assert sched.amplitude(0, 10) == 0.1
    assert sched.amplitude(5, 10) == pytest.approx(0.1 * 0.25)
    assert sched.amplitude(10, 10) == 0.0
    assert sched.amplitude(0, 0) == 0.0


def test_noise_schedule_validation():
    with pytest.raises(DataError):
        NoiseSchedule(initial=-0.1)
    with pytest.raises(DataError):
        NoiseSchedule(decay=0.0)


# -- train config -----------------------------------------------------------


def test_config_defaults_are_usable():
    cfg = TrainConfig()
    assert cfg.dims == (2,)
    assert cfg.use_c is True
    assert cfg.dims_for(3) == (2, 2, 2)


def test_config_dims_broadcast_and_mismatch():
    cfg = TrainConfig(dims=(2, 3))
    assert cfg.dims_for(2) == (2, 3)
    with pytest.raises(DataError, match="dims"):
        cfg.dims_for(3)


@pytest.mark.parametrize(
    "kwargs, message",
    [
        ({"dims": ()}, "dims"),
        ({"dims": (0,)}, "dims"),
        ({"lam": -1.0}, "lambda"),
        ({"reg_norm": "l1"}, "regularizer"),
        ({"diffusion_steps": 0}, "diffusion_steps"),
        ({"init": "spectral"}, "init"),
        ({"init_scale_frac": 0.001}, "init_scale_frac"),
        ({"init_scale_frac": 0.5}, "init_scale_frac"),
        ({"warmup_iters": -1}, "iteration"),
        ({"warmup_iters": 0, "main_iters": 0}, "iteration"),
        ({"step_size": 0.0}, "step_size"),
    ],
)
def test_config_validation(kwargs, message):
    with pytest.raises(DataError, match=message):
        TrainConfig(**kwargs)


# -- preparation ------------------------------------------------------------


def test_prepare_adds_class_estimate_only_when_asked():
    rng = np.random.default_rng(1)
    table = random_table(rng, 5, 4)
    plain = prepare_table(table, TrainConfig(use_c=False))
    assert plain.cooc_prob is None
    augmented = prepare_table(table, TrainConfig(use_c=True))
    assert augmented.cooc_prob is not None


def test_prepare_passes_through_prepared_tables():
    table = estimate_pu(table_from(np.ones((3, 3))))
    assert prepare_table(table, TrainConfig()) is table


def test_prepare_from_provenance_reproduces_weights():
    rng = np.random.default_rng(2)
    table = random_table(rng, 6, 5)
    cfg = TrainConfig(warmup_iters=2, main_iters=2, diffusion_steps=2)
    model, _ = train(table, cfg)
    again = prepare_from_provenance(table, model.provenance)
    assert again.weights_hash(cfg.use_c) == model.weights_hash


# -- initialization ---------------------------------------------------------


def test_pca_scores_shape_and_centering():
    rng = np.random.default_rng(3)
    matrix = rng.normal(size=(8, 5))
    scores, deficient = pca_scores(matrix, 2)
    assert scores.shape == (8, 2)
    assert deficient == ()
    assert np.allclose(scores.mean(axis=0), 0.0, atol=1e-12)


def test_pca_scores_flags_rank_deficient_directions():
    matrix = np.outer(np.arange(6.0), np.ones(4))  # rank 1 after centering
    scores, deficient = pca_scores(matrix, 3)
    assert scores.shape == (6, 3)
    assert len(deficient) >= 1


def test_init_embeddings_deterministic_and_scaled():
    rng = np.random.default_rng(4)
    table = random_table(rng, 40, 30)
    cfg = TrainConfig(init="gaussian", seed=5, use_c=False)
    a = init_embeddings(table, cfg)
    b = init_embeddings(table, cfg)
    for xa, xb in zip(a.coords, b.coords):
        assert np.array_equal(xa, xb)
    target = cfg.init_scale_frac * cfg.sigma_policy.initial()
    spread = float(np.std(a.coords[0]))
    assert 0.5 * target < spread < 2.0 * target
    assert all(s > 0 for s in a.sigmas)


def test_init_embeddings_pca_matches_requested_spread():
    rng = np.random.default_rng(5)
    table = random_table(rng, 20, 15)
    cfg = TrainConfig(init="pca", use_c=False)
    model = init_embeddings(table, cfg)
    target = cfg.init_scale_frac * cfg.sigma_policy.initial()
    got = float(np.sqrt(np.mean(np.var(model.coords[0], axis=0))))
    assert got == pytest.approx(target, rel=1e-6)


# -- training loop ----------------------------------------------------------


def test_train_report_traces_match_iteration_counts():
    rng = np.random.default_rng(6)
    table = random_table(rng, 8, 7)
    cfg = dataclasses.replace(QUICK, warmup_iters=4, main_iters=2)
    model, report = train(table, cfg)
    assert len(report.warmup_trace) == 4
    assert len(report.main_trace) == 2
    assert report.converged and report.aborted_epoch is None
    assert report.wall_clock > 0
    assert len(report.final_sigmas) == 2
    assert len(report.log_lines) == 6
    assert math.isfinite(report.final_objective.total)


def test_train_stamps_provenance_and_weights_hash():
    rng = np.random.default_rng(7)
    table = random_table(rng, 6, 5)
    model, _ = train(table, QUICK)
    prepared = prepare_table(table, QUICK)
    assert model.weights_hash == prepared.weights_hash(QUICK.use_c)
    assert model.use_c is False
    for key in ("dims", "seed", "step_size", "use_c", "diffusion_steps"):
        assert key in model.provenance


def test_train_is_seed_deterministic():
    rng = np.random.default_rng(8)
    table = random_table(rng, 6, 5)
    cfg = dataclasses.replace(QUICK, init="gaussian", seed=3)
    m1, _ = train(table, cfg)
    m2, _ = train(table, cfg)
    assert m1.to_bytes() == m2.to_bytes()
    m3, _ = train(table, dataclasses.replace(cfg, seed=4))
    assert m1.to_bytes() != m3.to_bytes()


def test_train_sup_norm_keeps_coordinates_in_the_box():
    rng = np.random.default_rng(9)
    table = random_table(rng, 8, 6)
    cfg = dataclasses.replace(QUICK, reg_norm="linf", step_size=50.0, main_iters=10)
    model, _ = train(table, cfg)
    for x in model.coords:
        assert np.all(np.abs(x) <= 1.0 + 1e-12)


def test_train_rejects_dims_domain_mismatch():
    rng = np.random.default_rng(10)
    table = random_table(rng, 5, 5)
    with pytest.raises(DataError, match="dims"):
        train(table, dataclasses.replace(QUICK, dims=(2, 2, 2)))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_sentinel_attaches_partial_report():
    data = generate_synthetic(12, 12, seed=0, samples=40)
    cfg = dataclasses.replace(QUICK, warmup_iters=0, main_iters=60, step_size=1e9)
    with pytest.raises(NumericalError) as excinfo:
        train(data.table, cfg)
    report = excinfo.value.report
    assert report.converged is False
    assert report.aborted_epoch is not None
    assert report.abort_reason


def test_train_multiway_requires_three_domains():
    rng = np.random.default_rng(11)
    with pytest.raises(DataError, match="3-domain"):
        train_multiway(random_table(rng, 5, 5), QUICK)
    model, report = train_multiway(random_table(rng, 4, 4, 4), QUICK)
    assert model.n_domains == 3
    assert report.converged
