"""Evaluation rows and reports, class-conditional readouts, KL evaluation,
and the quadrature bound check."""
from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest

from cooc_atlas.data_model import estimate_pu, generate_synthetic
from cooc_atlas.errors import DataError, NumericalError
from cooc_atlas.evaluation import (
    EvalReport,
    EvalRow,
    class_cond_grid,
    conditional_kl,
    dimension_sweep,
    eval_bandwidths,
    jensen_bound_check,
    kl_eval,
    model_cooc_prob,
    parse_report,
)
from cooc_atlas.kde import DensityEvaluator
from cooc_atlas.trainer import TrainConfig, prepare_table, train
from helpers import make_domains, random_model, random_table, table_from


@pytest.fixture(scope="module")
def trained_pair():
    data = generate_synthetic(15, 15, seed=1, samples=50)
    cfg = TrainConfig(warmup_iters=10, main_iters=10)
    model, _ = train(data.table, cfg)
    prepared = prepare_table(data.table, cfg)
    return model, prepared


# -- rows and reports -------------------------------------------------------


def test_eval_row_rejects_bad_numbers():
    with pytest.raises(NumericalError, match="non-finite"):
        EvalRow(dims=(2, 2), kl=math.nan, bandwidths=(0.1, 0.1), i_p=1.0, i_q=0.5, slack=0.1, seconds=0.0)
    with pytest.raises(NumericalError, match="negative KL"):
        EvalRow(dims=(2, 2), kl=-1.0, bandwidths=(0.1, 0.1), i_p=1.0, i_q=0.5, slack=0.1, seconds=0.0)


def test_report_text_round_trip():
    rows = (
        EvalRow(dims=(2, 2), kl=0.0123456789, bandwidths=(0.11, 0.22), i_p=1.5, i_q=1.2, slack=0.28, seconds=3.25),
        EvalRow(dims=(4, 4), kl=0.005, bandwidths=(0.09, 0.18), i_p=1.5, i_q=1.35, slack=0.145, seconds=7.5),
    )
    report = EvalReport(domain_names=("A", "B"), rows=rows)
    text = report.to_text()
    again = parse_report(text)
    assert again.domain_names == ("A", "B")
    assert len(again.rows) == 2
    for got, want in zip(again.rows, rows):
        assert got.dims == want.dims
        assert got.kl == pytest.approx(want.kl, rel=1e-11)
        assert got.bandwidths == pytest.approx(want.bandwidths, rel=1e-11)
        assert got.slack == pytest.approx(want.slack, rel=1e-11)
    # Round-trip at text level is byte-stable.
    assert again.to_text() == text


def test_parse_report_rejects_malformed_text():
    with pytest.raises(DataError, match="header"):
        parse_report("no header\n")
    good = EvalReport(
        domain_names=("A", "B"),
        rows=(EvalRow(dims=(2,), kl=0.0, bandwidths=(0.1, 0.1), i_p=1.0, i_q=1.0, slack=0.0, seconds=0.0),),
    ).to_text()
    broken = good.splitlines()[0] + "\n1.0\textra\n"
    with pytest.raises(DataError, match="cells"):
        parse_report(broken)


# -- class-conditional readouts ---------------------------------------------


def test_class_cond_grid_is_a_conditional(trained_pair):
    model, prepared = trained_pair
    grid = class_cond_grid(model, prepared)
    assert grid.shape == (2, 15, 15)
    assert np.all(grid > 0)
    assert np.allclose(grid.sum(axis=0), 1.0, atol=1e-12)


def test_class_readouts_require_augmented_inputs():
    rng = np.random.default_rng(0)
    table = random_table(rng, 4, 4)
    plain_model = random_model(rng, (4, 4), dim=1)
    with pytest.raises(DataError, match="class-augmented"):
        class_cond_grid(plain_model, table)
    aug_model = random_model(rng, (4, 4), dim=1, use_c=True)
    with pytest.raises(DataError, match="cooc_prob"):
        class_cond_grid(aug_model, table)
    with pytest.raises(DataError, match="two-domain"):
        class_cond_grid(
            random_model(rng, (3, 3, 3), dim=1, use_c=True),
            estimate_pu(random_table(rng, 3, 3, 3)),
        )


def test_model_cooc_prob_matches_grid_cell(trained_pair):
    model, prepared = trained_pair
    grid = class_cond_grid(model, prepared)
    for i, j in [(0, 0), (7, 3), (14, 14)]:
        got = model_cooc_prob(model, prepared, i, j)
        assert got.shape == (2,)
        assert got.sum() == pytest.approx(1.0, rel=1e-12)
        assert got[1] == pytest.approx(grid[1, i, j], rel=1e-9)
    with pytest.raises(DataError, match="out of range"):
        model_cooc_prob(model, prepared, 15, 0)


def test_model_cooc_prob_coincident_coords_give_global_class_rate():
    # With every coordinate identical the kernels carry no information and
    # the conditional collapses to the class marginal.
    rng = np.random.default_rng(1)
    table = estimate_pu(random_table(rng, 4, 5))
    model = random_model(rng, (4, 5), dim=1, spread=0.0, use_c=True)
    p_c = table.c_joint.sum(axis=(1, 2))
    got = model_cooc_prob(model, table, 2, 3)
    assert got == pytest.approx(p_c, rel=1e-9)


# -- bandwidth policies -----------------------------------------------------


def test_eval_bandwidths_policies(trained_pair):
    model, _ = trained_pair
    assert eval_bandwidths(model, "training") == model.sigmas
    rot = eval_bandwidths(model, "rot")
    assert len(rot) == 2 and all(h > 0 for h in rot)
    with pytest.raises(DataError, match="policy"):
        eval_bandwidths(model, "magic")


def test_eval_bandwidths_coincident_domain_falls_back_to_training_sigma():
    rng = np.random.default_rng(2)
    model = random_model(rng, (4, 4), dim=1, spread=0.0)
    assert eval_bandwidths(model, "rot") == model.sigmas


# -- conditional KL ---------------------------------------------------------


def test_conditional_kl_zero_for_identical_fields():
    p = np.array([[0.2, 0.7], [0.5, 0.9]])
    outer = np.full((2, 2), 0.25)
    assert conditional_kl(p, p.copy(), outer) == 0.0


def test_conditional_kl_hand_value():
    p = np.array([[0.5]])
    q = np.array([[0.25]])
    outer = np.array([[1.0]])
    want = 0.5 * math.log(0.5 / 0.25) + 0.5 * math.log(0.5 / 0.75)
    assert conditional_kl(p, q, outer) == pytest.approx(want, rel=1e-12)


def test_conditional_kl_raises_on_missing_support():
    p = np.array([[0.5, 0.5]])
    q = np.array([[0.0, 0.5]])
    outer = np.full((1, 2), 0.5)
    with pytest.raises(NumericalError, match="zero mass"):
        conditional_kl(p, q, outer)
    with pytest.raises(DataError, match="shape"):
        conditional_kl(p, q, np.ones((2, 2)))


def test_conditional_kl_skips_zero_outer_cells():
    p = np.array([[0.5, 0.5]])
    q = np.array([[0.0, 0.5]])
    outer = np.array([[0.0, 1.0]])  # the undefined cell carries no weight
    assert conditional_kl(p, q, outer) == 0.0


# -- KL evaluation ----------------------------------------------------------


def test_kl_eval_report_contents(trained_pair):
    model, prepared = trained_pair
    report = kl_eval(model, prepared)
    assert report.domain_names == ("A", "B")
    row = report.rows[0]
    assert row.dims == model.dims()
    assert row.kl >= 0.0
    assert row.i_p >= row.i_q - 1e-9  # smoothing cannot create information
    parsed = parse_report(report.to_text())
    assert parsed.rows[0].kl == pytest.approx(row.kl, rel=1e-11)


def test_kl_eval_training_policy_uses_model_sigmas(trained_pair):
    model, prepared = trained_pair
    report = kl_eval(model, prepared, bandwidth_policy="training")
    assert report.rows[0].bandwidths == model.sigmas


def test_kl_eval_uniform_outer(trained_pair):
    model, prepared = trained_pair
    product = kl_eval(model, prepared, outer="product").rows[0].kl
    uniform = kl_eval(model, prepared, outer="uniform").rows[0].kl
    assert uniform >= 0.0 and uniform != pytest.approx(product, rel=1e-6)


def test_dimension_sweep_one_row_per_dimension():
    data = generate_synthetic(12, 12, seed=3, samples=30)
    cfg = TrainConfig(warmup_iters=5, main_iters=5)
    report = dimension_sweep(data.table, cfg, [1, 2])
    assert [row.dims for row in report.rows] == [(1, 1), (2, 2)]
    assert all(row.seconds > 0 for row in report.rows)
    with pytest.raises(DataError, match="at least one"):
        dimension_sweep(data.table, cfg, [])


# -- quadrature bound check -------------------------------------------------


def test_jensen_bound_holds_on_a_small_instance():
    rng = np.random.default_rng(4)
    table = random_table(rng, 3, 3)
    model = random_model(rng, (3, 3), dim=1, spread=0.8, sigma_range=(0.4, 0.8))
    slack = jensen_bound_check(model, table, grid_points=256)
    assert slack >= -1e-3
