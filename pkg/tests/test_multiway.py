"""Mode unfoldings, pair marginals, and the total-correlation reduction."""
from __future__ import annotations

import math

import numpy as np
import pytest

from cooc_atlas.data_model import CoocTable
from cooc_atlas.errors import DataError, UnknownEntityError
from cooc_atlas.multiway import TensorView, pair_marginal, total_correlation, unfold
from helpers import make_domains, random_table, table_from


def test_unfold_matches_manual_matricization():
    rng = np.random.default_rng(0)
    table = random_table(rng, 3, 4, 5)
    joint = table.joint_dense()
    for axis, name in enumerate("ABC"):
        got = unfold(table, name)
        want = np.moveaxis(joint, axis, 0).reshape(joint.shape[axis], -1)
        assert np.array_equal(got, want)
        assert got.shape == (joint.shape[axis], joint.size // joint.shape[axis])


def test_unfold_requires_three_domains():
    table = table_from(np.ones((2, 2)))
    with pytest.raises(DataError, match="3-domain"):
        unfold(table, "A")
    with pytest.raises(UnknownEntityError):
        unfold(random_table(np.random.default_rng(0), 3, 3, 3), "Z")


def test_pair_marginal_contracts_the_joint():
    rng = np.random.default_rng(1)
    table = random_table(rng, 3, 4, 5)
    joint = table.joint_dense()
    assert np.allclose(pair_marginal(table, "A", "B"), joint.sum(axis=2))
    assert np.allclose(pair_marginal(table, "A", "C"), joint.sum(axis=1))
    assert np.allclose(pair_marginal(table, "B", "C"), joint.sum(axis=0))
    # Order of arguments picks the output orientation; content is shared.
    assert np.array_equal(
        pair_marginal(table, "C", "A"), pair_marginal(table, "A", "C").T
    )


def test_pair_marginal_on_two_domains_is_the_joint():
    table = table_from(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert np.allclose(pair_marginal(table, "A", "B"), table.joint_dense())


def test_pair_marginal_rejects_repeated_domain():
    table = random_table(np.random.default_rng(2), 3, 3, 3)
    with pytest.raises(DataError, match="distinct"):
        pair_marginal(table, "B", "B")


def test_tensor_view_precomputes_all_slices():
    rng = np.random.default_rng(3)
    table = random_table(rng, 3, 4, 5)
    view = TensorView.from_table(table)
    assert set(view.unfoldings) == {"A", "B", "C"}
    assert set(view.pair_marginals) == {("A", "B"), ("A", "C"), ("B", "C")}
    assert np.array_equal(view.unfoldings["B"], unfold(table, "B"))
    assert np.array_equal(
        view.pair_marginals[("A", "C")], pair_marginal(table, "A", "C")
    )
    with pytest.raises(TypeError):
        view.unfoldings["A"] = None  # mappings are read-only
    with pytest.raises(DataError, match="3-domain"):
        TensorView.from_table(table_from(np.ones((2, 2))))


def test_total_correlation_zero_for_product_tables():
    a = np.array([0.2, 0.3, 0.5])
    b = np.array([0.6, 0.4])
    table = table_from(np.outer(a, b) * 100.0)
    assert total_correlation(table) == pytest.approx(0.0, abs=1e-12)


def test_total_correlation_matches_hand_sum():
    counts = np.array([[4.0, 1.0], [1.0, 4.0]])
    table = table_from(counts)
    joint = counts / counts.sum()
    pa, pb = joint.sum(axis=1), joint.sum(axis=0)
    want = sum(
        joint[i, j] * math.log(joint[i, j] / (pa[i] * pb[j]))
        for i in range(2)
        for j in range(2)
    )
    assert total_correlation(table) == pytest.approx(want, rel=1e-12)
    assert total_correlation(table) > 0


def test_total_correlation_three_domain_nonnegative():
    rng = np.random.default_rng(4)
    table = random_table(rng, 3, 3, 4)
    assert total_correlation(table) >= 0
