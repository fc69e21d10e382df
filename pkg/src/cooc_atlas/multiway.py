"""Three-domain tensor views: mode unfoldings, pair marginals, total correlation.

Thin coordination layer; the math lives in the objective and density modules
and is parameterized by domain count.
"""

from __future__ import annotations

import dataclasses
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .data_model import CoocTable
from .errors import DataError
from .objective import discrete_total_correlation


def unfold(table: CoocTable, mode: str) -> np.ndarray:
    """Matricize the 3-domain joint: rows = the mode's items, columns = the
    flattened remaining pair (row-major over the other axes in table order)."""
    if table.n_domains != 3:
        raise DataError(f"unfold needs a 3-domain table, got {table.n_domains} domains")
    axis = table.domain_axis(mode)
    joint = table.joint_dense()
    return np.moveaxis(joint, axis, 0).reshape(joint.shape[axis], -1)


def pair_marginal(table: CoocTable, first: str, second: str) -> np.ndarray:
    """Exact contraction of the joint onto two domains, in table axis order."""
    a1, a2 = table.domain_axis(first), table.domain_axis(second)
    if a1 == a2:
        raise DataError(f"pair marginal needs two distinct domains, got {first!r} twice")
    drop = tuple(a for a in range(table.n_domains) if a not in (a1, a2))
    out = table.joint_dense().sum(axis=drop)
    return out.T if a1 > a2 else out


@dataclasses.dataclass(frozen=True)
class TensorView:
    """Precomputed mode unfoldings and pair marginals of a 3-domain joint."""

    unfoldings: Mapping[str, np.ndarray]
    pair_marginals: Mapping[tuple[str, str], np.ndarray]

    @classmethod
    def from_table(cls, table: CoocTable) -> "TensorView":
        if table.n_domains != 3:
            raise DataError(f"TensorView needs a 3-domain table, got {table.n_domains} domains")
        names = [d.name for d in table.domains]
        unfoldings = {name: unfold(table, name) for name in names}
        pairs = {}
        for i in range(3):
            for j in range(i + 1, 3):
                pairs[(names[i], names[j])] = pair_marginal(table, names[i], names[j])
        return cls(
            unfoldings=MappingProxyType(unfoldings),
            pair_marginals=MappingProxyType(pairs),
        )


def total_correlation(table: CoocTable) -> float:
    """sum P log P/(prod marginals) over the table's joint; reduces to plain
    mutual information for 2 domains."""
    return discrete_total_correlation(table.joint_dense())
