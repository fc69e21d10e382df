"""Shared builders for small deterministic fixtures."""
from __future__ import annotations

import numpy as np

from cooc_atlas.data_model import CoocTable, DomainSpec
from cooc_atlas.kde import EmbeddingModel

DOMAIN_LETTERS = ("A", "B", "C")


def make_domains(*sizes: int) -> tuple[DomainSpec, ...]:
    return tuple(
        DomainSpec(name, tuple(f"{name.lower()}{i}" for i in range(n)))
        for name, n in zip(DOMAIN_LETTERS, sizes)
    )


def table_from(counts: np.ndarray) -> CoocTable:
    counts = np.asarray(counts, dtype=float)
    return CoocTable(make_domains(*counts.shape), counts)


def random_table(rng: np.random.Generator, *sizes: int) -> CoocTable:
    """Positive counts everywhere, so no zero-mass rejection."""
    return table_from(rng.uniform(0.1, 5.0, size=sizes))


def random_model(
    rng: np.random.Generator,
    sizes: tuple[int, ...],
    dim: int = 1,
    spread: float = 0.6,
    sigma_range: tuple[float, float] = (0.6, 1.2),
    use_c: bool = False,
) -> EmbeddingModel:
    """Coupled-kernel regime: sigma comparable to the coordinate spread."""
    domains = make_domains(*sizes)
    coords = tuple(rng.normal(0.0, spread, size=(n, dim)) for n in sizes)
    sigmas = tuple(float(rng.uniform(*sigma_range)) for _ in sizes)
    return EmbeddingModel(domains=domains, coords=coords, sigmas=sigmas, use_c=use_c)
