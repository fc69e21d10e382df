"""Co-occurrence tables over 2 or 3 item domains.

Covers the full data path in front of training: loading/saving the canonical
tab-separated format, estimating co-/non-co-occurrence probabilities from
positive-only counts, densifying sparse tables by Markov diffusion on the
bipartite co-occurrence graph, and generating the synthetic benchmark data.

All public types are immutable after construction; operations return new
objects. Arrays handed out are flagged non-writeable.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import os
from types import MappingProxyType
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import DataError, UnknownEntityError

DOMAIN_NAMES = ("A", "B", "C")

DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 10.0

# Portable 64-bit generator used everywhere randomness is needed; the name is
# recorded in synthetic sidecar files so fixtures can be reproduced elsewhere.
PRNG_NAME = "pcg64"

_MASS_TOL = 1e-9


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclasses.dataclass(frozen=True)
class DomainSpec:
    """One item domain: a stable, ordered vocabulary.

    The item order defines the index <-> identifier mapping used by every
    table and model that references this domain.
    """

    name: str
    items: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.items) < 2:
            raise DataError(f"domain {self.name!r} needs at least 2 items, got {len(self.items)}")
        seen: set[str] = set()
        for item in self.items:
            if item in seen:
                raise DataError(f"duplicate item {item!r} in domain {self.name!r}")
            seen.add(item)

    @property
    def size(self) -> int:
        return len(self.items)

    def index_of(self, item: str) -> int:
        try:
            return self._index[item]
        except KeyError:
            raise UnknownEntityError(f"unknown item {item!r} in domain {self.name!r}") from None

    @property
    def _index(self) -> dict[str, int]:
        # Built once on first use; the dataclass is frozen so cache via __dict__.
        cached = self.__dict__.get("_index_cache")
        if cached is None:
            cached = {item: i for i, item in enumerate(self.items)}
            object.__setattr__(self, "_index_cache", cached)
        return cached


@dataclasses.dataclass(frozen=True)
class PuConfig:
    """Beta-prior pseudo-counts for the positive/negative class estimate."""

    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise DataError(f"alpha must be positive and finite, got {self.alpha}")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise DataError(f"beta must be positive and finite, got {self.beta}")


class CoocTable:
    """Empirical co-occurrence counts and derived probabilities.

    Counts are held sparsely (index-tuple -> count) for loaded data; dense
    views are materialized lazily and cached. Tables produced by diffusion are
    dense by nature and carry real-valued counts. After ``estimate_pu`` the
    table additionally holds ``cooc_prob`` = P(c=1 | items) and the full joint
    P(c, items) used as training weights.
    """

    def __init__(
        self,
        domains: tuple[DomainSpec, ...],
        counts: Mapping[tuple[int, ...], float] | np.ndarray,
        cooc_prob: np.ndarray | None = None,
        c_joint: np.ndarray | None = None,
    ) -> None:
        if len(domains) not in (2, 3):
            raise DataError(f"tables support 2 or 3 domains, got {len(domains)}")
        self._domains = tuple(domains)
        self._cache: dict[str, object] = {}
        shape = tuple(d.size for d in domains)

        if isinstance(counts, np.ndarray):
            if counts.shape != shape:
                raise DataError(f"counts shape {counts.shape} does not match domains {shape}")
            if np.any(counts < 0) or not np.all(np.isfinite(counts)):
                raise DataError("counts must be finite and nonnegative")
            self._dense = _frozen(counts.astype(float))
            self._sparse: Mapping[tuple[int, ...], float] | None = None
        else:
            clean: dict[tuple[int, ...], float] = {}
            for idx, c in counts.items():
                if len(idx) != len(shape) or any(not (0 <= k < n) for k, n in zip(idx, shape)):
                    raise DataError(f"count index {idx} out of range for shape {shape}")
                c = float(c)
                if c < 0 or not math.isfinite(c):
                    raise DataError(f"count at {idx} must be finite and nonnegative, got {c}")
                if c != 0.0:
                    clean[tuple(int(k) for k in idx)] = c
            self._sparse = MappingProxyType(clean)
            self._dense = None

        total = float(self._dense.sum()) if self._dense is not None else float(sum(self._sparse.values()))
        if total <= 0:
            raise DataError("table has no mass: all counts are zero")
        self._total = total

        for axis, dom in enumerate(self._domains):
            mass = self.count_marginal(axis)
            dead = np.flatnonzero(mass == 0)
            if dead.size:
                raise DataError(f"zero-mass item {dom.items[dead[0]]!r} in domain {dom.name!r}")

        if cooc_prob is not None:
            if cooc_prob.shape != shape:
                raise DataError(f"cooc_prob shape {cooc_prob.shape} does not match domains {shape}")
            if not (np.all(cooc_prob > 0) and np.all(cooc_prob < 1)):
                raise DataError("cooc_prob entries must lie strictly inside (0, 1)")
            cooc_prob = _frozen(cooc_prob.astype(float))
        if (cooc_prob is None) != (c_joint is None):
            raise DataError("cooc_prob and c_joint must be set together")
        if c_joint is not None:
            if c_joint.shape != (2,) + shape:
                raise DataError(f"c_joint shape {c_joint.shape} must be (2,) + {shape}")
            c_joint = _frozen(c_joint.astype(float))
        self._cooc_prob = cooc_prob
        self._c_joint = c_joint

    # -- structure -------------------------------------------------------

    @property
    def domains(self) -> tuple[DomainSpec, ...]:
        return self._domains

    @property
    def n_domains(self) -> int:
        return len(self._domains)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(d.size for d in self._domains)

    @property
    def total_count(self) -> float:
        return self._total

    def domain(self, name: str) -> DomainSpec:
        for d in self._domains:
            if d.name == name:
                return d
        raise UnknownEntityError(f"unknown domain {name!r}; have {[d.name for d in self._domains]}")

    def domain_axis(self, name: str) -> int:
        for axis, d in enumerate(self._domains):
            if d.name == name:
                return axis
        raise UnknownEntityError(f"unknown domain {name!r}; have {[d.name for d in self._domains]}")

    # -- counts and probabilities ---------------------------------------

    @property
    def counts(self) -> Mapping[tuple[int, ...], float]:
        """Sparse view of the counts (built on demand for dense tables)."""
        if self._sparse is None:
            sparse = {
                tuple(int(k) for k in idx): float(self._dense[idx])
                for idx in zip(*np.nonzero(self._dense))
            }
            self._sparse = MappingProxyType(sparse)
        return self._sparse

    def counts_dense(self) -> np.ndarray:
        if self._dense is None:
            dense = np.zeros(self.shape)
            for idx, c in self._sparse.items():
                dense[idx] = c
            self._dense = _frozen(dense)
        return self._dense

    def count_marginal(self, axis: int) -> np.ndarray:
        key = f"count_marginal_{axis}"
        if key not in self._cache:
            other = tuple(a for a in range(len(self.shape)) if a != axis)
            self._cache[key] = _frozen(self.counts_dense().sum(axis=other))
        return self._cache[key]  # type: ignore[return-value]

    def joint_dense(self) -> np.ndarray:
        """P(items): counts normalized to sum to 1."""
        if "joint" not in self._cache:
            self._cache["joint"] = _frozen(self.counts_dense() / self._total)
        return self._cache["joint"]  # type: ignore[return-value]

    def marginal(self, axis: int) -> np.ndarray:
        """Per-domain probability vector, the exact axis-sum of the joint."""
        key = f"marginal_{axis}"
        if key not in self._cache:
            other = tuple(a for a in range(len(self.shape)) if a != axis)
            self._cache[key] = _frozen(self.joint_dense().sum(axis=other))
        return self._cache[key]  # type: ignore[return-value]

    @property
    def cooc_prob(self) -> np.ndarray | None:
        """P(c=1 | items), set by ``estimate_pu``; None until then."""
        return self._cooc_prob

    @property
    def c_joint(self) -> np.ndarray | None:
        """P(c, items) with c on the leading axis, set by ``estimate_pu``."""
        return self._c_joint

    def weights(self, use_c: bool) -> np.ndarray:
        """Mixture/training weight tensor: P(c, items) or plain P(items)."""
        if use_c:
            if self._c_joint is None:
                raise DataError("cooc_prob is unset; run estimate_pu before using c-augmented weights")
            return self._c_joint
        return self.joint_dense()

    def weights_hash(self, use_c: bool) -> str:
        w = self.weights(use_c)
        h = hashlib.sha256()
        h.update(str(w.shape).encode())
        h.update(np.ascontiguousarray(w).tobytes())
        return h.hexdigest()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CoocTable):
            return NotImplemented
        return (
            self._domains == other._domains
            and np.array_equal(self.counts_dense(), other.counts_dense())
            and (
                (self._cooc_prob is None and other._cooc_prob is None)
                or (
                    self._cooc_prob is not None
                    and other._cooc_prob is not None
                    and np.array_equal(self._cooc_prob, other._cooc_prob)
                    and np.array_equal(self._c_joint, other._c_joint)
                )
            )
        )

    def __repr__(self) -> str:
        dims = "x".join(str(n) for n in self.shape)
        pu = "+pu" if self._cooc_prob is not None else ""
        return f"CoocTable({dims}{pu}, total={self._total:g})"


# ---------------------------------------------------------------------------
# Loading and saving


def load_cooc_table(path: str | os.PathLike, order: int) -> CoocTable:
    """Load the canonical tab-separated format.

    Each record line is ``itemA<TAB>itemB[<TAB>itemC]<TAB>count``; ``#`` lines
    and blank lines are ignored. Domains are inferred per column with item
    indices assigned by first appearance; duplicate tuples aggregate.
    """
    if order not in (2, 3):
        raise DataError(f"order must be 2 or 3, got {order}")
    ncols = order + 1

    item_order: list[dict[str, int]] = [{} for _ in range(order)]
    counts: dict[tuple[int, ...], float] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\r\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                cols = line.split("\t")
                if len(cols) != ncols:
                    raise DataError(
                        f"{path}:{lineno}: expected {ncols} tab-separated columns for "
                        f"order {order}, got {len(cols)}"
                    )
                if any(c == "" for c in cols[:-1]):
                    raise DataError(f"{path}:{lineno}: empty item identifier")
                try:
                    count = float(cols[-1])
                except ValueError:
                    raise DataError(f"{path}:{lineno}: count {cols[-1]!r} is not a number") from None
                if not math.isfinite(count):
                    raise DataError(f"{path}:{lineno}: count must be finite, got {cols[-1]!r}")
                if count < 0:
                    raise DataError(f"{path}:{lineno}: negative count {cols[-1]!r}")
                idx = tuple(
                    item_order[col].setdefault(item, len(item_order[col]))
                    for col, item in enumerate(cols[:-1])
                )
                counts[idx] = counts.get(idx, 0.0) + count
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not valid UTF-8: {exc}") from None

    if not counts:
        raise DataError(f"{path}: no records found")
    domains = tuple(
        DomainSpec(DOMAIN_NAMES[col], tuple(item_order[col])) for col in range(order)
    )
    return CoocTable(domains, counts)


def _format_count(c: float) -> str:
    return str(int(c)) if c == int(c) and abs(c) < 1e15 else repr(c)


def save_cooc_table(table: CoocTable, path: str | os.PathLike) -> None:
    """Write the canonical format: data lines sorted by item identifiers.

    Sorting by identifier strings (not indices) makes save∘load∘save
    byte-stable whatever index order the table was built with. Written
    atomically (temp file + rename).
    """
    rows = sorted(
        (tuple(d.items[k] for d, k in zip(table.domains, idx)), c)
        for idx, c in table.counts.items()
    )
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        for names, c in rows:
            fh.write("\t".join(names) + "\t" + _format_count(c) + "\n")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# PU estimation


@dataclasses.dataclass(frozen=True)
class NegativeCounts:
    """Rank-1 estimate of non-co-occurrence counts.

    N0(tuple) = scale · ∏_domain P(item | c=1); kept in factored form so large
    tables never materialize the full tensor unless asked to.
    """

    scale: float
    factors: tuple[np.ndarray, ...]

    def at(self, idx: tuple[int, ...]) -> float:
        out = self.scale
        for f, k in zip(self.factors, idx):
            out *= f[k]
        return out

    def dense(self) -> np.ndarray:
        out = np.array(self.scale)
        ndim = len(self.factors)
        for axis, f in enumerate(self.factors):
            shape = [1] * ndim
            shape[axis] = f.size
            out = out * f.reshape(shape)
        return out


def estimate_negative_counts(table: CoocTable, cfg: PuConfig = PuConfig()) -> NegativeCounts:
    """Estimate N0 under independence of the positive-class marginals."""
    n1_total = table.total_count
    factors = tuple(
        _frozen(table.count_marginal(axis) / n1_total) for axis in range(table.n_domains)
    )
    return NegativeCounts(scale=(cfg.beta / cfg.alpha) * n1_total, factors=factors)


def estimate_pu(table: CoocTable, cfg: PuConfig = PuConfig()) -> CoocTable:
    """Fill ``cooc_prob`` with the MAP estimate of P(c=1 | items).

    P(c=1|·) = (N1 + α) / (N1 + N0 + α + β) with N0 from
    ``estimate_negative_counts``; also stores the full joint
    P(c, items) = P(c|items) · ∏ marginals, the weight tensor used by
    c-augmented training.
    """
    n1 = table.counts_dense()
    n0 = estimate_negative_counts(table, cfg).dense()
    cooc = (n1 + cfg.alpha) / (n1 + n0 + cfg.alpha + cfg.beta)

    outer = np.array(1.0)
    ndim = table.n_domains
    for axis in range(ndim):
        shape = [1] * ndim
        shape[axis] = table.shape[axis]
        outer = outer * table.marginal(axis).reshape(shape)
    c_joint = np.stack([(1.0 - cooc) * outer, cooc * outer])
    return CoocTable(table.domains, table.counts_dense(), cooc_prob=cooc, c_joint=c_joint)


# ---------------------------------------------------------------------------
# Markov diffusion


def markov_diffuse(table: CoocTable, steps: int) -> CoocTable:
    """Smooth the joint by m-step alternating random walks.

    Walks alternate between the first domain and the (joint of the) remaining
    domain(s): step probabilities are the row/column conditionals of the joint.
    m=1 is the identity and returns a verbatim copy; m=2 fills in indirect
    co-occurrence along paths a_i -> b_j' -> a_i' -> b_j. The result keeps
    ``total_count`` calibrated (counts' = diffused joint · total), with
    ``cooc_prob`` left unset.
    """
    if steps < 1:
        raise DataError(f"diffusion steps must be >= 1, got {steps}")
    if steps == 1:
        return CoocTable(table.domains, table.counts_dense())

    joint = table.joint_dense()
    flat = joint.reshape(joint.shape[0], -1)

    row_mass = flat.sum(axis=1)
    col_mass = flat.sum(axis=0)
    # Zero-mass rows/columns cannot carry a walk; construction normally rejects
    # them, but guard against hand-built tables.
    if np.any(row_mass == 0):
        bad = int(np.flatnonzero(row_mass == 0)[0])
        raise DataError(f"zero-mass item {table.domains[0].items[bad]!r} blocks diffusion")
    if np.any(col_mass == 0):
        raise DataError("zero-mass column blocks diffusion")

    fwd = flat / row_mass[:, None]  # P(other | first)
    back = (flat / col_mass[None, :]).T  # P(first | other)

    walked = fwd
    for _ in range(steps - 1):
        walked = (walked @ back) @ fwd
    diffused = (row_mass[:, None] * walked).reshape(joint.shape)
    return CoocTable(table.domains, diffused * table.total_count)


# ---------------------------------------------------------------------------
# Synthetic benchmark data


@dataclasses.dataclass(frozen=True)
class SyntheticParams:
    """Shape parameters of the planted pair structure on [0,1]^2.

    f(u, v) = min(1, baseline + diagonal ridge + off-diagonal spot +
    horizontal band); the band is independent of u over a v-interval.
    """

    baseline: float = 0.01
    ridge_amp: float = 0.9
    ridge_width: float = 0.06
    spot_amp: float = 0.8
    spot_center: tuple[float, float] = (0.8, 0.2)
    spot_width: float = 0.06
    band_amp: float = 0.5
    band_v: tuple[float, float] = (0.55, 0.7)

    def evaluate(self, u, v) -> np.ndarray:
        """Ground-truth co-occurrence probability at latent (u, v)."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        f = np.full(np.broadcast_shapes(u.shape, v.shape), self.baseline)
        f = f + self.ridge_amp * np.exp(-((u - v) ** 2) / (2 * self.ridge_width**2))
        su, sv = self.spot_center
        f = f + self.spot_amp * np.exp(
            -((u - su) ** 2 + (v - sv) ** 2) / (2 * self.spot_width**2)
        )
        lo, hi = self.band_v
        f = f + self.band_amp * ((v >= lo) & (v <= hi))
        return np.minimum(f, 1.0)


@dataclasses.dataclass(frozen=True)
class SyntheticData:
    """A generated benchmark table plus its ground truth."""

    table: CoocTable
    params: SyntheticParams
    positions: tuple[np.ndarray, ...]
    seed: int
    samples: int

    @property
    def f(self) -> Callable[..., np.ndarray]:
        return self.params.evaluate

    def truth_grid(self) -> np.ndarray:
        """f evaluated at every cell's latent position pair."""
        u, v = self.positions[0], self.positions[1]
        return self.params.evaluate(u[:, None], v[None, :])


def _item_names(prefix: str, n: int) -> tuple[str, ...]:
    width = len(str(n - 1))
    return tuple(f"{prefix}{i:0{width}d}" for i in range(n))


def _repair_zero_mass(counts: np.ndarray, f_grid: np.ndarray) -> None:
    """Give every item at least one count, at its most probable partner cell.

    Vanishingly rare at the default sampling depth, but keeps the generated
    table loadable under the zero-mass rejection rule. Deterministic.
    """
    for axis in range(counts.ndim):
        other = tuple(a for a in range(counts.ndim) if a != axis)
        mass = counts.sum(axis=other)
        for i in np.flatnonzero(mass == 0):
            sl = [slice(None)] * counts.ndim
            sl[axis] = i
            sub = f_grid[tuple(sl)]
            j = np.unravel_index(int(np.argmax(sub)), sub.shape)
            full = list(j)
            full.insert(axis, i)
            counts[tuple(full)] = 1


def generate_synthetic(
    n_a: int,
    n_b: int,
    seed: int,
    samples: int,
    params: SyntheticParams = SyntheticParams(),
) -> SyntheticData:
    """Draw the 2-domain benchmark: planted structure plus sampling noise.

    Row/column latent positions are uniform on [0,1]; each cell's count is
    Binomial(samples, f(u_i, v_j)). Deterministic for a fixed seed.
    """
    if n_a < 10 or n_b < 10:
        raise DataError(f"synthetic domains need >= 10 items, got {n_a}x{n_b}")
    if samples < 1:
        raise DataError(f"samples must be >= 1, got {samples}")
    rng = _rng(seed)
    u = np.sort(rng.uniform(0.0, 1.0, size=n_a))
    v = np.sort(rng.uniform(0.0, 1.0, size=n_b))
    f_grid = params.evaluate(u[:, None], v[None, :])
    counts = rng.binomial(samples, f_grid).astype(float)
    _repair_zero_mass(counts, f_grid)

    domains = (
        DomainSpec(DOMAIN_NAMES[0], _item_names("a", n_a)),
        DomainSpec(DOMAIN_NAMES[1], _item_names("b", n_b)),
    )
    table = CoocTable(domains, counts)
    return SyntheticData(table, params, (_frozen(u), _frozen(v)), seed, samples)


@dataclasses.dataclass(frozen=True)
class SyntheticTripleParams:
    """Planted structure for 3-domain benchmarks, sparse by default."""

    baseline: float = 0.002
    ridge_amp: float = 0.7
    ridge_width: float = 0.1
    spot_amp: float = 0.6
    spot_center: tuple[float, float, float] = (0.2, 0.7, 0.5)
    spot_width: float = 0.08
    band_amp: float = 0.08
    band_w: tuple[float, float] = (0.45, 0.6)

    def evaluate(self, u, v, w) -> np.ndarray:
        u, v, w = (np.asarray(x, dtype=float) for x in (u, v, w))
        f = np.full(np.broadcast_shapes(u.shape, v.shape, w.shape), self.baseline)
        f = f + self.ridge_amp * np.exp(
            -((u - v) ** 2 + (v - w) ** 2) / (2 * self.ridge_width**2)
        )
        su, sv, sw = self.spot_center
        f = f + self.spot_amp * np.exp(
            -((u - su) ** 2 + (v - sv) ** 2 + (w - sw) ** 2) / (2 * self.spot_width**2)
        )
        lo, hi = self.band_w
        f = f + self.band_amp * ((w >= lo) & (w <= hi))
        return np.minimum(f, 1.0)


def generate_synthetic_triple(
    n_a: int,
    n_b: int,
    n_c: int,
    seed: int,
    samples: int,
    params: SyntheticTripleParams = SyntheticTripleParams(),
) -> SyntheticData:
    """Draw the 3-domain benchmark; same sampling scheme as the pair case."""
    if min(n_a, n_b, n_c) < 10:
        raise DataError(f"synthetic domains need >= 10 items, got {n_a}x{n_b}x{n_c}")
    if samples < 1:
        raise DataError(f"samples must be >= 1, got {samples}")
    rng = _rng(seed)
    u = np.sort(rng.uniform(0.0, 1.0, size=n_a))
    v = np.sort(rng.uniform(0.0, 1.0, size=n_b))
    w = np.sort(rng.uniform(0.0, 1.0, size=n_c))
    f_grid = params.evaluate(u[:, None, None], v[None, :, None], w[None, None, :])
    counts = rng.binomial(samples, f_grid).astype(float)
    _repair_zero_mass(counts, f_grid)

    domains = (
        DomainSpec(DOMAIN_NAMES[0], _item_names("a", n_a)),
        DomainSpec(DOMAIN_NAMES[1], _item_names("b", n_b)),
        DomainSpec(DOMAIN_NAMES[2], _item_names("c", n_c)),
    )
    table = CoocTable(domains, counts)
    return SyntheticData(table, params, (_frozen(u), _frozen(v), _frozen(w)), seed, samples)


def save_synthetic(data: SyntheticData, path: str | os.PathLike) -> None:
    """Write the table plus a sidecar ``<path>.meta`` key-value file."""
    save_cooc_table(data.table, path)
    p = data.params
    lines = [
        f"generator = synthetic-{'triple' if data.table.n_domains == 3 else 'pair'}",
        "version = 1",
        f"prng = {PRNG_NAME}",
        f"seed = {data.seed}",
        f"samples = {data.samples}",
    ]
    for dom in data.table.domains:
        lines.append(f"n_{dom.name.lower()} = {dom.size}")
    for field in dataclasses.fields(p):
        value = getattr(p, field.name)
        if isinstance(value, tuple):
            value = ",".join(repr(x) for x in value)
        else:
            value = repr(value)
        lines.append(f"{field.name} = {value}")
    tmp = f"{path}.meta.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, f"{path}.meta")
