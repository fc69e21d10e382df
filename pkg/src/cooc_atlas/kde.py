"""Gaussian kernel machinery over per-domain latent spaces.

Defines the trained artifact (`EmbeddingModel`, with a versioned byte-exact
file format), the read-only `DensityEvaluator` that turns a model plus a
weight table into joint/marginal/conditional densities, rasterized
conditional heatmaps, and the rule-of-thumb bandwidth selector with its
effective-neighbor floor.

Densities at arbitrary points are evaluated in log space with a per-query
max shift; log values are floored at -745 so exponentiation never reaches
exact zero.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data_model import CoocTable, DomainSpec
from .errors import DataError, UnknownEntityError

MODEL_FORMAT = "cooc-atlas-model"
MODEL_VERSION = 1

LOG_FLOOR = -745.0

HEATMAP_PAD_SIGMAS = 4.0


def gaussian_kernel(x: np.ndarray, center: np.ndarray, sigma: float) -> float:
    """Isotropic Gaussian density N(x | center, sigma^2 I)."""
    x = np.asarray(x, dtype=float)
    center = np.asarray(center, dtype=float)
    if x.shape != center.shape or x.ndim != 1:
        raise DataError(f"point shapes differ: {x.shape} vs {center.shape}")
    if not sigma > 0:
        raise DataError(f"sigma must be positive, got {sigma}")
    d = x.size
    delta = float(np.sum((x - center) ** 2))
    try:
        log_k = -0.5 * d * math.log(2 * math.pi * sigma**2) - delta / (2 * sigma**2)
    except (OverflowError, ValueError):
        # sigma**2 left the float range; saturate toward the limit instead
        # of raising
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            s2 = float(np.float64(sigma) ** 2)
        if s2 == 0.0:  # sigma underflow: a delta spike
            log_k = math.inf if delta == 0.0 else -math.inf
        else:  # sigma overflow: flat at machine scale
            log_k = -math.inf
    # the upper clamp keeps exp() in range for pathological tiny sigmas
    return math.exp(min(max(log_k, LOG_FLOOR), 709.0))


def kernel_matrix(coords: np.ndarray, sigma: float) -> np.ndarray:
    """All-pairs kernel values k(x_i | x_j); symmetric, positive diagonal."""
    sq = np.sum(coords**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (coords @ coords.T)
    np.maximum(d2, 0.0, out=d2)
    d = coords.shape[1]
    try:
        norm = (2 * math.pi * sigma**2) ** (-0.5 * d)
        return norm * np.exp(-d2 / (2 * sigma**2))
    except (OverflowError, ZeroDivisionError):
        # sigma**2 or the normalizer left the float range; evaluate in log
        # space with float64 saturation and let the caller's non-finite
        # sentinels handle what remains
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            s2 = np.float64(sigma) ** 2
            return np.exp(-0.5 * d * np.log(2.0 * np.pi * s2) - d2 / (2.0 * s2))


def kernel_cross(points: np.ndarray, coords: np.ndarray, sigma: float, dim: int | None = None) -> np.ndarray:
    """Log-kernel matrix between query points (rows) and centers (columns).

    With ``dim`` set, only the leading ``dim`` coordinate axes enter (the
    marginal of an isotropic Gaussian over trailing axes), used for 2D
    heatmap rasters of higher-dimensional domains.
    """
    if dim is not None:
        points = points[:, :dim]
        coords = coords[:, :dim]
    d2 = (
        np.sum(points**2, axis=1)[:, None]
        + np.sum(coords**2, axis=1)[None, :]
        - 2.0 * (points @ coords.T)
    )
    np.maximum(d2, 0.0, out=d2)
    d = points.shape[1]
    try:
        return -0.5 * d * math.log(2 * math.pi * sigma**2) - d2 / (2 * sigma**2)
    except (OverflowError, ValueError):
        # as in kernel_matrix: saturate instead of raising beyond the range
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            s2 = np.float64(sigma) ** 2
            return -0.5 * d * np.log(2.0 * np.pi * s2) - d2 / (2.0 * s2)


def _logsumexp(a: np.ndarray, axis=None) -> np.ndarray:
    """Max-shifted log-sum-exp; tolerates all-(-inf) blocks."""
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.sum(np.exp(a - m), axis=axis)) + np.squeeze(m, axis=axis)


# ---------------------------------------------------------------------------
# The trained artifact


class EmbeddingModel:
    """Per-domain latent coordinates, bandwidths, and weight provenance."""

    def __init__(
        self,
        domains: tuple[DomainSpec, ...],
        coords: Sequence[np.ndarray],
        sigmas: Sequence[float],
        use_c: bool,
        weights_hash: str = "",
        provenance: Mapping[str, object] | None = None,
    ) -> None:
        if len(domains) not in (2, 3):
            raise DataError(f"models support 2 or 3 domains, got {len(domains)}")
        if not (len(coords) == len(sigmas) == len(domains)):
            raise DataError("domains, coords, and sigmas must align")
        frozen_coords = []
        for dom, x in zip(domains, coords):
            x = np.array(x, dtype=float, order="C")
            if x.ndim != 2 or x.shape[0] != dom.size:
                raise DataError(
                    f"domain {dom.name!r} has {dom.size} items but coords shape {x.shape}"
                )
            if not np.all(np.isfinite(x)):
                raise DataError(f"non-finite coordinates in domain {dom.name!r}")
            x.flags.writeable = False
            frozen_coords.append(x)
        for dom, s in zip(domains, sigmas):
            if not (float(s) > 0 and math.isfinite(float(s))):
                raise DataError(f"bandwidth for domain {dom.name!r} must be positive, got {s}")
        self.domains = tuple(domains)
        self.coords = tuple(frozen_coords)
        self.sigmas = tuple(float(s) for s in sigmas)
        self.use_c = bool(use_c)
        self.weights_hash = str(weights_hash)
        self.provenance = dict(provenance or {})

    @property
    def n_domains(self) -> int:
        return len(self.domains)

    def dims(self) -> tuple[int, ...]:
        return tuple(x.shape[1] for x in self.coords)

    def domain_axis(self, name: str) -> int:
        for axis, d in enumerate(self.domains):
            if d.name == name:
                return axis
        raise UnknownEntityError(f"unknown domain {name!r}; have {[d.name for d in self.domains]}")

    def with_bandwidths(self, sigmas: Sequence[float]) -> "EmbeddingModel":
        """Same coordinates and weights, different kernel bandwidths."""
        return EmbeddingModel(
            self.domains, self.coords, sigmas, self.use_c, self.weights_hash, self.provenance
        )

    def with_coords(self, coords: Sequence[np.ndarray]) -> "EmbeddingModel":
        """Same bandwidths and weights, different coordinates."""
        return EmbeddingModel(
            self.domains, coords, self.sigmas, self.use_c, self.weights_hash, self.provenance
        )

    def to_document(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "domains": [
                {
                    "name": dom.name,
                    "items": list(dom.items),
                    "dim": int(x.shape[1]),
                    "sigma": s,
                    "coords": [[float(v) for v in row] for row in x],
                }
                for dom, x, s in zip(self.domains, self.coords, self.sigmas)
            ],
            "weights": {"use_c": self.use_c, "hash": self.weights_hash},
            "provenance": self.provenance,
        }

    def to_bytes(self) -> bytes:
        return (json.dumps(self.to_document(), sort_keys=True, indent=2) + "\n").encode("utf-8")

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    @staticmethod
    def from_document(doc: Mapping) -> "EmbeddingModel":
        if doc.get("format") != MODEL_FORMAT:
            raise DataError(f"not a model document (format={doc.get('format')!r})")
        if doc.get("version") != MODEL_VERSION:
            raise DataError(f"unsupported model version {doc.get('version')!r}")
        domains = []
        coords = []
        sigmas = []
        for entry in doc["domains"]:
            domains.append(DomainSpec(entry["name"], tuple(entry["items"])))
            x = np.asarray(entry["coords"], dtype=float)
            if x.ndim != 2 or x.shape[1] != entry["dim"]:
                raise DataError(f"coords for domain {entry['name']!r} do not match dim")
            coords.append(x)
            sigmas.append(entry["sigma"])
        return EmbeddingModel(
            tuple(domains),
            coords,
            sigmas,
            bool(doc["weights"]["use_c"]),
            doc["weights"]["hash"],
            doc.get("provenance", {}),
        )


def save_model(model: EmbeddingModel, path: str | os.PathLike) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(model.to_bytes())
    os.replace(tmp, path)


def load_model(path: str | os.PathLike) -> EmbeddingModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid model file: {exc}") from None
    return EmbeddingModel.from_document(doc)


# ---------------------------------------------------------------------------
# Heatmaps


@dataclasses.dataclass(frozen=True)
class HeatmapGrid:
    """Rasterized conditional density over one domain's bounding box.

    The raster covers the first one or two coordinate axes of the target
    domain (trailing axes are marginalized out); lattice points include both
    range endpoints. ``values`` is row-major with the first raster axis as
    rows.
    """

    target_domain: str
    axis_ranges: tuple[tuple[float, float], ...]
    resolution: int
    values: np.ndarray
    argmax: tuple[int, ...]
    item_coords: np.ndarray

    @property
    def vmin(self) -> float:
        return float(self.values.min())

    @property
    def vmax(self) -> float:
        return float(self.values.max())

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.target_domain.encode())
        h.update(repr(self.axis_ranges).encode())
        h.update(str(self.resolution).encode())
        h.update(np.ascontiguousarray(self.values).tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# Density evaluation


class DensityEvaluator:
    """Evaluates model densities q(u, v[, w]) and conditionals.

    Immutable; mixes the model's per-item Gaussian kernels with a weight
    tensor (plain P(items) or c-augmented P(c, items)). All query operations
    are pure.
    """

    def __init__(self, model: EmbeddingModel, table: CoocTable) -> None:
        if tuple(d.name for d in model.domains) != tuple(d.name for d in table.domains):
            raise DataError("model and table domains do not match")
        for md, td in zip(model.domains, table.domains):
            if md.items != td.items:
                raise DataError(f"item mismatch in domain {md.name!r} between model and table")
        weights = table.weights(model.use_c)
        if model.weights_hash and model.weights_hash != table.weights_hash(model.use_c):
            raise DataError(
                "weight-table hash mismatch: the table does not reproduce the "
                "weights this model was trained on"
            )
        self._init(model, weights)

    @classmethod
    def with_weights(cls, model: EmbeddingModel, weights: np.ndarray) -> "DensityEvaluator":
        """Build from an explicit weight tensor (no table hash check).

        The tensor's leading axis is c when its rank exceeds the domain
        count. Used by query layers that re-slice a table's weights.
        """
        self = cls.__new__(cls)
        self._init(model, weights)
        return self

    def _init(self, model: EmbeddingModel, weights: np.ndarray) -> None:
        n_latent = model.n_domains
        expected = tuple(d.size for d in model.domains)
        if weights.ndim == n_latent + 1:
            if weights.shape[1:] != expected or weights.shape[0] != 2:
                raise DataError(f"weight shape {weights.shape} does not match model domains")
            has_c = True
        elif weights.ndim == n_latent:
            if weights.shape != expected:
                raise DataError(f"weight shape {weights.shape} does not match model domains")
            has_c = False
        else:
            raise DataError(f"weight tensor rank {weights.ndim} does not match model")
        if np.any(weights < 0):
            raise DataError("weights must be nonnegative")
        total = float(weights.sum())
        if abs(total - 1.0) > 1e-9:
            raise DataError(f"weights must sum to 1 (got {total!r})")
        self.model = model
        self.weights = np.ascontiguousarray(weights.astype(float))
        self.weights.flags.writeable = False
        self.has_c = has_c
        with np.errstate(divide="ignore"):
            self._log_weights = np.log(self.weights)
        self._log_weights.flags.writeable = False
        self._marginals: dict[int, np.ndarray] = {}

    # latent axis a (0-based over domains) lives at tensor axis a + c_offset
    @property
    def _c_offset(self) -> int:
        return 1 if self.has_c else 0

    def domain_marginal(self, axis: int) -> np.ndarray:
        """Mixture weights of one domain's marginal density."""
        if axis not in self._marginals:
            t_axis = axis + self._c_offset
            other = tuple(a for a in range(self.weights.ndim) if a != t_axis)
            m = self.weights.sum(axis=other)
            m.flags.writeable = False
            self._marginals[axis] = m
        return self._marginals[axis]

    def _log_kernel_at(self, axis: int, point: np.ndarray) -> np.ndarray:
        dom = self.model.domains[axis]
        coords = self.model.coords[axis]
        point = np.asarray(point, dtype=float)
        if point.shape != (coords.shape[1],):
            raise DataError(
                f"point of shape {point.shape} does not match domain {dom.name!r} "
                f"dimension {coords.shape[1]}"
            )
        return kernel_cross(point[None, :], coords, self.model.sigmas[axis])[0]

    def log_joint_density(self, points: Sequence[np.ndarray], c: int | None = None) -> float:
        """log q(points...) over all domains, optionally for one c value."""
        if len(points) != self.model.n_domains:
            raise DataError(
                f"expected {self.model.n_domains} points, got {len(points)}"
            )
        if c is not None:
            if not self.has_c:
                raise DataError("evaluator weights carry no c axis")
            if c not in (0, 1):
                raise DataError(f"c must be 0 or 1, got {c}")
            acc = np.array(self._log_weights[c], copy=True)
            offset = 0
        else:
            acc = np.array(self._log_weights, copy=True)
            offset = self._c_offset
        for axis, point in enumerate(points):
            lk = self._log_kernel_at(axis, point)
            shape = [1] * acc.ndim
            shape[axis + offset] = lk.size
            acc += lk.reshape(shape)
        return max(float(_logsumexp(acc.ravel(), axis=0)), LOG_FLOOR)

    def joint_density(self, points: Sequence[np.ndarray], c: int | None = None) -> float:
        """q(points...), summed over c unless a c value is given."""
        return math.exp(self.log_joint_density(points, c))

    def marginal_density(self, domain: str, point: np.ndarray) -> float:
        """p(point) in one domain: its marginal kernel mixture."""
        axis = self.model.domain_axis(domain)
        lk = self._log_kernel_at(axis, point)
        weights = self.domain_marginal(axis)
        with np.errstate(divide="ignore"):
            lw = np.log(weights)
        return math.exp(max(float(_logsumexp(lk + lw, axis=0)), LOG_FLOOR))

    # -- conditionals ----------------------------------------------------

    def _resolve_given(
        self, target_axis: int, given: Sequence[tuple[str, np.ndarray]]
    ) -> list[tuple[int, np.ndarray]]:
        if not given:
            raise DataError("at least one given point is required")
        seen: set[int] = set()
        resolved = []
        for name, point in given:
            axis = self.model.domain_axis(name)
            if axis == target_axis:
                raise DataError(f"given domain {name!r} equals the target domain")
            if axis in seen:
                raise DataError(f"domain {name!r} appears twice in the given list")
            seen.add(axis)
            resolved.append((axis, np.asarray(point, dtype=float)))
        return resolved

    def _target_log_weights(
        self, target_axis: int, given: Sequence[tuple[str, np.ndarray]]
    ) -> tuple[np.ndarray, float]:
        """Per-center log weights of the conditional mixture, plus log q(given).

        Contracts the weight tensor with the given points' kernels; latent
        axes that are neither target nor given integrate out, and a c axis
        sums out.
        """
        resolved = self._resolve_given(target_axis, given)
        acc = np.array(self._log_weights, copy=True)
        for axis, point in resolved:
            lk = self._log_kernel_at(axis, point)
            shape = [1] * acc.ndim
            shape[axis + self._c_offset] = lk.size
            acc += lk.reshape(shape)
        reduce_axes = tuple(
            a for a in range(acc.ndim) if a != target_axis + self._c_offset
        )
        log_w = _logsumexp(acc, axis=reduce_axes) if reduce_axes else acc
        log_denom = float(_logsumexp(log_w, axis=0))
        if log_denom <= LOG_FLOOR:
            names = ", ".join(f"{n}@{np.asarray(p).tolist()}" for n, p in given)
            raise DataError(
                f"conditional is degenerate: q(given) underflows for given point(s) {names}"
            )
        return log_w, log_denom

    def conditional_at(
        self,
        target_domain: str,
        points: np.ndarray,
        given: Sequence[tuple[str, np.ndarray]],
    ) -> np.ndarray:
        """q(target point | given) at full-dimension target points (rows)."""
        axis = self.model.domain_axis(target_domain)
        log_w, log_denom = self._target_log_weights(axis, given)
        lk = kernel_cross(
            np.asarray(points, dtype=float), self.model.coords[axis], self.model.sigmas[axis]
        )
        log_vals = _logsumexp(lk + log_w[None, :], axis=1) - log_denom
        return np.exp(np.maximum(log_vals, LOG_FLOOR))

    def conditional_density(
        self,
        target_domain: str,
        given: Sequence[tuple[str, np.ndarray]],
        resolution: int = 64,
    ) -> HeatmapGrid:
        """Rasterize q(target | given) over the target domain's bounding box.

        The raster spans the first one or two target axes padded by 4 sigma;
        for higher-dimensional targets the trailing axes are marginalized
        (the conditioning side always uses full-dimension coordinates).
        """
        if not (16 <= resolution <= 1024):
            raise DataError(f"resolution must lie in [16, 1024], got {resolution}")
        axis = self.model.domain_axis(target_domain)
        log_w, log_denom = self._target_log_weights(axis, given)

        coords = self.model.coords[axis]
        sigma = self.model.sigmas[axis]
        raster_dim = min(coords.shape[1], 2)
        pad = HEATMAP_PAD_SIGMAS * sigma
        ranges = tuple(
            (float(coords[:, a].min() - pad), float(coords[:, a].max() + pad))
            for a in range(raster_dim)
        )
        axes_pts = [np.linspace(lo, hi, resolution) for lo, hi in ranges]
        if raster_dim == 1:
            pts = axes_pts[0][:, None]
        else:
            gx, gy = np.meshgrid(axes_pts[0], axes_pts[1], indexing="ij")
            pts = np.column_stack([gx.ravel(), gy.ravel()])

        lk = kernel_cross(pts, coords, sigma, dim=raster_dim)
        log_vals = _logsumexp(lk + log_w[None, :], axis=1) - log_denom
        values = np.exp(np.maximum(log_vals, LOG_FLOOR))
        values = values.reshape((resolution,) * raster_dim)
        values.flags.writeable = False
        argmax = tuple(int(k) for k in np.unravel_index(int(np.argmax(values)), values.shape))
        item_coords = np.ascontiguousarray(coords[:, :raster_dim])
        item_coords.flags.writeable = False
        return HeatmapGrid(
            target_domain=target_domain,
            axis_ranges=ranges,
            resolution=resolution,
            values=values,
            argmax=argmax,
            item_coords=item_coords,
        )

    # -- item-level read-outs -------------------------------------------

    def item_grid_density(self) -> np.ndarray:
        """q at every item coordinate tuple: tensor over (c?, items...).

        Linear-space kernel matmuls; at item tuples the self term keeps the
        value far from underflow wherever the weights are positive.
        """
        w = self.weights
        out = w
        for axis in range(self.model.n_domains):
            k = kernel_matrix(self.model.coords[axis], self.model.sigmas[axis])
            out = np.moveaxis(
                np.tensordot(out, k, axes=([axis + self._c_offset], [0])),
                -1,
                axis + self._c_offset,
            )
        return out

    def item_marginal_density(self, axis: int) -> np.ndarray:
        """p at each of one domain's item coordinates."""
        k = kernel_matrix(self.model.coords[axis], self.model.sigmas[axis])
        return k @ self.domain_marginal(axis)


# ---------------------------------------------------------------------------
# Bandwidth selection


def rule_of_thumb_bandwidth(
    std_dev: float,
    d: int,
    n: int,
    n_min: int = 3,
    embedding: np.ndarray | None = None,
) -> float:
    """Scott-style bandwidth with an effective-neighbor floor.

    h_rot = sigma * (4/(d+2))^(1/(d+4)) * n^(-1/(d+4)). When an embedding is
    supplied, the result is floored at the smallest h for which the mean
    number of other points within radius h is at least n_min (bisection over
    [1e-6 sigma, 10 sigma]); without one the floor is 0.
    """
    if not math.isfinite(std_dev) or std_dev <= 0:
        raise DataError(f"std_dev must be positive and finite, got {std_dev}")
    if n < 2 or d < 1:
        raise DataError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
    h_rot = std_dev * (4.0 / (d + 2)) ** (1.0 / (d + 4)) * n ** (-1.0 / (d + 4))
    if embedding is None:
        return h_rot

    emb = np.asarray(embedding, dtype=float)
    sq = np.sum(emb**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (emb @ emb.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, np.inf)
    dist = np.sqrt(d2)
    target = min(n_min, emb.shape[0] - 1)

    def mean_neighbors(h: float) -> float:
        return float(np.mean(np.sum(dist <= h, axis=1)))

    lo, hi = 1e-6 * std_dev, 10.0 * std_dev
    if mean_neighbors(lo) >= target:
        return max(h_rot, lo)
    if mean_neighbors(hi) < target:
        return max(h_rot, hi)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if mean_neighbors(mid) >= target:
            hi = mid
        else:
            lo = mid
    return max(h_rot, hi)
