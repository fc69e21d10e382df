"""Evaluation harness: KL between empirical and modeled class-conditional
co-occurrence, quadrature checks of the information bound, dimension sweeps.

The KL readout follows the delta-method point evaluation everywhere except
``jensen_bound_check``, which integrates the model's implied item
probabilities on a fine grid so the bound inequality can be verified
independently of the delta approximation. Evaluation bandwidths are chosen
after training (rule-of-thumb with an effective-neighbor floor) and replace
the training bandwidths without moving any coordinates.

The outer measure over item pairs in the KL sum is the product of the
table's singleton marginals by default ("product"); a "uniform" variant is
available for sensitivity checks.
"""

from __future__ import annotations

import dataclasses
import math
import time
from typing import Sequence

import numpy as np

from .data_model import CoocTable
from .errors import DataError, NumericalError
from .kde import (
    EmbeddingModel,
    kernel_cross,
    kernel_matrix,
    rule_of_thumb_bandwidth,
)
from .objective import discrete_total_correlation, main_objective

BANDWIDTH_POLICIES = ("rot", "training")
OUTER_MEASURES = ("product", "uniform")

# Largest per-domain item count and latent dimension the quadrature bound
# check accepts; beyond this the grids stop being tractable or reliable.
QUAD_MAX_ITEMS = 8
QUAD_MAX_DIM = 2

# Mass the discretized densities may miss before the check refuses to report.
QUAD_NORM_TOL = 1e-3


# ---------------------------------------------------------------------------
# Report types


@dataclasses.dataclass(frozen=True)
class EvalRow:
    """One dimension's evaluation: KL plus the quantities behind it.

    ``slack`` is the information-bound gap (I_P - I_q) - KL at the
    evaluation bandwidths; it may dip slightly negative because the KL
    readout uses the delta-method approximation.
    """

    dims: tuple[int, ...]
    kl: float
    bandwidths: tuple[float, ...]
    i_p: float
    i_q: float
    slack: float
    seconds: float

    def __post_init__(self) -> None:
        fields = (self.kl, self.i_p, self.i_q, self.slack, *self.bandwidths)
        if not all(math.isfinite(v) for v in fields):
            raise NumericalError(f"non-finite evaluation row: {self}")
        if self.kl < -1e-9:
            raise NumericalError(f"negative KL {self.kl} in evaluation row")


@dataclasses.dataclass(frozen=True)
class EvalReport:
    """Rows over embedding dimensions for one table, plus the text form."""

    domain_names: tuple[str, ...]
    rows: tuple[EvalRow, ...]

    def to_text(self) -> str:
        cols = ["dims", "kl"]
        cols += [f"h_{name.lower()}" for name in self.domain_names]
        cols += ["i_p", "i_q", "slack", "seconds"]
        lines = ["# " + "\t".join(cols)]
        for row in self.rows:
            cells = [",".join(str(d) for d in row.dims), f"{row.kl:.12g}"]
            cells += [f"{h:.12g}" for h in row.bandwidths]
            cells += [
                f"{row.i_p:.12g}",
                f"{row.i_q:.12g}",
                f"{row.slack:.12g}",
                f"{row.seconds:.6g}",
            ]
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"


def parse_report(text: str) -> EvalReport:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("# "):
        raise DataError("evaluation report must start with a '# ' header line")
    cols = lines[0][2:].split("\t")
    h_cols = [c for c in cols if c.startswith("h_")]
    domain_names = tuple(c[2:].upper() for c in h_cols)
    rows = []
    for ln in lines[1:]:
        cells = ln.split("\t")
        if len(cells) != len(cols):
            raise DataError(f"report row has {len(cells)} cells, header has {len(cols)}")
        dims = tuple(int(d) for d in cells[0].split(","))
        vals = [float(x) for x in cells[1:]]
        n_h = len(h_cols)
        rows.append(
            EvalRow(
                dims=dims,
                kl=vals[0],
                bandwidths=tuple(vals[1 : 1 + n_h]),
                i_p=vals[1 + n_h],
                i_q=vals[2 + n_h],
                slack=vals[3 + n_h],
                seconds=vals[4 + n_h],
            )
        )
    return EvalReport(domain_names=domain_names, rows=tuple(rows))


# ---------------------------------------------------------------------------
# Delta-method class-conditional readout


def _require_class_weights(model: EmbeddingModel, table: CoocTable) -> np.ndarray:
    if not model.use_c:
        raise DataError("class-conditional readout needs a class-augmented model")
    if table.cooc_prob is None:
        raise DataError("class-conditional readout needs a table with cooc_prob")
    return table.weights(use_c=True)


def class_cond_grid(model: EmbeddingModel, table: CoocTable) -> np.ndarray:
    """Q(c | a_i, b_j) for every pair, shape (2, n_a, n_b).

    The delta-method point evaluation: both class surfaces are the
    kernel-smoothed class weights at the item coordinates, and the shared
    P_i P_j / (p p) factor cancels in the conditional.
    """
    w = _require_class_weights(model, table)
    if model.n_domains != 2:
        raise DataError("class-conditional grid is defined for two-domain models")
    ku = kernel_matrix(model.coords[0], model.sigmas[0])
    kv = kernel_matrix(model.coords[1], model.sigmas[1])
    g = np.einsum("ik,ckl,jl->cij", ku, w, kv)
    denom = g.sum(axis=0)
    if np.any(denom <= 0.0):
        i, j = np.unravel_index(int(np.argmin(denom)), denom.shape)
        raise NumericalError(
            f"both class components underflow at pair ({table.domains[0].items[i]}, "
            f"{table.domains[1].items[j]})"
        )
    return g / denom


def model_cooc_prob(
    model: EmbeddingModel, table: CoocTable, a_i: int, b_j: int
) -> np.ndarray:
    """Q(c | a_i, b_j) for one pair of item indices, as [Q(c=0), Q(c=1)].

    Requires a class-augmented model and a table carrying cooc_prob; raises
    NumericalError, naming the pair, if both class surfaces underflow.
    """
    w = _require_class_weights(model, table)
    n_a, n_b = w.shape[1], w.shape[2]
    if not (0 <= a_i < n_a and 0 <= b_j < n_b):
        raise DataError(f"pair index ({a_i}, {b_j}) out of range for {n_a}x{n_b}")
    ku = np.exp(kernel_cross(model.coords[0][a_i : a_i + 1], model.coords[0], model.sigmas[0])[0])
    kv = np.exp(kernel_cross(model.coords[1][b_j : b_j + 1], model.coords[1], model.sigmas[1])[0])
    g = np.einsum("k,ckl,l->c", ku, w, kv)
    denom = float(g.sum())
    if denom <= 0.0:
        raise NumericalError(
            f"both class components underflow at pair ({table.domains[0].items[a_i]}, "
            f"{table.domains[1].items[b_j]})"
        )
    return g / denom


# ---------------------------------------------------------------------------
# KL evaluation


def eval_bandwidths(
    model: EmbeddingModel, policy: str = "rot", n_min: int = 3
) -> tuple[float, ...]:
    """Per-domain evaluation bandwidths under the named policy."""
    if policy not in BANDWIDTH_POLICIES:
        raise DataError(f"unknown bandwidth policy {policy!r}; expected {BANDWIDTH_POLICIES}")
    if policy == "training":
        return model.sigmas
    out = []
    for m, coords in enumerate(model.coords):
        std = float(np.sqrt(np.mean(np.var(coords, axis=0))))
        if std <= 0.0:
            out.append(model.sigmas[m])
            continue
        out.append(
            rule_of_thumb_bandwidth(
                std, coords.shape[1], coords.shape[0], n_min=n_min, embedding=coords
            )
        )
    return tuple(out)


def _outer_weights(table: CoocTable, outer: str) -> np.ndarray:
    if outer not in OUTER_MEASURES:
        raise DataError(f"unknown outer measure {outer!r}; expected {OUTER_MEASURES}")
    n_a, n_b = (d.size for d in table.domains)
    if outer == "uniform":
        return np.full((n_a, n_b), 1.0 / (n_a * n_b))
    return np.outer(table.marginal(0), table.marginal(1))


def conditional_kl(
    p_c1: np.ndarray, q_c1: np.ndarray, outer: np.ndarray
) -> float:
    """Outer-weighted KL between two Bernoulli fields P(c=1|pair), Q(c=1|pair).

    Pairs where a P component is zero contribute nothing for that component;
    a zero Q component against positive P is an infinite divergence and
    raises instead of returning inf.
    """
    p1 = np.asarray(p_c1, dtype=float)
    q1 = np.asarray(q_c1, dtype=float)
    w = np.asarray(outer, dtype=float)
    if p1.shape != q1.shape or p1.shape != w.shape:
        raise DataError(
            f"shape mismatch: P {p1.shape}, Q {q1.shape}, outer {w.shape}"
        )
    total = 0.0
    for p, q in ((p1, q1), (1.0 - p1, 1.0 - q1)):
        mask = (p > 0.0) & (w > 0.0)
        if np.any(mask & (q <= 0.0)):
            raise NumericalError("model puts zero mass where the data has support")
        total += float(np.sum(w[mask] * p[mask] * np.log(p[mask] / q[mask])))
    return total


def kl_eval(
    model: EmbeddingModel,
    table: CoocTable,
    bandwidth_policy: str = "rot",
    outer: str = "product",
) -> EvalReport:
    """KL between the table's P(c|pair) and the model's Q(c|pair).

    Bandwidths are re-derived under ``bandwidth_policy`` ("rot" or
    "training") with the coordinates left untouched. The report carries one
    row: the KL, the bandwidths used, the discrete and plug-in information
    values, and the bound slack between them.
    """
    t0 = time.monotonic()
    _require_class_weights(model, table)
    hs = eval_bandwidths(model, bandwidth_policy)
    eval_model = model.with_bandwidths(hs)
    q1 = class_cond_grid(eval_model, table)[1]
    p1 = table.cooc_prob
    kl = conditional_kl(p1, q1, _outer_weights(table, outer))
    i_p = discrete_total_correlation(table.weights(use_c=True))
    i_q = main_objective(eval_model, table, lam=0.0, use_c=True).mi_term
    row = EvalRow(
        dims=eval_model.dims(),
        kl=kl,
        bandwidths=hs,
        i_p=i_p,
        i_q=i_q,
        slack=(i_p - i_q) - kl,
        seconds=time.monotonic() - t0,
    )
    return EvalReport(
        domain_names=tuple(d.name for d in table.domains), rows=(row,)
    )


def dimension_sweep(
    table: CoocTable,
    cfg,
    dims: Sequence[int],
    bandwidth_policy: str = "rot",
    outer: str = "product",
) -> EvalReport:
    """Train at each dimension and evaluate, one report row per dimension."""
    from .trainer import train

    if not dims:
        raise DataError("dimension sweep needs at least one dimension")
    rows = []
    for d in dims:
        t0 = time.monotonic()
        cfg_d = dataclasses.replace(cfg, dims=(int(d),))
        model, _ = train(table, cfg_d)
        prepared_hash = model.weights_hash
        eval_table = table
        if eval_table.cooc_prob is None:
            from .trainer import prepare_table

            eval_table = prepare_table(table, cfg_d)
        if prepared_hash and eval_table.weights_hash(use_c=True) != prepared_hash:
            raise DataError("prepared table does not match the trained model's weights")
        report = kl_eval(model, eval_table, bandwidth_policy, outer)
        row = report.rows[0]
        rows.append(dataclasses.replace(row, seconds=time.monotonic() - t0))
    return EvalReport(
        domain_names=tuple(d.name for d in table.domains), rows=tuple(rows)
    )


# ---------------------------------------------------------------------------
# Quadrature bound check


def _axis_grid(coords: np.ndarray, sigma: float, nodes_per_axis: int) -> tuple[np.ndarray, float]:
    """Tensor grid covering the coordinates out to 8 bandwidths, with the
    per-node volume element."""
    d = coords.shape[1]
    axes = []
    vol = 1.0
    for k in range(d):
        lo = float(coords[:, k].min()) - 8.0 * sigma
        hi = float(coords[:, k].max()) + 8.0 * sigma
        ax = np.linspace(lo, hi, nodes_per_axis)
        axes.append(ax)
        vol *= float(ax[1] - ax[0])
    if d == 1:
        pts = axes[0][:, None]
    else:
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
    return pts, vol


def _quadrature_sides(
    model: EmbeddingModel, table: CoocTable, grid_points: int
) -> tuple[float, float, float]:
    """(KL[P||Q], I_P, I_q) with the model side integrated on a fine grid."""
    for dom, coords in zip(table.domains, model.coords):
        if dom.size > QUAD_MAX_ITEMS:
            raise DataError(
                f"quadrature bound check handles at most {QUAD_MAX_ITEMS} items "
                f"per domain, domain {dom.name} has {dom.size}"
            )
        if coords.shape[1] > QUAD_MAX_DIM:
            raise DataError(
                f"quadrature bound check handles latent dimension at most "
                f"{QUAD_MAX_DIM}, got {coords.shape[1]}"
            )
    if model.n_domains != 2:
        raise DataError("quadrature bound check is defined for two-domain models")

    use_c = model.use_c and table.cooc_prob is not None
    weights = table.weights(use_c=use_c)
    w_stack = weights if use_c else weights[None, ...]
    classes = w_stack.shape[0]

    grids = []
    for m in range(2):
        nodes = grid_points if model.coords[m].shape[1] == 1 else max(48, grid_points // 8)
        pts, vol = _axis_grid(model.coords[m], model.sigmas[m], nodes)
        k_nodes = np.exp(kernel_cross(pts, model.coords[m], model.sigmas[m]))
        marg = w_stack.sum(axis=tuple(ax for ax in range(3) if ax != m + 1))
        p_nodes = k_nodes @ marg
        mass = float(p_nodes.sum() * vol)
        if abs(mass - 1.0) > QUAD_NORM_TOL:
            raise NumericalError(
                f"quadrature grid too coarse: domain {table.domains[m].name} "
                f"density integrates to {mass:.6f}"
            )
        grids.append((pts, vol, k_nodes, p_nodes))

    (_, vol_u, ku_nodes, pu), (_, vol_v, kv_nodes, pv) = grids
    dudv = vol_u * vol_v
    p_c = w_stack.sum(axis=(1, 2))

    i_q = 0.0
    q_total = 0.0
    kl = 0.0
    log_pu = np.log(pu)
    log_pv = np.log(pv)
    for c in range(classes):
        q_c = ku_nodes @ w_stack[c] @ kv_nodes.T
        q_total += float(q_c.sum() * dudv)
        pos = q_c > 0.0
        log_q = np.log(q_c[pos])
        base = np.log(p_c[c]) + log_pu[:, None] + log_pv[None, :]
        i_q += float(np.sum(q_c[pos] * (log_q - base[pos])) * dudv)
        ratio = q_c / (pu[:, None] * pv[None, :])
        q_items = (ku_nodes.T @ ratio @ kv_nodes) * dudv
        q_items *= np.outer(table.marginal(0), table.marginal(1))
        p_items = w_stack[c]
        mask = p_items > 0.0
        if np.any(mask & (q_items <= 0.0)):
            raise NumericalError("model puts zero mass where the data has support")
        kl += float(np.sum(p_items[mask] * np.log(p_items[mask] / q_items[mask])))
    if abs(q_total - 1.0) > QUAD_NORM_TOL:
        raise NumericalError(
            f"quadrature grid too coarse: joint density integrates to {q_total:.6f}"
        )
    i_p = discrete_total_correlation(weights)
    return kl, i_p, i_q


def jensen_bound_check(
    model: EmbeddingModel, table: CoocTable, grid_points: int = 512
) -> float:
    """Slack of the information bound, (I_P - I_q) - KL[P||Q], by quadrature.

    Both sides are integrated on a fine grid (no delta-method shortcut):
    the model's item probabilities come from the kernel-decoding integral
    and I_q from the latent joint density. Nonnegative slack verifies the
    bound; values below the quadrature tolerance indicate a violation.
    Refuses to report when the grid misses more than 1e-3 of the mass.
    """
    kl, i_p, i_q = _quadrature_sides(model, table, grid_points)
    return (i_p - i_q) - kl
