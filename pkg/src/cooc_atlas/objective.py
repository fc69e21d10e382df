"""Training objectives and their exact analytic gradients.

Everything here is one functional evaluated at the data points: given a
nonnegative weight tensor T (plain item probabilities, or with a leading
binary-class axis) and a kernel on some of its axes, the plug-in value is

    F = sum_x T_x log [ G_x / prod_axis marg_axis(x) ]

where G is T smoothed by the kernels (identity on discrete axes) and each
axis contributes either its kernel-smoothed marginal or its bare discrete
marginal. The main objective kernelizes every latent domain; the auxiliary
warm-up objective for one domain kernelizes only that domain; the empirical
information content of the table kernelizes nothing. Gradients are exact,
including the indirect coupling through the shared kernel densities, and are
accumulated in a fixed axis-ascending order for cross-run determinism.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Iterable, Sequence

import numpy as np

from .data_model import CoocTable
from .errors import DataError, NumericalError
from .kde import EmbeddingModel, kernel_matrix

REG_NORMS = ("l2", "linf")


@dataclasses.dataclass(frozen=True)
class ObjectiveValue:
    """Objective breakdown: total = mi_term - lambda * reg_term.

    For class-augmented runs, ``cond_mi`` carries sum_c P(c) I[latents | c]
    and ``class_mi`` the per-domain I[c; latent] terms; their sum equals
    mi_term (the information decomposition identity).
    """

    total: float
    mi_term: float
    reg_term: float
    lam: float
    cond_mi: float | None = None
    class_mi: tuple[float, ...] | None = None


@dataclasses.dataclass(frozen=True)
class GradientSet:
    """Per-domain gradient matrices, aligned with the model's coords."""

    grads: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        for g in self.grads:
            if not np.all(np.isfinite(g)):
                raise NumericalError("non-finite gradient")


# ---------------------------------------------------------------------------
# Core plug-in functional


@dataclasses.dataclass
class _Mode:
    coords: np.ndarray
    sigma: float
    kernel: np.ndarray


def _contract(t: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    """Multiply one tensor axis by a (symmetric) kernel matrix."""
    return np.moveaxis(np.tensordot(t, k, axes=([axis], [0])), -1, axis)


def _axis_marginal(t: np.ndarray, axis: int) -> np.ndarray:
    other = tuple(a for a in range(t.ndim) if a != axis)
    return t.sum(axis=other)


def _displacement_sum(m: np.ndarray, coords: np.ndarray, sigma: float) -> np.ndarray:
    """Gradient of sum_{i,i'} B[i,i'] K[i,i'] w.r.t. the coordinates.

    ``m`` is B*K elementwise; each pair pulls its endpoints together along
    the displacement, scaled by 1/sigma^2.
    """
    s = m + m.T
    try:
        return (s @ coords - s.sum(axis=1)[:, None] * coords) / (sigma**2)
    except OverflowError:
        # sigma**2 beyond the float range: the kernel is flat and the pull
        # vanishes
        return np.zeros_like(coords)


def _plugin(
    weights: np.ndarray,
    modes: Sequence[_Mode | None],
    grad_axes: Iterable[int] = (),
) -> tuple[float, dict[int, np.ndarray]]:
    """Value and (optionally) gradients of the plug-in functional.

    ``modes`` aligns with the tensor axes of ``weights``; None marks a
    discrete axis. Gradients are returned for the requested kernelized axes,
    keyed by axis.
    """
    t = weights
    grad_axes = tuple(grad_axes)
    for a in grad_axes:
        if modes[a] is None:
            raise DataError(f"axis {a} is discrete and has no gradient")

    dense = bool(np.all(t > 0))
    mask = None if dense else (t > 0)

    # Smooth every kernelized axis, keeping the all-but-one contractions the
    # gradients need. Axis-ascending order keeps runs bit-reproducible.
    kernel_axes = [a for a, m in enumerate(modes) if m is not None]
    partial: dict[int, np.ndarray] = {}
    for a in kernel_axes:
        acc = t
        for b in kernel_axes:
            if b != a:
                acc = _contract(acc, modes[b].kernel, b)
        partial[a] = acc
    if kernel_axes:
        a0 = kernel_axes[0]
        g = _contract(partial[a0], modes[a0].kernel, a0)
    else:
        g = t

    # Value: data term minus the per-axis marginal terms.
    if dense:
        with np.errstate(divide="ignore"):
            data_term = float(np.vdot(t, np.log(g)))
    else:
        idx = np.nonzero(mask)
        data_term = float(np.dot(t[idx], np.log(g[idx])))

    value = data_term
    marg: dict[int, np.ndarray] = {}
    smooth_marg: dict[int, np.ndarray] = {}
    for a, mode in enumerate(modes):
        p = _axis_marginal(t, a)
        marg[a] = p
        if mode is None:
            nz = p > 0
            value -= float(np.dot(p[nz], np.log(p[nz])))
        else:
            gm = mode.kernel @ p
            smooth_marg[a] = gm
            value -= float(np.dot(p, np.log(gm)))

    grads: dict[int, np.ndarray] = {}
    if grad_axes:
        if dense:
            w = t / g
        else:
            w = np.zeros_like(t)
            np.divide(t, g, out=w, where=mask)
        for a in grad_axes:
            mode = modes[a]
            w_unf = np.moveaxis(w, a, 0).reshape(t.shape[a], -1)
            pa_unf = np.moveaxis(partial[a], a, 0).reshape(t.shape[a], -1)
            b1 = w_unf @ pa_unf.T
            p = marg[a]
            b2 = np.outer(p / smooth_marg[a], p)
            m = (b1 - b2) * mode.kernel
            grads[a] = _displacement_sum(m, mode.coords, mode.sigma)
    return value, grads


# ---------------------------------------------------------------------------
# Model-facing wrappers


def _resolve_use_c(model: EmbeddingModel, use_c: bool | None) -> bool:
    return model.use_c if use_c is None else bool(use_c)


def _training_weights(model: EmbeddingModel, table: CoocTable, use_c: bool) -> np.ndarray:
    if tuple(d.size for d in model.domains) != table.shape:
        raise DataError("model and table are not index-aligned")
    for md, td in zip(model.domains, table.domains):
        if md.items != td.items:
            raise DataError(f"item mismatch in domain {md.name!r} between model and table")
    return table.weights(use_c)


def _mode_of(model: EmbeddingModel, m: int) -> _Mode:
    return _Mode(
        coords=model.coords[m],
        sigma=model.sigmas[m],
        kernel=kernel_matrix(model.coords[m], model.sigmas[m]),
    )


def _modes_for(
    model: EmbeddingModel, ndim: int, c_offset: int, kernelize: Iterable[int]
) -> list[_Mode | None]:
    """Axis layout for the weight tensor: c axis (if any) first, then domains."""
    modes: list[_Mode | None] = [None] * ndim
    for m in kernelize:
        modes[m + c_offset] = _mode_of(model, m)
    return modes


def _reg_value(model: EmbeddingModel, reg_norm: str) -> float:
    if reg_norm == "l2":
        return float(sum(np.sum(x**2) for x in model.coords))
    if reg_norm == "linf":
        # Realized as hard clipping by the trainer; no penalty is reported.
        return 0.0
    raise DataError(f"unknown regularizer {reg_norm!r}; expected one of {REG_NORMS}")


def main_objective(
    model: EmbeddingModel,
    table: CoocTable,
    lam: float = 0.0,
    reg_norm: str = "l2",
    use_c: bool | None = None,
    breakdown: bool = False,
) -> ObjectiveValue:
    """Plug-in information between all latent domains, minus regularization.

    With ``use_c`` the weights are the class-augmented joint and the value is
    the c-inclusive total correlation; ``breakdown`` additionally computes
    its conditional/class decomposition (at extra cost).
    """
    if lam < 0:
        raise DataError(f"lambda must be >= 0, got {lam}")
    use_c = _resolve_use_c(model, use_c)
    t = _training_weights(model, table, use_c)
    c_off = 1 if use_c else 0
    modes = _modes_for(model, t.ndim, c_off, range(model.n_domains))
    mi, _ = _plugin(t, modes)
    reg = _reg_value(model, reg_norm)

    cond_mi: float | None = None
    class_mi: tuple[float, ...] | None = None
    if breakdown and use_c:
        p_c = _axis_marginal(t, 0)
        cond = 0.0
        for c in (0, 1):
            if p_c[c] > 0:
                sub_modes = _modes_for(model, t.ndim - 1, 0, range(model.n_domains))
                val_c, _ = _plugin(t[c] / p_c[c], sub_modes)
                cond += p_c[c] * val_c
        per_domain = []
        for m in range(model.n_domains):
            keep = (0, m + 1)
            drop = tuple(a for a in range(t.ndim) if a not in keep)
            pair = t.sum(axis=drop)
            val_m, _ = _plugin(pair, [None, _mode_of(model, m)])
            per_domain.append(val_m)
        cond_mi = cond
        class_mi = tuple(per_domain)
    return ObjectiveValue(
        total=mi - lam * reg,
        mi_term=mi,
        reg_term=reg,
        lam=lam,
        cond_mi=cond_mi,
        class_mi=class_mi,
    )


def aux_objectives(
    model: EmbeddingModel, table: CoocTable, use_c: bool | None = None
) -> tuple[float, ...]:
    """Warm-up values: one per domain, pairing it against all other axes.

    For domain m only its axis carries a kernel; the remaining axes (other
    domains, and c when augmented) act as one joint discrete label.
    """
    use_c = _resolve_use_c(model, use_c)
    t = _training_weights(model, table, use_c)
    c_off = 1 if use_c else 0
    out = []
    for m in range(model.n_domains):
        modes = _modes_for(model, t.ndim, c_off, [m])
        val, _ = _plugin(t, modes)
        out.append(val)
    return tuple(out)


def _parse_which(model: EmbeddingModel, which: str) -> tuple[str, int | None]:
    if which == "main":
        return "main", None
    if which.startswith("aux_"):
        name = which[len("aux_") :].upper()
        for m, dom in enumerate(model.domains):
            if dom.name.upper() == name:
                return "aux", m
    raise DataError(
        f"unknown objective {which!r}; expected 'main' or 'aux_<domain>' with "
        f"domain in {[d.name.lower() for d in model.domains]}"
    )


def gradient(
    model: EmbeddingModel,
    table: CoocTable,
    which: str = "main",
    lam: float = 0.0,
    reg_norm: str = "l2",
    use_c: bool | None = None,
) -> GradientSet:
    """Exact gradient of the selected plug-in objective (ascent direction).

    ``which`` is ``"main"`` or ``"aux_<domain>"`` (e.g. ``"aux_a"``). The
    L2 regularizer contributes -2*lambda*x to every domain; the sup-norm
    regularizer is a projection handled by the trainer and contributes
    nothing here.
    """
    _, grads = _objective_and_gradients(model, table, which, lam, reg_norm, use_c)
    return grads


def _objective_and_gradients(
    model: EmbeddingModel,
    table: CoocTable,
    which: str,
    lam: float,
    reg_norm: str,
    use_c: bool | None,
) -> tuple[ObjectiveValue, GradientSet]:
    """Shared evaluation path: one set of contractions for value + gradient."""
    if lam < 0:
        raise DataError(f"lambda must be >= 0, got {lam}")
    if reg_norm not in REG_NORMS:
        raise DataError(f"unknown regularizer {reg_norm!r}; expected one of {REG_NORMS}")
    use_c = _resolve_use_c(model, use_c)
    kind, aux_axis = _parse_which(model, which)
    t = _training_weights(model, table, use_c)
    c_off = 1 if use_c else 0
    if kind == "main":
        kernelized = list(range(model.n_domains))
    else:
        kernelized = [aux_axis]
    modes = _modes_for(model, t.ndim, c_off, kernelized)
    mi, raw_grads = _plugin(t, modes, grad_axes=[m + c_off for m in kernelized])

    grads = []
    for m in range(model.n_domains):
        g = raw_grads.get(m + c_off)
        if g is None:
            g = np.zeros_like(model.coords[m])
        if reg_norm == "l2" and lam > 0:
            g = g - 2.0 * lam * model.coords[m]
        grads.append(g)
    reg = _reg_value(model, reg_norm)
    value = ObjectiveValue(total=mi - lam * reg, mi_term=mi, reg_term=reg, lam=lam)
    return value, GradientSet(grads=tuple(grads))


def objective_and_gradients(
    model: EmbeddingModel,
    table: CoocTable,
    which: str = "main",
    lam: float = 0.0,
    reg_norm: str = "l2",
    use_c: bool | None = None,
) -> tuple[ObjectiveValue, GradientSet]:
    """Value and gradient of one objective in one pass."""
    return _objective_and_gradients(model, table, which, lam, reg_norm, use_c)


# ---------------------------------------------------------------------------
# Fused per-epoch evaluation

PHASES = ("warmup", "main")


@dataclasses.dataclass(frozen=True)
class EpochEval:
    """Everything one training epoch needs, from a single contraction pass.

    ``grads`` belong to the phase's objective: the per-domain warm-up
    gradients (each domain against its own objective) or the main-objective
    gradients. ``gap`` is the inequality diagnostic, main information minus
    the warm-up bound.
    """

    main_value: ObjectiveValue
    aux_values: tuple[ObjectiveValue, ...]
    grads: GradientSet
    gap: float


def epoch_eval(
    model: EmbeddingModel,
    table: CoocTable,
    phase: str,
    lam: float = 0.0,
    reg_norm: str = "l2",
    use_c: bool | None = None,
    i_p: float | None = None,
) -> EpochEval:
    """Fused evaluation of both objective families plus the phase gradients.

    The single-kernel contractions are exactly the warm-up smoothed tensors
    and the intermediates of the main-objective chain, so the main value,
    every auxiliary value, the requested gradients, and the bound diagnostic
    all come out of one pass over the weights. Pass the table's discrete
    information as ``i_p`` to skip recomputing the constant every epoch.
    """
    if phase not in PHASES:
        raise DataError(f"unknown phase {phase!r}; expected one of {PHASES}")
    if lam < 0:
        raise DataError(f"lambda must be >= 0, got {lam}")
    if reg_norm not in REG_NORMS:
        raise DataError(f"unknown regularizer {reg_norm!r}; expected one of {REG_NORMS}")
    use_c = _resolve_use_c(model, use_c)
    t = _training_weights(model, table, use_c)
    c_off = 1 if use_c else 0
    n_dom = model.n_domains
    modes = [_mode_of(model, m) for m in range(n_dom)]

    dense = bool(np.all(t > 0))
    mask = None if dense else (t > 0)
    idx = None if dense else np.nonzero(mask)
    t_at = t if dense else t[idx]

    def data_term(g: np.ndarray) -> float:
        if dense:
            with np.errstate(divide="ignore"):
                return float(np.vdot(t, np.log(g)))
        return float(np.dot(t_at, np.log(g[idx])))

    # Per-axis marginal quantities, shared by every family.
    disc = []  # discrete marginal entropy terms, c axis included
    for a in range(t.ndim):
        p = _axis_marginal(t, a)
        nz = p > 0
        disc.append(float(np.dot(p[nz], np.log(p[nz]))))
    p_dom = [_axis_marginal(t, m + c_off) for m in range(n_dom)]
    smooth = [modes[m].kernel @ p_dom[m] for m in range(n_dom)]
    kern = [float(np.dot(p_dom[m], np.log(smooth[m]))) for m in range(n_dom)]
    disc_rest = [
        sum(disc[a] for a in range(t.ndim) if a != m + c_off) for m in range(n_dom)
    ]

    if i_p is None:
        i_p = data_term(t) - sum(disc)

    reg = _reg_value(model, reg_norm)

    def with_reg(mi: float) -> ObjectiveValue:
        return ObjectiveValue(total=mi - lam * reg, mi_term=mi, reg_term=reg, lam=lam)

    def finish_grad(m: int, b1: np.ndarray) -> np.ndarray:
        b2 = np.outer(p_dom[m] / smooth[m], p_dom[m])
        g = _displacement_sum((b1 - b2) * modes[m].kernel, modes[m].coords, modes[m].sigma)
        if reg_norm == "l2" and lam > 0:
            g = g - 2.0 * lam * model.coords[m]
        return g

    def unfold(x: np.ndarray, m: int) -> np.ndarray:
        return np.moveaxis(x, m + c_off, 0).reshape(x.shape[m + c_off], -1)

    def ratio_to(g: np.ndarray) -> np.ndarray:
        if dense:
            return t / g
        w = np.zeros_like(t)
        np.divide(t, g, out=w, where=mask)
        return w

    # Single-kernel contractions: each is one warm-up family's smoothed
    # tensor and a link in the main chain. Axis-ascending order throughout
    # keeps runs bit-reproducible.
    aux_mi = []
    grads: list[np.ndarray | None] = [None] * n_dom
    t_single: dict[int, np.ndarray] = {}
    for m in range(n_dom):
        t_m = _contract(t, modes[m].kernel, m + c_off)
        aux_mi.append(data_term(t_m) - kern[m] - disc_rest[m])
        if phase == "warmup":
            b1 = unfold(ratio_to(t_m), m) @ unfold(t, m).T
            grads[m] = finish_grad(m, b1)
        t_single[m] = t_m

    if phase == "main":
        partial: dict[int, np.ndarray] = {}
        for m in range(n_dom):
            others = [b for b in range(n_dom) if b != m]
            acc = t_single[others[0]]
            for b in others[1:]:
                acc = _contract(acc, modes[b].kernel, b + c_off)
            partial[m] = acc
        g_full = _contract(partial[0], modes[0].kernel, c_off)
        main_mi = data_term(g_full) - sum(kern) - (disc[0] if use_c else 0.0)
        w_full = ratio_to(g_full)
        for m in range(n_dom):
            b1 = unfold(w_full, m) @ unfold(partial[m], m).T
            grads[m] = finish_grad(m, b1)
    else:
        if n_dom == 2:
            g_full = _contract(t_single[1], modes[0].kernel, c_off)
        else:
            acc = _contract(t_single[1], modes[2].kernel, 2 + c_off)
            g_full = _contract(acc, modes[0].kernel, c_off)
        main_mi = data_term(g_full) - sum(kern) - (disc[0] if use_c else 0.0)

    gap = main_mi - (sum(aux_mi) - (n_dom - 1) * i_p)
    return EpochEval(
        main_value=with_reg(main_mi),
        aux_values=tuple(with_reg(v) for v in aux_mi),
        grads=GradientSet(grads=tuple(grads)),
        gap=gap,
    )


# ---------------------------------------------------------------------------
# Diagnostics


def discrete_total_correlation(weights: np.ndarray) -> float:
    """sum T log(T / prod marginals) for a discrete joint of any arity."""
    t = np.asarray(weights, dtype=float)
    if np.any(t < 0):
        raise DataError("joint probabilities must be nonnegative")
    total = float(t.sum())
    if not math.isfinite(total) or total <= 0:
        raise DataError("joint probabilities must have positive total mass")
    if abs(total - 1.0) > 1e-9:
        raise DataError(f"joint probabilities must sum to 1 (got {total!r})")
    idx = np.nonzero(t)
    vals = t[idx]
    log_ratio = np.log(vals)
    for a in range(t.ndim):
        p = _axis_marginal(t, a)
        log_ratio = log_ratio - np.log(p[idx[a]])
    return float(np.dot(vals, log_ratio))


def empirical_mi(table: CoocTable) -> float:
    """Information content of the discrete table itself.

    Mutual information for 2 domains; total correlation for 3.
    """
    return discrete_total_correlation(table.joint_dense())


def mi_inequality_gap(
    model: EmbeddingModel, table: CoocTable, use_c: bool | None = None
) -> float:
    """Diagnostic: plug-in I between latents minus its warm-up lower bound.

    Evaluated on the training weights (class-augmented when the model is).
    Computed as I_q - (sum_m F_aux_m - (M-1) * I_P). Strictly a log-line
    diagnostic: plug-in estimates may transiently dip below the bound that
    holds for true mutual information.
    """
    use_c = _resolve_use_c(model, use_c)
    t = _training_weights(model, table, use_c)
    c_off = 1 if use_c else 0
    modes_all = _modes_for(model, t.ndim, c_off, range(model.n_domains))
    i_q, _ = _plugin(t, modes_all)
    aux_sum = 0.0
    for m in range(model.n_domains):
        val, _ = _plugin(t, _modes_for(model, t.ndim, c_off, [m]))
        aux_sum += val
    i_p = discrete_total_correlation(t)
    return i_q - (aux_sum - (model.n_domains - 1) * i_p)
