"""Training orchestration: init, two-phase noisy ascent, bandwidth policy.

Phase 1 (warm-up) ascends each domain's auxiliary objective, pairing that
domain's kernel density against the joint of every other axis; phase 2
ascends the main objective across all latent domains at once. Bandwidths are
re-derived from the current embedding variance every epoch, gaussian-init
runs add decaying gradient noise, and sup-norm regularization is realized as
clipping to the unit box after each step.

Per-epoch diagnostics go to the ``cooc_atlas.trainer`` logger and into the
returned report, one line per epoch:

    epoch=<n> phase=<warmup|main> mi_term=<...> reg_term=<...> gap=<...>

where ``gap`` is the warm-up inequality diagnostic (never asserted; plug-in
estimates may transiently dip below the true-MI bound).
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from typing import Mapping, Sequence

import numpy as np

from .data_model import CoocTable, PuConfig, estimate_pu, markov_diffuse
from .errors import DataError, NumericalError
from .kde import EmbeddingModel
from .objective import (
    ObjectiveValue,
    REG_NORMS,
    discrete_total_correlation,
    epoch_eval,
    main_objective,
)

log = logging.getLogger("cooc_atlas.trainer")

INIT_KINDS = ("pca", "gaussian")

# Reference bandwidth scale; the variance-derived bandwidth never drops
# below a tenth of it.
SIGMA0 = 1.0

# Singular values at or below this fraction of the largest are treated as
# rank deficiency during PCA init.
PCA_RANK_RTOL = 1e-12


@dataclasses.dataclass(frozen=True)
class SigmaPolicy:
    """Kernel bandwidth rule, re-applied to the live embedding every epoch.

    ``variance_fraction`` sets sigma to ``value`` times the mean per-axis
    variance of the domain's coordinates, floored at ``floor`` so early
    near-coincident epochs keep a usable kernel. ``fixed`` pins sigma to
    ``value`` outright.
    """

    mode: str = "variance_fraction"
    value: float = 1.0 / 20.0
    floor: float = SIGMA0 / 10.0

    def __post_init__(self) -> None:
        if self.mode not in ("variance_fraction", "fixed"):
            raise DataError(f"unknown sigma policy mode {self.mode!r}")
        if not self.value > 0:
            raise DataError(f"sigma policy value must be > 0, got {self.value}")
        if self.mode == "variance_fraction" and not self.floor > 0:
            raise DataError(f"sigma floor must be > 0, got {self.floor}")

    def derive(self, coords: np.ndarray) -> float:
        if self.mode == "fixed":
            return float(self.value)
        mean_var = float(np.mean(np.var(coords, axis=0)))
        return max(self.value * mean_var, self.floor)

    def initial(self) -> float:
        """Bandwidth in force before any coordinates exist.

        Near-coincident init clouds sit below the variance floor by
        construction, so this is what the init spread must be scaled
        against for the cloud to start well inside one kernel width.
        """
        return float(self.value) if self.mode == "fixed" else float(self.floor)


@dataclasses.dataclass(frozen=True)
class NoiseSchedule:
    """Gradient-noise amplitude: initial * (1 - t/T)^decay, in sigma units."""

    initial: float = 0.05
    decay: float = 1.0

    def __post_init__(self) -> None:
        if self.initial < 0:
            raise DataError(f"noise amplitude must be >= 0, got {self.initial}")
        if self.decay <= 0:
            raise DataError(f"noise decay must be > 0, got {self.decay}")

    def amplitude(self, epoch: int, total: int) -> float:
        if total <= 0:
            return 0.0
        frac = max(0.0, 1.0 - epoch / total)
        return self.initial * frac**self.decay


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    dims: tuple[int, ...] = (2,)
    lam: float = 0.01
    reg_norm: str = "l2"
    pu: PuConfig = dataclasses.field(default_factory=PuConfig)
    diffusion_steps: int = 1
    init: str = "pca"
    init_scale_frac: float = 1.0 / 20.0
    sigma_policy: SigmaPolicy = dataclasses.field(default_factory=SigmaPolicy)
    warmup_iters: int = 100
    main_iters: int = 100
    step_size: float = 20.0
    noise: NoiseSchedule = dataclasses.field(default_factory=NoiseSchedule)
    seed: int = 0
    use_c: bool = True

    def __post_init__(self) -> None:
        if not self.dims or any(int(d) < 1 for d in self.dims):
            raise DataError(f"dims must be positive, got {self.dims}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.lam < 0:
            raise DataError(f"lambda must be >= 0, got {self.lam}")
        if self.reg_norm not in REG_NORMS:
            raise DataError(f"unknown regularizer {self.reg_norm!r}; expected one of {REG_NORMS}")
        if int(self.diffusion_steps) < 1:
            raise DataError(f"diffusion_steps must be >= 1, got {self.diffusion_steps}")
        if self.init not in INIT_KINDS:
            raise DataError(f"unknown init {self.init!r}; expected one of {INIT_KINDS}")
        if not (0.01 <= self.init_scale_frac <= 0.1):
            raise DataError(
                f"init_scale_frac must lie in [1/100, 1/10], got {self.init_scale_frac}"
            )
        if int(self.warmup_iters) < 0 or int(self.main_iters) < 0:
            raise DataError("iteration counts must be >= 0")
        if int(self.warmup_iters) + int(self.main_iters) < 1:
            raise DataError("at least one training iteration is required")
        if not self.step_size > 0:
            raise DataError(f"step_size must be > 0, got {self.step_size}")

    def dims_for(self, n_domains: int) -> tuple[int, ...]:
        if len(self.dims) == 1:
            return self.dims * n_domains
        if len(self.dims) != n_domains:
            raise DataError(
                f"config has {len(self.dims)} dims but the table has {n_domains} domains"
            )
        return self.dims


@dataclasses.dataclass(frozen=True)
class TrainReport:
    """Per-phase objective traces plus run bookkeeping.

    Trace entries hold the objective at the start of each epoch (the value
    the epoch's gradient was computed at); ``final_objective`` is evaluated
    once more after the last step. ``converged`` is False only when a phase
    was cut short, with the abort epoch and reason recorded.
    """

    warmup_trace: tuple[ObjectiveValue, ...]
    main_trace: tuple[ObjectiveValue, ...]
    final_objective: ObjectiveValue
    wall_clock: float
    final_sigmas: tuple[float, ...]
    converged: bool
    aborted_epoch: int | None
    abort_reason: str | None
    pca_fallback: tuple[tuple[str, int], ...]
    log_lines: tuple[str, ...]


# ---------------------------------------------------------------------------
# Data preparation


def prepare_table(table: CoocTable, cfg: TrainConfig) -> CoocTable:
    """Diffuse the counts, then (for class-augmented training) run the
    positive-unlabeled estimate. A table that already carries cooc_prob is
    taken as prepared and returned unchanged."""
    if table.cooc_prob is not None:
        return table
    out = markov_diffuse(table, cfg.diffusion_steps)
    if cfg.use_c:
        out = estimate_pu(out, cfg.pu)
    return out


def prepare_from_provenance(table: CoocTable, provenance: Mapping[str, object]) -> CoocTable:
    """Reproduce a trained model's weight table from its provenance record."""
    cfg = TrainConfig(
        diffusion_steps=int(provenance.get("diffusion_steps", 1)),
        pu=PuConfig(
            alpha=float(provenance.get("pu_alpha", PuConfig.alpha)),
            beta=float(provenance.get("pu_beta", PuConfig.beta)),
        ),
        use_c=bool(provenance.get("use_c", True)),
    )
    return prepare_table(table, cfg)


# ---------------------------------------------------------------------------
# Initialization


def pca_scores(matrix: np.ndarray, d: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """Raw principal-component scores of the rows of ``matrix``.

    Columns are centered, directions carry a deterministic sign (largest
    absolute loading positive), and axes beyond the numerical rank are
    exactly zero; their indices are returned for rescue-noise injection.
    """
    x = np.asarray(matrix, dtype=float)
    centered = x - x.mean(axis=0, keepdims=True)
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    scores = np.zeros((x.shape[0], d))
    deficient = []
    s_max = float(s[0]) if s.size else 0.0
    for k in range(d):
        if k >= s.size or s[k] <= s_max * PCA_RANK_RTOL or s_max == 0.0:
            deficient.append(k)
            continue
        col = u[:, k]
        if col[int(np.argmax(np.abs(col)))] < 0:
            col = -col
        scores[:, k] = col * s[k]
    return scores, tuple(deficient)


def _mode_unfolding(table: CoocTable, axis: int) -> np.ndarray:
    joint = table.joint_dense()
    return np.moveaxis(joint, axis, 0).reshape(joint.shape[axis], -1)


def _init_embeddings(
    table: CoocTable, cfg: TrainConfig, rng: np.random.Generator
) -> tuple[EmbeddingModel, tuple[tuple[str, int], ...]]:
    dims = cfg.dims_for(table.n_domains)
    spread = cfg.init_scale_frac * cfg.sigma_policy.initial()
    coords = []
    fallback = []
    for axis, (dom, d) in enumerate(zip(table.domains, dims)):
        if cfg.init == "gaussian":
            x = rng.normal(0.0, spread, size=(dom.size, d))
        else:
            scores, deficient = pca_scores(_mode_unfolding(table, axis), d)
            live = [k for k in range(d) if k not in deficient]
            if live:
                current = float(np.sqrt(np.mean(np.var(scores[:, live], axis=0))))
                if current > 0:
                    scores = scores * (spread / current)
            for k in deficient:
                scores[:, k] = rng.normal(0.0, spread, size=dom.size)
                fallback.append((dom.name, k))
            x = scores
        coords.append(x)
    policy = cfg.sigma_policy
    sigmas = [policy.derive(x) for x in coords]
    model = EmbeddingModel(
        domains=table.domains,
        coords=tuple(coords),
        sigmas=tuple(sigmas),
        use_c=cfg.use_c,
    )
    return model, tuple(fallback)


def init_embeddings(table: CoocTable, cfg: TrainConfig) -> EmbeddingModel:
    """Seed-deterministic initial coordinates with spread init_scale_frac*sigma.

    PCA init projects each domain's mode unfolding of the joint onto its top
    principal directions and rescales to the target spread; rank-deficient
    directions fall back to gaussian draws (flagged in the train report when
    reached through ``train``).
    """
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    model, _ = _init_embeddings(table, cfg, rng)
    return model


# ---------------------------------------------------------------------------
# Training loop


def _format_line(epoch: int, phase: str, value: ObjectiveValue, gap: float) -> str:
    return (
        f"epoch={epoch} phase={phase} mi_term={value.mi_term:.12g} "
        f"reg_term={value.reg_term:.12g} gap={gap:.12g}"
    )


def _provenance(cfg: TrainConfig, table: CoocTable) -> dict[str, object]:
    return {
        "dims": list(cfg.dims_for(table.n_domains)),
        "lambda": cfg.lam,
        "reg_norm": cfg.reg_norm,
        "pu_alpha": cfg.pu.alpha,
        "pu_beta": cfg.pu.beta,
        "diffusion_steps": cfg.diffusion_steps,
        "init": cfg.init,
        "init_scale_frac": cfg.init_scale_frac,
        "sigma_policy": {
            "mode": cfg.sigma_policy.mode,
            "value": cfg.sigma_policy.value,
            "floor": cfg.sigma_policy.floor,
        },
        "warmup_iters": cfg.warmup_iters,
        "main_iters": cfg.main_iters,
        "step_size": cfg.step_size,
        "noise_initial": cfg.noise.initial,
        "noise_decay": cfg.noise.decay,
        "seed": cfg.seed,
        "use_c": cfg.use_c,
        "order": table.n_domains,
    }


def train(table: CoocTable, cfg: TrainConfig) -> tuple[EmbeddingModel, TrainReport]:
    """Run the two-phase schedule and return the trained model with its report.

    A raw table is prepared in place (diffusion, then the PU estimate when
    class-augmented); a table that already carries cooc_prob is used as-is.
    Aborts with NumericalError on a non-finite objective, or when the main
    objective decreases by more than half for five consecutive epochs.
    """
    t_start = time.monotonic()
    prepared = prepare_table(table, cfg)
    if cfg.use_c and prepared.cooc_prob is None:
        raise DataError("class-augmented training needs a table with cooc_prob")
    cfg.dims_for(prepared.n_domains)  # fail fast on a dims/domain-count mismatch

    init_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    noise_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    model, fallback = _init_embeddings(prepared, cfg, init_rng)
    coords = [np.array(x) for x in model.coords]
    policy = cfg.sigma_policy
    noisy = cfg.init == "gaussian"

    warmup_trace: list[ObjectiveValue] = []
    main_trace: list[ObjectiveValue] = []
    log_lines: list[str] = []
    aborted_epoch: int | None = None
    abort_reason: str | None = None

    i_p = discrete_total_correlation(prepared.weights(cfg.use_c))

    def current_model() -> EmbeddingModel:
        for m, x in enumerate(coords):
            if not np.all(np.isfinite(x)):
                raise NumericalError(
                    f"non-finite coordinates in domain {prepared.domains[m].name!r}; "
                    f"step_size {cfg.step_size} is likely too large"
                )
        sigmas = tuple(policy.derive(x) for x in coords)
        if not all(math.isfinite(s) for s in sigmas):
            raise NumericalError(
                f"bandwidth overflow; step_size {cfg.step_size} is likely too large"
            )
        return EmbeddingModel(
            domains=prepared.domains,
            coords=tuple(coords),
            sigmas=sigmas,
            use_c=cfg.use_c,
        )

    def apply_step(m: int, grad: np.ndarray, sigma: float, ampl: float) -> None:
        try:
            step = cfg.step_size * sigma**2 * grad
        except OverflowError:
            raise NumericalError(
                f"step scale overflowed at sigma {sigma:.3g}; step_size "
                f"{cfg.step_size} is likely too large"
            ) from None
        if noisy and ampl > 0:
            step = step + ampl * sigma * noise_rng.standard_normal(coords[m].shape)
        coords[m] = coords[m] + step
        if cfg.reg_norm == "linf":
            np.clip(coords[m], -1.0, 1.0, out=coords[m])

    def build_report(final_value: ObjectiveValue, sigmas: tuple[float, ...]) -> TrainReport:
        return TrainReport(
            warmup_trace=tuple(warmup_trace),
            main_trace=tuple(main_trace),
            final_objective=final_value,
            wall_clock=time.monotonic() - t_start,
            final_sigmas=sigmas,
            converged=aborted_epoch is None,
            aborted_epoch=aborted_epoch,
            abort_reason=abort_reason,
            pca_fallback=fallback,
            log_lines=tuple(log_lines),
        )

    epoch = 0
    try:
        for t in range(cfg.warmup_iters):
            snap = current_model()
            ev = epoch_eval(
                snap, prepared, "warmup", cfg.lam, cfg.reg_norm, cfg.use_c, i_p=i_p
            )
            ampl = cfg.noise.amplitude(t, cfg.warmup_iters)
            mi_sum = sum(v.mi_term for v in ev.aux_values)
            if not math.isfinite(mi_sum):
                raise NumericalError(f"non-finite warm-up objective at epoch {epoch}")
            for m in range(len(coords)):
                apply_step(m, ev.grads.grads[m], snap.sigmas[m], ampl)
            reg_val = ev.aux_values[0].reg_term
            value = ObjectiveValue(
                total=mi_sum - cfg.lam * reg_val,
                mi_term=mi_sum,
                reg_term=reg_val,
                lam=cfg.lam,
            )
            warmup_trace.append(value)
            line = _format_line(epoch, "warmup", value, ev.gap)
            log_lines.append(line)
            log.info("%s", line)
            epoch += 1

        drop_streak = 0
        prev_total: float | None = None
        for t in range(cfg.main_iters):
            snap = current_model()
            ev = epoch_eval(
                snap, prepared, "main", cfg.lam, cfg.reg_norm, cfg.use_c, i_p=i_p
            )
            value = ev.main_value
            ampl = cfg.noise.amplitude(t, cfg.main_iters)
            if not np.isfinite(value.total):
                raise NumericalError(f"non-finite main objective at epoch {epoch}")
            if prev_total is not None and value.total < prev_total - 0.5 * abs(prev_total):
                drop_streak += 1
                if drop_streak >= 5:
                    raise NumericalError(
                        f"main objective fell by more than half for 5 consecutive "
                        f"epochs (epoch {epoch}); step_size {cfg.step_size} is "
                        f"likely too large"
                    )
            else:
                drop_streak = 0
            prev_total = value.total
            for m in range(len(coords)):
                apply_step(m, ev.grads.grads[m], snap.sigmas[m], ampl)
            main_trace.append(value)
            line = _format_line(epoch, "main", value, ev.gap)
            log_lines.append(line)
            log.info("%s", line)
            epoch += 1

        final = current_model()
        final_value = main_objective(final, prepared, cfg.lam, cfg.reg_norm, cfg.use_c)
    except NumericalError as exc:
        # Abort, but leave the flagged partial report on the exception so
        # callers can inspect how far the run got. The live coordinates may
        # already be unusable here, so the final evaluation is best-effort.
        aborted_epoch = epoch
        abort_reason = str(exc)
        try:
            snap = current_model()
            final_value = main_objective(snap, prepared, cfg.lam, cfg.reg_norm, cfg.use_c)
            sigmas = snap.sigmas
        except (DataError, NumericalError):
            final_value = ObjectiveValue(
                total=float("nan"), mi_term=float("nan"), reg_term=float("nan"), lam=cfg.lam
            )
            sigmas = ()
        exc.report = build_report(final_value, sigmas)
        raise

    model = EmbeddingModel(
        domains=prepared.domains,
        coords=final.coords,
        sigmas=final.sigmas,
        use_c=cfg.use_c,
        weights_hash=prepared.weights_hash(cfg.use_c),
        provenance=_provenance(cfg, prepared),
    )
    return model, build_report(final_value, model.sigmas)


def train_multiway(table: CoocTable, cfg: TrainConfig) -> tuple[EmbeddingModel, TrainReport]:
    """Three-domain training: the same schedule on the total-correlation
    objective with three coordinate sets."""
    if table.n_domains != 3:
        raise DataError(f"train_multiway needs a 3-domain table, got {table.n_domains}")
    return train(table, cfg)
