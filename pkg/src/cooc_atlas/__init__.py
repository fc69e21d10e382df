"""Latent co-occurrence atlases: embed, smooth, query, and serve.

The package turns heterogeneous co-occurrence counts (2 or 3 item domains)
into per-domain latent embeddings by maximizing a kernel-density plug-in
estimate of mutual information, with class-probability reweighting and
Markov diffusion as preprocessing. On top of the trained model sit a
conditional-density query engine, an evaluation harness, a CLI, and an
HTTP server.

Attributes import lazily so that process-level knobs (the
``COOC_ATLAS_THREADS`` cap below) take effect before numerical libraries
load their thread pools.
"""
from __future__ import annotations

import importlib
import os

__version__ = "0.1.0"

_THREAD_ENV = "COOC_ATLAS_THREADS"


def _apply_thread_cap() -> None:
    """Propagate the package thread cap to the BLAS/OpenMP runtimes.

    Only effective if it runs before numpy loads, hence the lazy imports
    throughout this module. Invalid values are ignored here; the CLI
    validates and reports them.
    """
    cap = os.environ.get(_THREAD_ENV, "").strip()
    if cap.isdigit() and int(cap) >= 1:
        for var in (
            "OPENBLAS_NUM_THREADS",
            "OMP_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ[var] = cap


_apply_thread_cap()

_EXPORTS = {
    # errors
    "DataError": "errors",
    "UnknownEntityError": "errors",
    "NumericalError": "errors",
    # data model and preprocessing
    "DomainSpec": "data_model",
    "CoocTable": "data_model",
    "PuConfig": "data_model",
    "SyntheticParams": "data_model",
    "SyntheticTripleParams": "data_model",
    "SyntheticData": "data_model",
    "load_cooc_table": "data_model",
    "save_cooc_table": "data_model",
    "save_synthetic": "data_model",
    "generate_synthetic": "data_model",
    "generate_synthetic_triple": "data_model",
    "estimate_negative_counts": "data_model",
    "estimate_pu": "data_model",
    "markov_diffuse": "data_model",
    # tensor views
    "TensorView": "multiway",
    "total_correlation": "multiway",
    "pair_marginal": "multiway",
    # objective
    "ObjectiveValue": "objective",
    "GradientSet": "objective",
    "main_objective": "objective",
    "aux_objectives": "objective",
    "gradient": "objective",
    "objective_and_gradients": "objective",
    "discrete_total_correlation": "objective",
    "empirical_mi": "objective",
    "mi_inequality_gap": "objective",
    # training
    "TrainConfig": "trainer",
    "TrainReport": "trainer",
    "SigmaPolicy": "trainer",
    "NoiseSchedule": "trainer",
    "train": "trainer",
    "prepare_table": "trainer",
    "prepare_from_provenance": "trainer",
    # density model and queries
    "EmbeddingModel": "kde",
    "DensityEvaluator": "kde",
    "HeatmapGrid": "kde",
    "save_model": "kde",
    "load_model": "kde",
    "rule_of_thumb_bandwidth": "kde",
    "ToiQuery": "query",
    "ExplorationTrail": "query",
    "cbcp_heatmap": "query",
    "cbcp_rank_items": "query",
    "new_trail": "query",
    "trail_step": "query",
    "save_trail": "query",
    "load_trail": "query",
    "replay_trail": "query",
    # evaluation
    "EvalRow": "evaluation",
    "EvalReport": "evaluation",
    "parse_report": "evaluation",
    "kl_eval": "evaluation",
    "dimension_sweep": "evaluation",
    "jensen_bound_check": "evaluation",
    "model_cooc_prob": "evaluation",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name: str):
    try:
        module = _EXPORTS[name]
    except KeyError:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}") from None
    value = getattr(importlib.import_module(f".{module}", __name__), name)
    globals()[name] = value
    return value


def __dir__() -> list[str]:
    return sorted(set(globals()) | set(_EXPORTS))
