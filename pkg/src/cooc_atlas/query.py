"""Interactive conditional queries over a trained embedding.

The core gesture is coloring-by-conditional-probability: pick anchor items
(or free latent points) in one or two domains, then read the conditional
density q(target | anchors) over a remaining domain, either as a raster
map or as normalized per-item scores. Repeatedly re-anchoring on a result
forms an exploration trail, which serializes to a line-delimited session
file and replays bit-identically.

Queries never mutate the model; ranked scores are the conditional density
evaluated at each target item's coordinate (a delta read-out, not an
integral over the target kernel), normalized over the domain's items.
"""
from __future__ import annotations

import dataclasses
import json
import os
import uuid
from typing import Mapping, Sequence

import numpy as np

from .data_model import CoocTable, DataError
from .kde import DensityEvaluator, EmbeddingModel, HeatmapGrid

__all__ = [
    "DEFAULT_RESOLUTION",
    "DEFAULT_TOP_K",
    "ExplorationTrail",
    "ToiQuery",
    "cbcp_heatmap",
    "cbcp_rank_items",
    "load_trail",
    "new_trail",
    "query_evaluator",
    "replay_trail",
    "resolve_given",
    "save_trail",
    "trail_step",
]

MIN_RESOLUTION = 16
MAX_RESOLUTION = 1024
DEFAULT_RESOLUTION = 128
DEFAULT_TOP_K = 10

# An anchor is an item identifier or a free latent point.
GivenRef = "str | tuple[float, ...]"


def _normalize_ref(ref) -> str | tuple[float, ...]:
    if isinstance(ref, str):
        return ref
    if isinstance(ref, (int, float, bool)):
        raise DataError(f"given reference must be an item id or a coordinate sequence, got {ref!r}")
    try:
        point = tuple(float(x) for x in ref)
    except TypeError:
        raise DataError(
            f"given reference must be an item id or a coordinate sequence, got {ref!r}"
        ) from None
    if not point:
        raise DataError("a free latent point needs at least one coordinate")
    if not all(np.isfinite(point)):
        raise DataError(f"free latent point {point!r} has non-finite coordinates")
    return point


@dataclasses.dataclass(frozen=True)
class ToiQuery:
    """A target-of-interest query.

    ``given`` anchors one or more domains, each to an item id or a free
    latent point; ``target_domain`` names the domain the conditional is
    read over and must not be anchored itself.
    """

    given: tuple[tuple[str, str | tuple[float, ...]], ...]
    target_domain: str
    grid_resolution: int = DEFAULT_RESOLUTION
    top_k: int = DEFAULT_TOP_K

    def __post_init__(self) -> None:
        entries = []
        for entry in self.given:
            try:
                name, ref = entry
            except (TypeError, ValueError):
                raise DataError(f"given entry {entry!r} is not a (domain, reference) pair") from None
            if not isinstance(name, str) or not name:
                raise DataError(f"given entry {entry!r} has no domain name")
            entries.append((name, _normalize_ref(ref)))
        object.__setattr__(self, "given", tuple(entries))
        if not self.given:
            raise DataError("a query needs at least one given anchor")
        names = [name for name, _ in self.given]
        if len(set(names)) != len(names):
            raise DataError(f"given domains must be distinct, got {names}")
        if not isinstance(self.target_domain, str) or not self.target_domain:
            raise DataError("target_domain must be a nonempty domain name")
        if self.target_domain in names:
            raise DataError(f"target domain {self.target_domain!r} appears in the given list")
        if not isinstance(self.grid_resolution, int) or isinstance(self.grid_resolution, bool):
            raise DataError(f"grid_resolution must be an int, got {self.grid_resolution!r}")
        if not MIN_RESOLUTION <= self.grid_resolution <= MAX_RESOLUTION:
            raise DataError(
                f"grid_resolution must lie in [{MIN_RESOLUTION}, {MAX_RESOLUTION}], "
                f"got {self.grid_resolution}"
            )
        if not isinstance(self.top_k, int) or isinstance(self.top_k, bool) or self.top_k < 1:
            raise DataError(f"top_k must be a positive int, got {self.top_k!r}")

    def to_document(self) -> dict:
        return {
            "given": [
                [name, ref if isinstance(ref, str) else list(ref)] for name, ref in self.given
            ],
            "target_domain": self.target_domain,
            "grid_resolution": self.grid_resolution,
            "top_k": self.top_k,
        }

    @staticmethod
    def from_document(doc: Mapping) -> "ToiQuery":
        if not isinstance(doc, Mapping):
            raise DataError(f"query document must be an object, got {type(doc).__name__}")
        given = doc.get("given")
        if not isinstance(given, Sequence) or isinstance(given, str):
            raise DataError("query document needs a 'given' list")
        try:
            return ToiQuery(
                given=tuple((entry[0], entry[1]) for entry in given),
                target_domain=doc.get("target_domain"),
                grid_resolution=doc.get("grid_resolution", DEFAULT_RESOLUTION),
                top_k=doc.get("top_k", DEFAULT_TOP_K),
            )
        except (IndexError, TypeError):
            raise DataError(f"malformed query document: {doc!r}") from None


def resolve_given(model: EmbeddingModel, query: ToiQuery) -> list[tuple[str, np.ndarray]]:
    """Map the query's anchors to full-dimension latent coordinates."""
    resolved = []
    for name, ref in query.given:
        axis = model.domain_axis(name)
        if isinstance(ref, str):
            idx = model.domains[axis].index_of(ref)
            point = np.array(model.coords[axis][idx], dtype=float)
        else:
            point = np.asarray(ref, dtype=float)
            want = model.coords[axis].shape[1]
            if point.shape != (want,):
                raise DataError(
                    f"free point for domain {name!r} has {point.size} coordinates, "
                    f"expected {want}"
                )
        resolved.append((name, point))
    return resolved


def query_evaluator(model: EmbeddingModel, table: CoocTable) -> DensityEvaluator:
    """Evaluator the queries run against.

    A class-augmented model conditions on the co-occurrence class: queries
    use the c = 1 slice of the weights, renormalized. The background slice
    carries only the sampling measure, not the association being explored.
    """
    evaluator = DensityEvaluator(model, table)
    if evaluator.has_c:
        slice_1 = np.array(evaluator.weights[1], dtype=float)
        evaluator = DensityEvaluator.with_weights(model, slice_1 / slice_1.sum())
    return evaluator


def cbcp_heatmap(model: EmbeddingModel, table: CoocTable, query: ToiQuery) -> HeatmapGrid:
    """Raster of q(target | given) over the target domain's latent box."""
    evaluator = query_evaluator(model, table)
    given = resolve_given(model, query)
    return evaluator.conditional_density(query.target_domain, given, query.grid_resolution)


def cbcp_rank_items(
    model: EmbeddingModel, table: CoocTable, query: ToiQuery
) -> list[tuple[str, float]]:
    """Target items ranked by conditional score.

    Scores are the conditional density at each item's coordinate,
    normalized over the whole domain before the list is cut to ``top_k``;
    ties keep item-index order.
    """
    evaluator = query_evaluator(model, table)
    given = resolve_given(model, query)
    axis = model.domain_axis(query.target_domain)
    density = evaluator.conditional_at(query.target_domain, model.coords[axis], given)
    total = float(density.sum())
    if not np.isfinite(total) or total <= 0.0:
        raise DataError(
            f"conditional scores over domain {query.target_domain!r} do not normalize"
        )
    scores = density / total
    # stable sort on the negated scores: descending, ties by index ascending
    order = np.argsort(-scores, kind="stable")[: min(query.top_k, scores.size)]
    items = model.domains[axis].items
    return [(items[i], float(scores[i])) for i in order]


# ---------------------------------------------------------------------------
# Exploration trails


@dataclasses.dataclass(frozen=True)
class ExplorationTrail:
    """An ordered record of queries and the item chosen after each one.

    ``chosen`` is the item id the user re-anchored on (None while the step
    is still open). Trails are append-only value objects; persisting and
    replaying one reproduces every heatmap bit-identically.
    """

    session_id: str
    steps: tuple[tuple[ToiQuery, str | None], ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.session_id, str) or not self.session_id:
            raise DataError("session_id must be a nonempty string")
        for step in self.steps:
            try:
                query, chosen = step
            except (TypeError, ValueError):
                raise DataError(f"trail step {step!r} is not a (query, chosen) pair") from None
            if not isinstance(query, ToiQuery):
                raise DataError(f"trail step {step!r} does not start with a query")
            if chosen is not None and not isinstance(chosen, str):
                raise DataError(f"chosen item must be an item id or None, got {chosen!r}")

    def __len__(self) -> int:
        return len(self.steps)


def new_trail(session_id: str | None = None) -> ExplorationTrail:
    return ExplorationTrail(session_id=session_id or uuid.uuid4().hex)


def trail_step(
    trail: ExplorationTrail, next_query: ToiQuery, chosen: str | None = None
) -> ExplorationTrail:
    """Append one step; the input trail is unchanged."""
    if not isinstance(next_query, ToiQuery):
        raise DataError(f"trail step needs a ToiQuery, got {type(next_query).__name__}")
    return ExplorationTrail(
        session_id=trail.session_id, steps=trail.steps + ((next_query, chosen),)
    )


def trail_to_lines(trail: ExplorationTrail) -> list[str]:
    """Line-delimited form: a session header, then one line per step."""
    lines = [json.dumps({"session": trail.session_id}, sort_keys=True)]
    for query, chosen in trail.steps:
        lines.append(
            json.dumps({"query": query.to_document(), "chosen": chosen}, sort_keys=True)
        )
    return lines


def trail_from_lines(lines: Sequence[str]) -> ExplorationTrail:
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            rows.append(json.loads(raw))
        except json.JSONDecodeError as exc:
            raise DataError(f"trail line {lineno}: invalid JSON: {exc}") from None
    if not rows:
        raise DataError("trail session file is empty")
    header = rows[0]
    if not isinstance(header, Mapping) or not isinstance(header.get("session"), str):
        raise DataError("trail session file does not start with a session header")
    steps = []
    for row in rows[1:]:
        if not isinstance(row, Mapping) or "query" not in row:
            raise DataError(f"malformed trail step: {row!r}")
        chosen = row.get("chosen")
        if chosen is not None and not isinstance(chosen, str):
            raise DataError(f"malformed trail step: {row!r}")
        steps.append((ToiQuery.from_document(row["query"]), chosen))
    return ExplorationTrail(session_id=header["session"], steps=tuple(steps))


def save_trail(trail: ExplorationTrail, path: str | os.PathLike) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(trail_to_lines(trail)) + "\n")
    os.replace(tmp, path)


def load_trail(path: str | os.PathLike) -> ExplorationTrail:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"{path}: cannot read trail session file: {exc}") from None
    return trail_from_lines(lines)


def replay_trail(
    model: EmbeddingModel, table: CoocTable, trail: ExplorationTrail
) -> list[HeatmapGrid]:
    """Recompute every step's heatmap, in order."""
    return [cbcp_heatmap(model, table, query) for query, _ in trail.steps]
