"""HTTP facade over a frozen embedding: maps, conditionals, trails.

The service is a pure read layer: it performs zero training, holds one
immutable snapshot (model + weight table + per-domain bounding boxes), and
computes heatmaps on demand. Identical requests produce identical bytes.

Wire schema (JSON unless noted; field names are stable):

- ``GET /model/meta`` -> ``{"model_hash", "order", "use_c", "domains":
  [{"name", "size", "dims", "projection"}]}`` where ``projection`` is
  ``"full"`` when the latent space is displayed as-is (d <= 2) or
  ``"first-2"`` when higher-dimensional coordinates are projected for
  display while densities use every axis.
- ``GET /map/{domain}`` -> ``{"domain", "projection", "items": [...],
  "coords": [[x, y], ...]}`` (1-D layouts pad y with 0.0).
- ``POST /cbcp`` with ``{"given": [[domain, item-or-point], ...],
  "target_domain", "grid_resolution"?, "top_k"?, "model_hash"?}`` ->
  ``{"model_hash", "target_domain", "resolution", "raster_dims",
  "axis_ranges", "values"`` (row-major, flattened), ``"vmin", "vmax",
  "argmax", "ranking": [[item, score], ...], "item_coords"}``. A non-null
  ``model_hash`` that does not match the snapshot is rejected with 409.
- ``POST /trail`` with ``{"session_id"?, "query"?, "chosen"?}`` -> the
  updated ``{"session_id", "length"}``; omitting ``session_id`` opens a
  new session, and a ``query`` (same shape as ``/cbcp``) appends a step.
- ``GET /trail/{id}`` -> ``{"session_id", "steps": [{"query", "chosen"}]}``;
  ``?format=jsonl`` returns the line-delimited session file instead.
- ``DELETE /trail/{id}`` closes a session; later references get 404.

Errors: 400 malformed query, 404 unknown item/domain/session, 409 stale
client hash, 503 while no snapshot is loaded. Validation failures never
surface as framework 422s.
"""
from __future__ import annotations

import json
import threading
from typing import Mapping

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from .data_model import CoocTable
from .errors import DataError, UnknownEntityError
from .kde import EmbeddingModel, HeatmapGrid
from .query import (
    ExplorationTrail,
    ToiQuery,
    cbcp_heatmap,
    cbcp_rank_items,
    new_trail,
    trail_step,
    trail_to_lines,
)

HTTP_BAD_REQUEST = 400
HTTP_NOT_FOUND = 404
HTTP_CONFLICT = 409
HTTP_UNAVAILABLE = 503


class ModelSnapshot:
    """Immutable serving state: model, table, and display bounding boxes."""

    def __init__(self, model: EmbeddingModel, table: CoocTable) -> None:
        self.model = model
        self.table = table
        self.hash = model.content_hash()
        self.boxes = {}
        for dom, coords in zip(model.domains, model.coords):
            show = coords[:, : min(coords.shape[1], 2)]
            self.boxes[dom.name] = [
                [float(show[:, a].min()), float(show[:, a].max())]
                for a in range(show.shape[1])
            ]

    def display_coords(self, axis: int) -> np.ndarray:
        """First-two-axes projection used by the map endpoints."""
        coords = self.model.coords[axis]
        if coords.shape[1] == 1:
            return np.column_stack([coords[:, 0], np.zeros(coords.shape[0])])
        return coords[:, :2]

    def projection_label(self, axis: int) -> str:
        return "full" if self.model.coords[axis].shape[1] <= 2 else "first-2"


class TrailStore:
    """In-memory sessions with single-writer-per-session appends."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._trails: dict[str, ExplorationTrail] = {}

    def create(self) -> ExplorationTrail:
        with self._lock:
            trail = new_trail()
            self._trails[trail.session_id] = trail
            return trail

    def get(self, session_id: str) -> ExplorationTrail:
        with self._lock:
            try:
                return self._trails[session_id]
            except KeyError:
                raise UnknownEntityError(f"unknown trail session {session_id!r}") from None

    def append(self, session_id: str, query: ToiQuery, chosen: str | None) -> ExplorationTrail:
        with self._lock:
            if session_id not in self._trails:
                raise UnknownEntityError(f"unknown trail session {session_id!r}")
            trail = trail_step(self._trails[session_id], query, chosen)
            self._trails[session_id] = trail
            return trail

    def delete(self, session_id: str) -> None:
        with self._lock:
            if session_id not in self._trails:
                raise UnknownEntityError(f"unknown trail session {session_id!r}")
            del self._trails[session_id]


class SnapshotBox:
    """Atomic holder for the current snapshot; swap is a version gate."""

    def __init__(self, snapshot: ModelSnapshot | None = None) -> None:
        self._lock = threading.Lock()
        self._snapshot = snapshot

    def get(self) -> ModelSnapshot:
        with self._lock:
            if self._snapshot is None:
                raise LookupError("no model snapshot loaded")
            return self._snapshot

    def swap(self, snapshot: ModelSnapshot) -> None:
        with self._lock:
            self._snapshot = snapshot


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def _grid_payload(snapshot: ModelSnapshot, grid: HeatmapGrid, ranked) -> dict:
    values = np.asarray(grid.values)
    return {
        "model_hash": snapshot.hash,
        "target_domain": grid.target_domain,
        "resolution": grid.resolution,
        "raster_dims": len(grid.axis_ranges),
        "axis_ranges": [[lo, hi] for lo, hi in grid.axis_ranges],
        "values": values.ravel().tolist(),
        "vmin": grid.vmin,
        "vmax": grid.vmax,
        "argmax": list(grid.argmax),
        "ranking": [[item, score] for item, score in ranked],
        "item_coords": np.asarray(grid.item_coords).tolist(),
    }


async def _json_body(request: Request) -> Mapping:
    try:
        body = await request.json()
    except json.JSONDecodeError as exc:
        raise DataError(f"request body is not valid JSON: {exc}") from None
    if not isinstance(body, Mapping):
        raise DataError("request body must be a JSON object")
    return body


def _query_from_body(body: Mapping) -> ToiQuery:
    doc = dict(body)
    doc.pop("model_hash", None)
    return ToiQuery.from_document(doc)


def _check_hash(snapshot: ModelSnapshot, body: Mapping) -> JSONResponse | None:
    stated = body.get("model_hash")
    if stated is not None and stated != snapshot.hash:
        return _error(
            HTTP_CONFLICT,
            f"model hash mismatch: client has {stated!r}, server has {snapshot.hash!r}",
        )
    return None


def create_app(box: SnapshotBox, store: TrailStore | None = None) -> FastAPI:
    app = FastAPI(title="cooc-atlas", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    trails = store if store is not None else TrailStore()

    @app.exception_handler(RequestValidationError)
    async def on_validation(_req, exc):  # framework 422s surface as 400
        return _error(HTTP_BAD_REQUEST, f"malformed request: {exc}")

    @app.exception_handler(UnknownEntityError)
    async def on_unknown(_req, exc):
        return _error(HTTP_NOT_FOUND, str(exc))

    @app.exception_handler(DataError)
    async def on_data_error(_req, exc):
        return _error(HTTP_BAD_REQUEST, str(exc))

    @app.exception_handler(LookupError)
    async def on_no_snapshot(_req, exc):
        return _error(HTTP_UNAVAILABLE, str(exc))

    @app.get("/model/meta")
    def model_meta():
        snapshot = box.get()
        model = snapshot.model
        return {
            "model_hash": snapshot.hash,
            "order": model.n_domains,
            "use_c": model.use_c,
            "domains": [
                {
                    "name": dom.name,
                    "size": dom.size,
                    "dims": model.coords[axis].shape[1],
                    "projection": snapshot.projection_label(axis),
                }
                for axis, dom in enumerate(model.domains)
            ],
        }

    @app.get("/map/{domain}")
    def domain_map(domain: str):
        snapshot = box.get()
        axis = snapshot.model.domain_axis(domain)
        return {
            "domain": domain,
            "projection": snapshot.projection_label(axis),
            "box": snapshot.boxes[domain],
            "items": list(snapshot.model.domains[axis].items),
            "coords": snapshot.display_coords(axis).tolist(),
        }

    @app.post("/cbcp")
    async def cbcp(request: Request):
        snapshot = box.get()
        body = await _json_body(request)
        stale = _check_hash(snapshot, body)
        if stale is not None:
            return stale
        query = _query_from_body(body)
        grid = cbcp_heatmap(snapshot.model, snapshot.table, query)
        ranked = cbcp_rank_items(snapshot.model, snapshot.table, query)
        return _grid_payload(snapshot, grid, ranked)

    @app.post("/trail")
    async def trail_append(request: Request):
        snapshot = box.get()
        body = await _json_body(request)
        stale = _check_hash(snapshot, body)
        if stale is not None:
            return stale
        session_id = body.get("session_id")
        if session_id is None:
            trail = trails.create()
            session_id = trail.session_id
        elif not isinstance(session_id, str):
            raise DataError("session_id must be a string")
        if body.get("query") is not None:
            query = ToiQuery.from_document(body["query"])
            # validate against the snapshot before recording the step
            cbcp_heatmap(snapshot.model, snapshot.table, query)
            chosen = body.get("chosen")
            if chosen is not None and not isinstance(chosen, str):
                raise DataError("chosen must be an item id or null")
            trail = trails.append(session_id, query, chosen)
        else:
            trail = trails.get(session_id)
        return {"session_id": trail.session_id, "length": len(trail)}

    @app.get("/trail/{session_id}")
    def trail_get(session_id: str, format: str | None = None):
        trail = trails.get(session_id)
        if format == "jsonl":
            return PlainTextResponse("\n".join(trail_to_lines(trail)) + "\n")
        if format not in (None, "json"):
            raise DataError(f"unknown trail format {format!r}; use json or jsonl")
        return {
            "session_id": trail.session_id,
            "steps": [
                {"query": query.to_document(), "chosen": chosen}
                for query, chosen in trail.steps
            ],
        }

    @app.delete("/trail/{session_id}")
    def trail_delete(session_id: str):
        trails.delete(session_id)
        return Response(status_code=204)

    return app


def load_snapshot(model_path: str, data_path: str) -> ModelSnapshot:
    from .data_model import load_cooc_table
    from .kde import load_model
    from .trainer import prepare_from_provenance

    model = load_model(model_path)
    table = prepare_from_provenance(
        load_cooc_table(data_path, model.n_domains), model.provenance
    )
    return ModelSnapshot(model, table)


def serve(model_path: str, data_path: str, port: int, host: str = "127.0.0.1") -> None:
    """Blocking entry point used by the CLI's ``serve`` subcommand."""
    import uvicorn

    box = SnapshotBox(load_snapshot(model_path, data_path))
    app = create_app(box)
    uvicorn.run(app, host=host, port=port, log_level="info")
