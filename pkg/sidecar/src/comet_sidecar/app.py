"""HTTP service exposing the scorer wire protocol.

GET  /health -> 503 {"status": "loading", ...} until the model finishes
                loading, then 200 {"status": "ok", "scorer_id": ...}
POST /score  -> request body is a JSON list of {src, mt, ref?}; the reply
                is a JSON list of {"score": ...} in the same order, always
                the same length as the request. Malformed items get 400.

The model loads in a background thread so the service binds its port
immediately; inference is serialized behind a lock and chunked into
sub-batches to bound memory.
"""

from __future__ import annotations

import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .backends import ScoringBackend


@dataclass(frozen=True)
class ScoreItem:
    src: str
    mt: str
    ref: str | None = None


class ServiceState:
    def __init__(self, backend: ScoringBackend, batch_size: int) -> None:
        self.backend = backend
        self.batch_size = batch_size
        self.ready = False
        self.load_error: str | None = None
        self.inference_lock = threading.Lock()

    def load(self) -> None:
        try:
            self.backend.load()
        except Exception as exc:  # surface the reason through /health
            self.load_error = f"{type(exc).__name__}: {exc}"
        else:
            self.ready = True


def _parse_items(payload) -> list[ScoreItem] | str:
    """Validate the request body; return items or a rejection reason."""
    if not isinstance(payload, list):
        return "request body must be a JSON list of {src, mt, ref?} items"
    items: list[ScoreItem] = []
    for index, raw in enumerate(payload):
        if not isinstance(raw, dict):
            return f"item {index} is not an object"
        for field in ("src", "mt"):
            value = raw.get(field)
            if not isinstance(value, str) or not value:
                return f"item {index}: field {field!r} must be a non-empty string"
        ref = raw.get("ref")
        if ref is not None and not isinstance(ref, str):
            return f"item {index}: field 'ref' must be a string when present"
        items.append(ScoreItem(src=raw["src"], mt=raw["mt"], ref=ref))
    return items


def create_app(backend: ScoringBackend, *, batch_size: int = 8) -> FastAPI:
    state = ServiceState(backend, batch_size)

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        threading.Thread(target=state.load, name="model-loader", daemon=True).start()
        yield

    app = FastAPI(title="translation quality scorer", lifespan=lifespan)
    app.state.service = state

    @app.get("/health")
    def health() -> JSONResponse:
        if state.load_error is not None:
            return JSONResponse(
                {"status": "error", "scorer_id": backend.scorer_id, "detail": state.load_error},
                status_code=503,
            )
        if not state.ready:
            return JSONResponse(
                {"status": "loading", "scorer_id": backend.scorer_id}, status_code=503
            )
        return JSONResponse({"status": "ok", "scorer_id": backend.scorer_id})

    @app.post("/score")
    async def score(request: Request) -> JSONResponse:
        try:
            payload = await request.json()
        except Exception:
            return JSONResponse({"detail": "request body is not valid JSON"}, status_code=400)
        parsed = _parse_items(payload)
        if isinstance(parsed, str):
            return JSONResponse({"detail": parsed}, status_code=400)
        if not state.ready:
            return JSONResponse(
                {"detail": "model is still loading", "scorer_id": backend.scorer_id},
                status_code=503,
            )
        scores: list[float] = []
        with state.inference_lock:
            for start in range(0, len(parsed), state.batch_size):
                chunk = parsed[start:start + state.batch_size]
                chunk_scores = backend.score_batch(chunk)
                if len(chunk_scores) != len(chunk):
                    return JSONResponse(
                        {"detail": "backend returned a mismatched score count"},
                        status_code=500,
                    )
                scores.extend(chunk_scores)
        return JSONResponse([{"score": score} for score in scores])

    return app
