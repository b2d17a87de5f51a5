"""FastAPI application wrapping the review-queue state and tile pyramids."""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image

from ..tiles import composite_overlay
from .schemas import CandidateOut, CandidatePage, DecisionAck, DecisionIn
from .state import (
    InvalidRequestError,
    ReviewState,
    ServiceConfig,
    UnknownCandidateError,
)

LAYERS = ("imagery", "prediction", "composite")

_STATUS_CODES = {400: "invalid_request", 404: "not_found", 500: "internal_error"}


def _transparent_tile(size: int = 256) -> bytes:
    img = Image.new("RGBA", (size, size), (0, 0, 0, 0))
    out = io.BytesIO()
    img.save(out, format="PNG")
    return out.getvalue()


_EMPTY_TILE = _transparent_tile()


def _tile_path(root: str, z: int, x: int, y: int) -> Path:
    return Path(root) / str(z) / str(x) / f"{y}.png"


def create_app(config: ServiceConfig) -> FastAPI:
    state = ReviewState.load(config)
    app = FastAPI(title="landloop review service")
    app.state.review = state
    app.state.config = config
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    if config.ui_root:
        app.mount("/ui", StaticFiles(directory=config.ui_root, html=True), name="ui")

    @app.exception_handler(HTTPException)
    async def http_error(request: Request, exc: HTTPException):
        return JSONResponse(
            status_code=exc.status_code,
            content={
                "code": _STATUS_CODES.get(exc.status_code, "error"),
                "message": str(exc.detail),
            },
        )

    @app.exception_handler(RequestValidationError)
    async def validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"code": "invalid_request", "message": str(exc.errors())},
        )

    @app.get("/api/candidates", response_model=CandidatePage)
    def list_candidates(
        request: Request,
        cell: str | None = None,
        offset: int = 0,
        limit: int = 50,
    ):
        allowed = {"state", "cell", "offset", "limit"}
        unknown = set(request.query_params) - allowed
        if unknown:
            raise HTTPException(400, f"unknown filter keys: {sorted(unknown)}")
        # 'state' would shadow app.state in the handler, so read it directly.
        state_filter = request.query_params.get("state")
        try:
            items, total = app.state.review.list_candidates(
                state=state_filter, cell=cell, offset=offset, limit=limit
            )
        except InvalidRequestError as exc:
            raise HTTPException(400, str(exc)) from exc
        return CandidatePage(
            total=total,
            offset=offset,
            limit=limit,
            candidates=[
                CandidateOut(
                    chip_id=c.chip_id,
                    cell_id=c.cell_id,
                    entropy=c.entropy,
                    decision=c.decision,
                    source=c.source,
                    center_lon=c.center_lon,
                    center_lat=c.center_lat,
                )
                for c in items
            ],
        )

    @app.post("/api/decisions", response_model=DecisionAck)
    def record_decision(body: DecisionIn):
        try:
            rec = app.state.review.record_decision(
                body.candidate_id, body.decision, body.annotator
            )
        except InvalidRequestError as exc:
            raise HTTPException(400, str(exc)) from exc
        except UnknownCandidateError as exc:
            raise HTTPException(404, f"unknown candidate {body.candidate_id!r}") from exc
        return DecisionAck(
            candidate_id=rec.candidate_id,
            decision=rec.decision,
            revision=rec.revision,
            timestamp=rec.timestamp,
        )

    @app.get("/tiles/{layer}/{z}/{x}/{y}.png")
    def serve_tile(layer: str, z: int, x: int, y: int):
        if layer not in LAYERS:
            raise HTTPException(400, f"unknown layer {layer!r}")
        if z < 0 or z > 30 or not (0 <= x < (1 << z)) or not (0 <= y < (1 << z)):
            raise HTTPException(400, f"tile ({z},{x},{y}) out of range")
        roots = app.state.config.pyramid_roots

        def read(layer_name: str) -> bytes | None:
            root = roots.get(layer_name)
            if root is None:
                raise HTTPException(400, f"layer {layer_name!r} not configured")
            path = _tile_path(root, z, x, y)
            return path.read_bytes() if path.exists() else None

        if layer in ("imagery", "prediction"):
            data = read(layer)
            if data is None:
                return Response(
                    _EMPTY_TILE, media_type="image/png", headers={"X-Empty-Tile": "1"}
                )
            return Response(data, media_type="image/png")

        base = read("imagery")
        if base is None:
            return Response(
                _EMPTY_TILE, media_type="image/png", headers={"X-Empty-Tile": "1"}
            )
        over = read("prediction")
        if over is None:
            return Response(base, media_type="image/png")
        base_arr = np.asarray(Image.open(io.BytesIO(base)).convert("RGB"))
        over_arr = np.asarray(Image.open(io.BytesIO(over)).convert("RGB"))
        blended = composite_overlay(base_arr, over_arr, app.state.config.opacity)
        out = io.BytesIO()
        Image.fromarray(blended, mode="RGB").save(out, format="PNG")
        return Response(out.getvalue(), media_type="image/png")

    @app.get("/api/export/annotations")
    def export_annotations():
        manifest = app.state.review.export_manifest()
        text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        return Response(text, media_type="application/json")

    return app


def run(config: ServiceConfig) -> None:
    """Blocking uvicorn server on the configured listen address."""
    import uvicorn

    host, _, port = config.listen_address.partition(":")
    uvicorn.run(create_app(config), host=host or "127.0.0.1", port=int(port or 8008))
