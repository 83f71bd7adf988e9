"""HTTP/JSON bridge for live campaigns.

A human expert labels pairwise comparisons through these endpoints while the
optimizer keeps running; handlers only read snapshots or enqueue labels, so
no request ever blocks surrogate or preference training.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from steerbo.config import CampaignConfig
from steerbo.engine import LiveCampaign


class StatusResponse(BaseModel):
    iteration: int
    best_value: Optional[float]
    labels_total: int
    posterior_version: int
    mode: str


class PairResponse(BaseModel):
    pair_id: str
    x0: list[float]
    x1: list[float]
    norm0: float
    norm1: float
    f0: Optional[float]
    f1: Optional[float]
    presented_at: float
    selector_score: float


class LabelRequest(BaseModel):
    pair_id: str
    label: Literal[0, 1]


class LabelResponse(BaseModel):
    accepted: bool
    posterior_version: int


class TraceRow(BaseModel):
    iteration: int
    best_value: float
    incumbent_norm: float
    labels_total: int
    pref_posterior_version_used: int
    wall_ms: int


def create_app(campaign: LiveCampaign, static_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="steerbo live campaign")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.campaign = campaign

    @app.exception_handler(RequestValidationError)
    async def malformed_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/api/status", response_model=StatusResponse)
    def status():
        if not campaign.started:
            return JSONResponse(status_code=503, content={"detail": "campaign not started"})
        import numpy as np

        best = campaign.state.best_value
        return StatusResponse(
            iteration=campaign.iteration,
            best_value=None if not np.isfinite(best) else best,
            labels_total=len(campaign.state.labels),
            posterior_version=campaign.state.pref_store.version,
            mode=campaign.config.mode,
        )

    @app.get("/api/pairs", response_model=list[PairResponse])
    def pairs(limit: int = 10):
        import numpy as np

        out = []
        for pending in campaign.pending_pairs(limit):
            out.append(
                PairResponse(
                    pair_id=pending.pair_id,
                    x0=[float(v) for v in pending.x0],
                    x1=[float(v) for v in pending.x1],
                    norm0=float(np.linalg.norm(pending.x0)),
                    norm1=float(np.linalg.norm(pending.x1)),
                    f0=pending.f0,
                    f1=pending.f1,
                    presented_at=pending.presented_at,
                    selector_score=pending.selector_score,
                )
            )
        return out

    @app.post("/api/labels", response_model=LabelResponse)
    def submit_label(body: LabelRequest):
        try:
            ack = campaign.submit_label(body.pair_id, body.label)
        except KeyError:
            return JSONResponse(status_code=404, content={"detail": f"unknown pair_id {body.pair_id}"})
        except ValueError:
            return JSONResponse(status_code=409, content={"detail": f"pair {body.pair_id} already labeled"})
        return LabelResponse(**ack)

    @app.get("/api/trace", response_model=list[TraceRow])
    def trace():
        return [TraceRow(**row.__dict__) for row in list(campaign.state.trace)]

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app


def default_static_dir() -> Optional[Path]:
    """Bundled frontend build, when present next to the repository root."""
    root = Path(__file__).resolve().parents[2]
    for candidate in (root / "frontend" / "dist", root.parent / "frontend" / "dist"):
        if candidate.is_dir():
            return candidate
    return None


def run_server(config: CampaignConfig, host: str, port: int) -> None:
    import uvicorn

    campaign = LiveCampaign(config)
    campaign.start()
    app = create_app(campaign, static_dir=default_static_dir())
    try:
        uvicorn.run(app, host=host, port=port, log_level="info")
    finally:
        campaign.stop()
