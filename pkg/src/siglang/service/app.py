"""FastAPI service exposing assessment over HTTP.

The app loads one reference database at startup and serves any number of
concurrent clients against it; the database is immutable, so requests
need no locking. Package errors map onto HTTP statuses: parse problems
are 400, an unknown vocabulary is 404, and a topology that conflicts with
the database is 409.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import refdb
from ..assessment import AssessmentConfig, assess, report_to_dict
from ..errors import SigLangError, TopologyMismatch, UnknownVocab
from ..motion_io import motion_from_json, motion_to_json, parse_bvh, write_bvh
from .schemas import (
    AssessRequest,
    AssessmentOut,
    ConvertRequest,
    ConvertResponse,
    DatabaseInfo,
    HealthOut,
)


def _status_for(exc: SigLangError) -> int:
    if isinstance(exc, UnknownVocab):
        return 404
    if isinstance(exc, TopologyMismatch):
        return 409
    return 400


def create_app(db_path=None, db: "refdb.ReferenceDatabase | None" = None) -> FastAPI:
    if db is None:
        if db_path is None:
            raise ValueError("create_app needs a database path or object")
        db = refdb.load(db_path)

    app = FastAPI(title="siglang assessment service", version="1.0")
    app.state.db = db

    @app.exception_handler(SigLangError)
    async def _handle_siglang_error(request: Request, exc: SigLangError):
        return JSONResponse(status_code=_status_for(exc),
                            content={"detail": str(exc)})

    @app.get("/health", response_model=HealthOut)
    def health():
        return HealthOut(status="ok", vocab_count=len(db.labels))

    @app.get("/db", response_model=DatabaseInfo)
    def db_info():
        return DatabaseInfo(
            fps=db.canonical_fps,
            joints=list(db.joint_names),
            n=db.n,
            labels=list(db.labels),
            takes=len(db.takes),
        )

    @app.post("/assess", response_model=AssessmentOut)
    def assess_student(req: AssessRequest):
        if req.bvh is not None:
            motion = parse_bvh(req.bvh, scale=req.scale)
        else:
            motion = motion_from_json(req.motion)
        report = assess(motion, req.vocab, db, AssessmentConfig())
        return AssessmentOut(**report_to_dict(report))

    @app.post("/convert", response_model=ConvertResponse)
    def convert(req: ConvertRequest):
        if req.bvh is not None:
            motion = parse_bvh(req.bvh, scale=req.scale)
            return ConvertResponse(motion=motion_to_json(motion))
        motion = motion_from_json(req.motion)
        return ConvertResponse(bvh=write_bvh(motion, scale=req.scale))

    return app
