"""HTTP session service: compute a table's dual representation once, then answer
follow-up questions with LLM-only calls; plus batch-run launch/progress/report
endpoints for the companion UI.

API (JSON bodies, errors as {"code", "message"}):

    GET  /v1/healthz
    POST /v1/sessions                {image_base64, resolution?}
    GET  /v1/sessions/{id}
    POST /v1/sessions/{id}/ask      {question, strategy?}
    POST /v1/runs                   {manifest, strategies, ...}
    GET  /v1/runs/{id}
    GET  /v1/runs/{id}/report
"""

from __future__ import annotations

import base64
import binascii
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import cache as cache_mod
from .client import EndpointConfig, transport_of
from .config import RunConfig
from .dataset import load_manifest, select_items
from .evaluation import EvalReport, MatchPolicy, evaluate
from .imaging import ImageError, ResolutionPreset, decode_image_bytes
from .pipeline import (
    BatchItem,
    DualRepresentation,
    PipelineError,
    PipelineTrace,
    Runner,
    StageError,
    run_batch,
)
from .prompts import PromptLibrary, default_prompts, load_prompts

ASK_STRATEGIES = ("talent", "generated_ocr", "language_description")


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class ServiceSettings:
    vlm: Optional[EndpointConfig] = None
    llm: Optional[EndpointConfig] = None
    transport: str = "live"
    fixtures_dir: Optional[Path] = None
    cache_dir: Optional[Path] = None
    prompts_path: Optional[Path] = None
    resolution: str = "native"
    concurrency: int = 4
    session_ttl: float = 3600.0
    cors_origins: tuple[str, ...] = ("*",)


@dataclass
class Session:
    session_id: str
    image_bytes: bytes
    resolution: str
    dual: Optional[DualRepresentation] = None
    history: list[dict] = field(default_factory=list)
    created_at: float = field(default_factory=time.time)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


@dataclass
class RunHandle:
    run_id: str
    spec: dict
    state: str = "pending"  # pending | running | done | failed
    completed: int = 0
    total: int = 0
    error: Optional[str] = None
    report: Optional[EvalReport] = None

    @property
    def progress(self) -> float:
        if self.total == 0:
            return 0.0
        return self.completed / self.total

    def snapshot(self) -> dict:
        out = {
            "run_id": self.run_id,
            "state": self.state,
            "progress": round(self.progress, 4),
            "completed": self.completed,
            "total": self.total,
        }
        if self.error:
            out["error"] = self.error
        return out


class SessionStore:
    def __init__(self, ttl: float):
        self.ttl = ttl
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def add(self, session: Session) -> None:
        with self._lock:
            self._sessions[session.session_id] = session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
            if session is not None and time.time() - session.created_at > self.ttl:
                del self._sessions[session_id]
                session = None
        if session is None:
            raise ApiError(404, "session_not_found", f"unknown session {session_id!r}")
        return session


class RunRegistry:
    def __init__(self):
        self._runs: dict[str, RunHandle] = {}
        self._lock = threading.Lock()

    def add(self, handle: RunHandle) -> None:
        with self._lock:
            self._runs[handle.run_id] = handle

    def get(self, run_id: str) -> RunHandle:
        with self._lock:
            handle = self._runs.get(run_id)
        if handle is None:
            raise ApiError(404, "run_not_found", f"unknown run {run_id!r}")
        return handle


class CreateSessionBody(BaseModel):
    image_base64: str
    resolution: Optional[str] = None


class AskBody(BaseModel):
    question: str
    strategy: str = "talent"


class LaunchRunBody(BaseModel):
    manifest: str
    strategies: list[str] = ["talent"]
    limit: Optional[int] = None
    categories: Optional[list[str]] = None
    seed: Optional[int] = None
    resolution: Optional[str] = None
    match_mode: Optional[str] = None
    fail_fast: bool = False


def build_transport(settings: ServiceSettings):
    """One shared transport per app: pooled connections, shared rate limiting,
    one cache handle."""
    transport = transport_of(settings.transport, settings.fixtures_dir)
    if settings.cache_dir is not None:
        transport = cache_mod.wrap(transport, cache_mod.ResponseCache(settings.cache_dir))
    return transport


def build_runner(
    settings: ServiceSettings, prompts: PromptLibrary, resolution: str, transport=None
) -> Runner:
    if transport is None:
        transport = build_transport(settings)
    return Runner(
        settings.vlm,
        settings.llm,
        transport,
        prompts=prompts,
        resolution=ResolutionPreset(target=resolution),
    )


def create_app(settings: ServiceSettings) -> FastAPI:
    app = FastAPI(title="talent service")
    prompts = load_prompts(settings.prompts_path) if settings.prompts_path else default_prompts()
    sessions = SessionStore(ttl=settings.session_ttl)
    runs = RunRegistry()
    transport = build_transport(settings)

    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(settings.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ApiError)
    async def api_error_handler(_: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    @app.exception_handler(RequestValidationError)
    async def validation_error_handler(_: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422, content={"code": "validation_error", "message": str(exc.errors())}
        )

    @app.exception_handler(StarletteHTTPException)
    async def http_error_handler(_: Request, exc: StarletteHTTPException):
        return JSONResponse(
            status_code=exc.status_code,
            content={"code": "http_error", "message": str(exc.detail)},
        )

    @app.get("/v1/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        try:
            raw = base64.b64decode(body.image_base64, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise ApiError(400, "bad_image", f"invalid base64 image payload: {exc}")
        try:
            image = decode_image_bytes(raw)
        except ImageError as exc:
            raise ApiError(400, "bad_image", str(exc))

        resolution = body.resolution or settings.resolution
        runner = build_runner(settings, prompts, resolution, transport)
        trace = PipelineTrace()
        try:
            dual = runner.build_dual(image, trace)
        except (StageError, PipelineError) as exc:
            raise ApiError(502, "upstream_failure", str(exc))

        session = Session(
            session_id=uuid.uuid4().hex,
            image_bytes=raw,
            resolution=resolution,
            dual=dual,
        )
        sessions.add(session)
        return {
            "session_id": session.session_id,
            "ocr_markdown": dual.ocr_markdown,
            "narration": dual.narration,
        }

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        session = sessions.get(session_id)
        with session.lock:
            return {
                "session_id": session.session_id,
                "resolution": session.resolution,
                "created_at": session.created_at,
                "has_dual": session.dual is not None,
                "history": [
                    {"question": h["question"], "answer": h["answer"]} for h in session.history
                ],
            }

    @app.post("/v1/sessions/{session_id}/ask")
    def ask(session_id: str, body: AskBody):
        if body.strategy not in ASK_STRATEGIES:
            raise ApiError(
                400,
                "bad_strategy",
                f"strategy must be one of {ASK_STRATEGIES}, got {body.strategy!r}",
            )
        if not body.question.strip():
            raise ApiError(400, "bad_question", "question must be non-empty")
        session = sessions.get(session_id)
        runner = build_runner(settings, prompts, session.resolution, transport)

        with session.lock:
            dual = session.dual
            if dual is None:
                raise ApiError(409, "no_representation", "session has no dual representation")
            trace = PipelineTrace()
            kwargs = {}
            if body.strategy in ("talent", "generated_ocr"):
                kwargs["ocr"] = dual.ocr_markdown
            if body.strategy in ("talent", "language_description"):
                kwargs["narration"] = dual.narration
            try:
                answer = runner.reason(body.question, trace, **kwargs)
            except (StageError, PipelineError) as exc:
                raise ApiError(502, "upstream_failure", str(exc))
            entry = {
                "question": body.question,
                "answer": answer,
                "strategy": body.strategy,
                "trace": trace.summary(),
            }
            session.history.append(entry)
        return {"answer": answer, "trace": trace.summary()}

    @app.post("/v1/runs", status_code=201)
    def launch_run(body: LaunchRunBody):
        try:
            manifest = load_manifest(body.manifest)
            items = [
                BatchItem(table, qa, strategy)
                for strategy in body.strategies
                for (table, qa) in select_items(
                    manifest,
                    categories=body.categories,
                    limit=body.limit,
                    seed=body.seed,
                )
            ]
        except Exception as exc:
            raise ApiError(400, "bad_run_spec", str(exc))
        if not items:
            raise ApiError(400, "bad_run_spec", "run selects zero items")
        for item in items:
            if item.strategy == "perfect_ocr" and not item.table.gt_table_text:
                raise ApiError(
                    400,
                    "bad_run_spec",
                    f"perfect_ocr needs gt_table_text on table {item.table.table_id!r}",
                )

        resolution = body.resolution or settings.resolution
        policy = MatchPolicy(mode=body.match_mode) if body.match_mode else MatchPolicy()
        runner = build_runner(settings, prompts, resolution, transport)
        handle = RunHandle(
            run_id=uuid.uuid4().hex,
            spec={
                "manifest": body.manifest,
                "strategies": body.strategies,
                "resolution": resolution,
                "policy": policy.mode,
                "endpoints": {
                    "vlm": settings.vlm.name if settings.vlm else None,
                    "llm": settings.llm.name if settings.llm else None,
                },
            },
            total=len(items),
        )
        runs.add(handle)

        config = RunConfig(
            strategies=body.strategies,
            vlm=settings.vlm,
            llm=settings.llm,
            resolution=resolution,
            match_mode=policy.mode,
            transport=settings.transport,
            seed=body.seed,
            limit=body.limit,
            categories=body.categories,
        )

        def execute():
            handle.state = "running"

            def on_progress(done: int, total: int):
                handle.completed = done

            try:
                results = run_batch(
                    runner,
                    items,
                    width=settings.concurrency,
                    fail_fast=body.fail_fast,
                    progress=on_progress,
                )
                predictions = []
                for res in results:
                    if res.prediction is not None:
                        predictions.append(
                            {
                                "qa_id": res.prediction.qa_id,
                                "strategy": res.prediction.strategy,
                                "prediction": res.prediction.text,
                            }
                        )
                    else:
                        predictions.append(
                            {
                                "qa_id": res.item.qa.qa_id,
                                "strategy": res.item.strategy,
                                "error": res.error,
                            }
                        )
                handle.report = evaluate(
                    predictions, manifest, policy, config.echo(prompts.sha256())
                )
                handle.state = "done"
            except Exception as exc:
                handle.error = str(exc)
                handle.state = "failed"

        threading.Thread(target=execute, daemon=True).start()
        return {"run_id": handle.run_id}

    @app.get("/v1/runs/{run_id}")
    def get_run(run_id: str):
        return runs.get(run_id).snapshot()

    @app.get("/v1/runs/{run_id}/report")
    def get_report(run_id: str):
        handle = runs.get(run_id)
        if handle.state == "failed":
            raise ApiError(409, "run_failed", handle.error or "run failed")
        if handle.state != "done" or handle.report is None:
            raise ApiError(409, "run_not_done", f"run is {handle.state}; report not ready")
        return handle.report.to_dict()

    return app
