"""HTTP front door: a thin JSON layer over the engine.

Every response uses one envelope:

    {"status": "ok",    "data": ..., "schema_version": 1}
    {"status": "error", "error": {"code": ..., "message": ...}, "schema_version": 1}

Handlers translate JSON to engine calls and domain objects back to JSON;
no domain logic lives here.
"""

from __future__ import annotations

import dataclasses
import logging
import os
import time

from fastapi import Body, FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .biblio import RecordError, StudyRecord
from .decision import Answer, DecisionError
from .deposit import ArchiveAuthError, ArchiveUnavailable, DepositError
from .engine import (
    ConflictError,
    Engine,
    EngineError,
    InvalidStateError,
    NotFoundError,
    ValidationError,
)
from .pipeline import FlagError
from .registry import Protocol, RegistryError, ReviewStatus, ReviewVersion
from .rules import ExpressionError
from .screening import ScreeningError, Verdict
from .storage import StorageError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MAX_WAIT_SECONDS = 30.0

_ERROR_STATUS: tuple[tuple[type, str, int], ...] = (
    (NotFoundError, "not_found", 404),
    (ConflictError, "conflict", 409),
    (InvalidStateError, "invalid_state", 409),
    (ValidationError, "validation", 400),
    (ArchiveUnavailable, "archive_unavailable", 503),
    (ArchiveAuthError, "archive_auth", 502),
    (DepositError, "validation", 400),
    (RegistryError, "validation", 400),
    (ScreeningError, "validation", 400),
    (DecisionError, "validation", 400),
    (ExpressionError, "validation", 400),
    (RecordError, "validation", 400),
    (FlagError, "validation", 400),
    (StorageError, "internal", 500),
    (EngineError, "internal", 500),
)


def _ok(data, status_code: int = 200) -> JSONResponse:
    return JSONResponse(
        {"status": "ok", "data": data, "schema_version": SCHEMA_VERSION},
        status_code=status_code,
    )


def _fail(code: str, message: str, status_code: int) -> JSONResponse:
    return JSONResponse(
        {"status": "error", "error": {"code": code, "message": message},
         "schema_version": SCHEMA_VERSION},
        status_code=status_code,
    )


def _require(payload: dict, *keys: str) -> None:
    missing = [k for k in keys if k not in payload]
    if missing:
        raise ValidationError(f"missing required fields: {missing}")


def _enum(cls, value, label: str):
    try:
        return cls(value)
    except ValueError:
        allowed = [m.value for m in cls]
        raise ValidationError(f"{label} must be one of {allowed}, got {value!r}")


def _parse(builder, data, label: str):
    """Build a domain object from JSON; malformed shapes become 400s."""
    try:
        return builder(data)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"bad {label} payload: {exc}")


def _records(data) -> list[StudyRecord]:
    if not isinstance(data, list):
        raise ValidationError("records must be a list")
    return [_parse(StudyRecord.from_dict, r, "record") for r in data]


def _receipt_dict(receipt) -> dict:
    return dataclasses.asdict(receipt)


def create_app(engine: Engine | None = None, data_dir: str | None = None) -> FastAPI:
    if engine is None:
        engine = Engine(data_dir or os.environ.get("SLRWATCH_DATA", "."))

    app = FastAPI(title="slrwatch", docs_url=None, redoc_url=None)
    app.state.engine = engine
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"],
    )

    def _make_handler(code: str, status_code: int):
        async def handler(request: Request, exc: Exception) -> JSONResponse:
            return _fail(code, str(exc), status_code)
        return handler

    for klass, code, status_code in _ERROR_STATUS:
        app.add_exception_handler(klass, _make_handler(code, status_code))

    def _summary(lineage) -> dict:
        state = engine.get_state(lineage.id)
        return {**lineage.to_dict(), "node": state.node.value}

    # -- lineages and versions

    @app.get("/health")
    def health():
        return _ok({"ok": True, "lineages": len(engine.storage.list_lineages())})

    @app.get("/lineages")
    def list_lineages():
        return _ok([_summary(l) for l in engine.list_lineages()])

    @app.post("/lineages")
    def register(payload: dict = Body(...)):
        _require(payload, "id", "version")
        version = _parse(ReviewVersion.from_dict, payload["version"], "version")
        records = _records(payload.get("included_records", []))
        lineage = engine.register_review(payload["id"], version, records)
        return _ok(_summary(lineage), status_code=201)

    @app.get("/lineages/{lineage_id}")
    def get_lineage(lineage_id: str):
        return _ok(_summary(engine.get_lineage(lineage_id)))

    @app.post("/lineages/{lineage_id}/versions")
    def link_version(lineage_id: str, payload: dict = Body(...)):
        _require(payload, "version")
        version = _parse(ReviewVersion.from_dict, payload["version"], "version")
        records = _records(payload.get("included_records", []))
        lineage = engine.link_version(lineage_id, version, records)
        return _ok(_summary(lineage), status_code=201)

    @app.get("/lineages/{lineage_id}/protocol")
    def get_protocol(lineage_id: str):
        lineage = engine.get_lineage(lineage_id)
        return _ok(lineage.effective_protocol().to_dict())

    @app.put("/lineages/{lineage_id}/versions/{version_id}/protocol")
    def set_protocol(lineage_id: str, version_id: str, payload: dict = Body(...)):
        protocol = _parse(Protocol.from_dict, payload, "protocol")
        lineage = engine.set_protocol(lineage_id, version_id, protocol)
        return _ok(_summary(lineage))

    @app.get("/lineages/{lineage_id}/suggestions")
    def suggestions(lineage_id: str):
        return _ok([r.to_dict() for r in engine.suggest_versions(lineage_id)])

    # -- iterations and screening

    @app.post("/lineages/{lineage_id}/iterations")
    def run_iteration(lineage_id: str):
        return _ok(engine.run_iteration(lineage_id), status_code=201)

    @app.get("/lineages/{lineage_id}/iterations")
    def list_iterations(lineage_id: str):
        return _ok(engine.get_iterations(lineage_id))

    @app.get("/lineages/{lineage_id}/queue")
    def queue(lineage_id: str):
        engine.get_lineage(lineage_id)
        return _ok([c.to_dict() for c in engine.screening_queue(lineage_id)])

    @app.get("/lineages/{lineage_id}/candidates")
    def candidates(lineage_id: str):
        return _ok([c.to_dict() for c in engine.get_candidates(lineage_id)])

    @app.post("/lineages/{lineage_id}/candidates/{record_id}/decisions")
    def decide(lineage_id: str, record_id: str, payload: dict = Body(...)):
        _require(payload, "reviewer", "verdict")
        candidate = engine.record_decision(
            lineage_id, record_id,
            reviewer=payload["reviewer"],
            verdict=_enum(Verdict, payload["verdict"], "verdict"),
            criteria=tuple(payload.get("criteria", ())),
            rationale=payload.get("rationale"),
            is_consensus=bool(payload.get("is_consensus", False)),
        )
        return _ok(candidate.to_dict(), status_code=201)

    @app.post("/lineages/{lineage_id}/candidates/{record_id}/trend")
    def trend(lineage_id: str, record_id: str, payload: dict = Body(...)):
        _require(payload, "actor")
        candidate = engine.mark_trend(
            lineage_id, record_id, actor=payload["actor"],
            note=payload.get("note"), flagged=bool(payload.get("flagged", True)),
        )
        return _ok(candidate.to_dict())

    # -- deposit

    @app.get("/lineages/{lineage_id}/export")
    def export(lineage_id: str):
        return _ok({"document": engine.export_bundle(lineage_id)})

    @app.post("/lineages/{lineage_id}/deposits")
    def deposit(lineage_id: str):
        return _ok(engine.deposit_bundle(lineage_id).to_dict(), status_code=201)

    @app.get("/lineages/{lineage_id}/deposits")
    def list_deposits(lineage_id: str):
        return _ok([d.to_dict() for d in engine.get_deposits(lineage_id)])

    # -- decision sessions

    @app.post("/lineages/{lineage_id}/sessions")
    def open_session(lineage_id: str):
        return _ok(engine.open_session(lineage_id).to_dict(), status_code=201)

    @app.get("/lineages/{lineage_id}/sessions")
    def list_sessions(lineage_id: str):
        return _ok([s.to_dict() for s in engine.get_sessions(lineage_id)])

    @app.post("/lineages/{lineage_id}/sessions/answers")
    def answer(lineage_id: str, payload: dict = Body(...)):
        _require(payload, "index", "answer", "by")
        try:
            index = int(payload["index"])
        except (TypeError, ValueError):
            raise ValidationError("index must be an integer")
        session = engine.answer_step(
            lineage_id, index,
            _enum(Answer, payload["answer"], "answer"),
            by=payload["by"], rationale=payload.get("rationale"),
        )
        return _ok(session.to_dict(), status_code=201)

    @app.post("/lineages/{lineage_id}/sessions/evaluate")
    def evaluate(lineage_id: str):
        return _ok(engine.evaluate_session(lineage_id).to_dict())

    # -- flags, notification, restart

    @app.post("/lineages/{lineage_id}/flag")
    def flag(lineage_id: str, payload: dict = Body(...)):
        _require(payload, "status")
        status = _enum(ReviewStatus, payload["status"], "status")
        return _ok(_summary(engine.flag_review(lineage_id, status)))

    @app.post("/lineages/{lineage_id}/notify")
    def notify(lineage_id: str, payload: dict = Body(default={})):
        receipts = engine.notify(lineage_id, message=payload.get("message"))
        return _ok([_receipt_dict(r) for r in receipts])

    @app.post("/lineages/{lineage_id}/published")
    def published(lineage_id: str):
        return _ok(_summary(engine.update_published(lineage_id)))

    # -- scheduling and observability

    @app.post("/tick")
    def tick():
        return _ok(engine.tick())

    @app.get("/lineages/{lineage_id}/metrics")
    def metrics(lineage_id: str):
        return _ok(engine.metrics(lineage_id))

    @app.get("/lineages/{lineage_id}/replay")
    def replay(lineage_id: str):
        return _ok(engine.replay_state(lineage_id))

    @app.get("/lineages/{lineage_id}/events")
    def events(lineage_id: str, after_seq: int = 0, wait_seconds: float = 0.0):
        """Event tail; with wait_seconds > 0 it long-polls until one arrives."""
        deadline = time.monotonic() + min(max(wait_seconds, 0.0), MAX_WAIT_SECONDS)
        while True:
            found = engine.events_since(lineage_id, after_seq)
            if found or time.monotonic() >= deadline:
                return _ok([e.to_dict() for e in found])
            time.sleep(0.05)

    return app
