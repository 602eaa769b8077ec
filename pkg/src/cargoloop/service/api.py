"""HTTP surface for the clarification loop.

Endpoints: POST /v1/sessions, POST /v1/sessions/{id}/message,
POST /v1/sessions/{id}/clarify, GET /v1/sessions/{id},
GET /v1/sessions/{id}/plan, GET /v1/health. All bodies are versioned with a
``v`` field. Turn posting is idempotent via client-supplied turn ids:
replaying a turn id returns the original response bytes with no state
change. One in-flight event per session is enforced with a per-session lock.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from typing import Any

from fastapi import Depends, FastAPI, Header, HTTPException
from pydantic import BaseModel

from ..confidence import CalibrationHead, ThresholdPolicy
from ..dialogue import DialogueEngine, DialogueSession, SessionState
from ..domaindb import SolutionCache, load_database
from ..errors import BackendError, ProtocolError
from ..goals import canonical_encode, validate
from ..interpreter import make_backend
from .config import ServiceConfig
from .transcripts import TranscriptWriter

WIRE_VERSION = 1


class MessageBody(BaseModel):
    v: int = WIRE_VERSION
    turn_id: str | None = None
    text: str


class AnswerBody(BaseModel):
    v: int = WIRE_VERSION
    turn_id: str | None = None
    slot: str
    value: Any


@dataclass
class _SessionEntry:
    session: DialogueSession
    lock: threading.Lock = field(default_factory=threading.Lock)
    responses: dict[str, dict] = field(default_factory=dict)
    writer: TranscriptWriter | None = None
    turns_written: int = 0


def build_engine(config: ServiceConfig) -> DialogueEngine:
    db = load_database(config.database)
    head = (
        CalibrationHead.load(config.head_path)
        if config.head_path is not None
        else CalibrationHead.bootstrap()
    )
    policy = ThresholdPolicy(
        mode=config.threshold.mode,
        fixed=config.threshold.fixed,
        precision=config.threshold.precision,
        window=config.threshold.window,
    )
    return DialogueEngine(
        db,
        make_backend(config.backend),
        head=head,
        policy=policy,
        cache=SolutionCache(max_entries=config.cache_size),
        max_rounds=config.max_rounds,
        default_prior=config.default_prior,
    )


def session_view(session: DialogueSession) -> dict:
    """Complete session state for the wire; the UI renders from this alone."""
    view: dict[str, Any] = {
        "v": WIRE_VERSION,
        "session_id": session.id,
        "state": session.state.value,
        "round_count": session.round_count,
        "max_rounds": session.max_rounds,
        "turns": [
            {"seq": t.seq, "role": t.role, "payload": t.payload, "ts": t.ts}
            for t in session.turns
        ],
        "report": session.report.to_wire() if session.report else None,
        "questions": [q.to_wire() for q in session.questions],
        "pending": list(session.pending),
        "plan": session.plan.to_wire() if session.plan else None,
        "compliance": session.compliance.to_wire() if session.compliance else None,
        "failure_reason": session.failure_reason,
        "delivered_text": session.delivered_text,
    }
    goal = session.goal
    if goal is not None and validate(goal).ok:
        view["goal"] = canonical_encode(goal)
    else:
        view["goal"] = None
    return view


def turn_response(session: DialogueSession) -> dict:
    """Response for a message/clarify turn: the state plus what to do next."""
    body: dict[str, Any] = {
        "v": WIRE_VERSION,
        "session_id": session.id,
        "state": session.state.value,
        "round_count": session.round_count,
    }
    if session.state is SessionState.AWAITING_CLARIFICATION:
        last = session.system_payloads()[-1]
        body["message"] = last.get("message")
        body["questions"] = last.get("questions", [])
        body["report"] = session.report.to_wire() if session.report else None
    elif session.state is SessionState.DELIVERED:
        body["message"] = session.system_payloads()[-1].get("message")
        body["plan"] = session.plan.to_wire() if session.plan else None
        body["compliance"] = session.compliance.to_wire() if session.compliance else None
        body["facts"] = session.system_payloads()[-1].get("facts")
        body["report"] = session.report.to_wire() if session.report else None
    elif session.state is SessionState.FAILED:
        body["reason"] = session.failure_reason
        body["report"] = session.report.to_wire() if session.report else None
        if session.compliance is not None:
            body["compliance"] = session.compliance.to_wire()
    return body


def create_app(config: ServiceConfig, engine: DialogueEngine | None = None) -> FastAPI:
    app = FastAPI(title="cargoloop", version="0.1.0")
    engine = engine or build_engine(config)
    sessions: dict[str, _SessionEntry] = {}
    registry_lock = threading.Lock()

    def check_auth(authorization: str | None = Header(default=None)) -> None:
        if config.api_token is None:
            return
        if authorization != f"Bearer {config.api_token}":
            raise HTTPException(status_code=401, detail="missing or invalid token")

    def entry_for(session_id: str) -> _SessionEntry:
        entry = sessions.get(session_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return entry

    def run_turn(entry: _SessionEntry, turn_id: str | None, action) -> dict:
        """Idempotent, transcript-durable execution of one user turn."""
        with entry.lock:
            if turn_id is not None and turn_id in entry.responses:
                return entry.responses[turn_id]
            try:
                action()
            except ProtocolError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            except BackendError as exc:
                headers = {}
                if exc.retry_after_s is not None:
                    headers["Retry-After"] = str(int(exc.retry_after_s))
                raise HTTPException(
                    status_code=503, detail=str(exc), headers=headers
                ) from exc
            if entry.writer is not None:
                entry.turns_written = entry.writer.sync_session(
                    entry.session, entry.turns_written, turn_id
                )
            response = turn_response(entry.session)
            if turn_id is not None:
                entry.responses[turn_id] = response
            return response

    @app.get("/v1/health")
    def health() -> dict:
        return {
            "v": WIRE_VERSION,
            "status": "ok",
            "db_version": engine.db.version,
            "backend": getattr(engine.backend, "backend_id", "unknown"),
        }

    @app.post("/v1/sessions", status_code=201)
    def create_session(_: None = Depends(check_auth)) -> dict:
        session = engine.create_session(uuid.uuid4().hex[:12])
        entry = _SessionEntry(session=session)
        if config.transcripts is not None:
            entry.writer = TranscriptWriter(config.transcripts, session.id)
        with registry_lock:
            sessions[session.id] = entry
        return {"v": WIRE_VERSION, "session_id": session.id}

    @app.post("/v1/sessions/{session_id}/message")
    def post_message(
        session_id: str, body: MessageBody, _: None = Depends(check_auth)
    ) -> dict:
        entry = entry_for(session_id)
        return run_turn(
            entry, body.turn_id, lambda: engine.submit_prompt(entry.session, body.text)
        )

    @app.post("/v1/sessions/{session_id}/clarify")
    def post_clarification_answer(
        session_id: str, body: AnswerBody, _: None = Depends(check_auth)
    ) -> dict:
        entry = entry_for(session_id)
        return run_turn(
            entry,
            body.turn_id,
            lambda: engine.submit_answer(entry.session, body.slot, body.value),
        )

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str, _: None = Depends(check_auth)) -> dict:
        return session_view(entry_for(session_id).session)

    @app.get("/v1/sessions/{session_id}/plan")
    def get_plan(session_id: str, _: None = Depends(check_auth)) -> dict:
        entry = entry_for(session_id)
        session = entry.session
        if session.plan is None:
            raise HTTPException(
                status_code=404,
                detail=f"session {session_id!r} has no delivered plan "
                f"(state {session.state.value})",
            )
        return {
            "v": WIRE_VERSION,
            "session_id": session.id,
            "plan": session.plan.to_wire(),
            "compliance": session.compliance.to_wire() if session.compliance else None,
        }

    if config.static_dir is not None and config.static_dir.exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=config.static_dir, html=True), name="static")

    return app
