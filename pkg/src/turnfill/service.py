"""HTTP surface of the gateway: sessions, utterances, NDJSON event stream.

Endpoints (all JSON unless noted):

* ``GET  /health``                      -> {status, protocol_version}
* ``POST /sessions``                    -> {session_id, config}; body may carry
  ``{"overrides": {...}}`` with config overrides for this session
* ``POST /sessions/{sid}/utterances``   -> {turn_index}; 409 while a turn runs
* ``GET  /sessions/{sid}/events``       -> long-lived ``application/x-ndjson``
  stream of frames: current-turn replay, then live tail
* ``GET  /sessions/{sid}/transcript``   -> completed turns, canonical form

When an auth token is configured every endpoint except ``/health`` requires
``Authorization: Bearer <token>``.  A built static UI directory, when
present, is served at the root path.
"""

from __future__ import annotations

import logging
import os
import queue
from pathlib import Path
from typing import Iterator

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .adapters import KeyedScriptedBackend, ScriptedInfill, ScriptedSchedule, echo_phrase_fn
from .clock import WallClock
from .config import (
    DEFAULT_CONFIG,
    apply_env_overrides,
    apply_set_overrides,
    backend_factory_from,
    deep_merge,
    infill_factory_from,
    load_config,
    silence_policy_from,
)
from .gateway import (
    PROTOCOL_VERSION,
    EmptyUtterance,
    InvalidConfig,
    SessionManager,
    SessionNotFound,
    TurnInProgress,
)

logger = logging.getLogger(__name__)


class CreateSessionBody(BaseModel):
    overrides: dict = {}


class UtteranceBody(BaseModel):
    text: str


def config_session_factory(base_config: dict):
    """Session factory building adapters from (merged) configuration."""

    def factory(overrides: dict):
        merged = deep_merge(base_config, overrides or {})
        policy = silence_policy_from(merged)
        clock = WallClock()
        backend = backend_factory_from(merged)(clock)
        infill = infill_factory_from(merged)(clock)
        echo = {
            "silence": merged.get("silence", {}),
            "backend": {"kind": merged.get("backend", {}).get("kind")},
            "infill": {"kind": merged.get("infill", {}).get("kind")},
        }
        return backend, infill, clock, policy, echo

    return factory


def demo_session_factory(base_config: dict | None = None):
    """Scripted demo world: canned answers, visible silence fillers.

    Known trivia questions (the bundled QA fixture) get their gold answer
    2.5 seconds in, late enough that the silence cadence shows; anything
    else gets a generic two-chunk reply.
    """
    from .evaluation import bundled_qa_items

    base = deep_merge(DEFAULT_CONFIG, base_config or {})
    items = {item.question.lower(): item for item in bundled_qa_items()}
    # close margins keep wall-clock timer races from dropping the last chunk
    fallback = ScriptedSchedule.of(
        (2.5, "Here is what I found on that."),
        (0.8, "There are a few details worth checking further."),
        close_delay=0.2,
    )

    def lookup(utterance: str) -> ScriptedSchedule:
        item = items.get(utterance.strip().lower())
        if item is None:
            return fallback
        return ScriptedSchedule.of(
            (2.5, f"The answer is {item.gold_answers[0]}."),
            close_delay=0.2,
        )

    def factory(overrides: dict):
        merged = deep_merge(base, overrides or {})
        policy = silence_policy_from(merged)
        clock = WallClock()
        backend = KeyedScriptedBackend(lookup, clock, name="demo-backend")
        infill = ScriptedInfill(clock, 0.15, echo_phrase_fn(), name="demo-infill")
        echo = {
            "silence": merged.get("silence", {}),
            "backend": {"kind": "demo-scripted"},
            "infill": {"kind": "demo-scripted"},
        }
        return backend, infill, clock, policy, echo

    return factory


def create_app(
    manager: SessionManager,
    auth_token: str | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="turnfill gateway", version="1")

    def check_auth(request: Request) -> None:
        if auth_token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {auth_token}":
            raise HTTPException(status_code=401, detail="missing or bad token")

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "protocol_version": PROTOCOL_VERSION}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody, request: Request) -> dict:
        check_auth(request)
        try:
            session = manager.create_session(body.overrides)
        except InvalidConfig as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {"session_id": session.id, "config": session.config_echo}

    @app.post("/sessions/{session_id}/utterances", status_code=202)
    def post_utterance(session_id: str, body: UtteranceBody, request: Request) -> dict:
        check_auth(request)
        try:
            turn_index = manager.post_utterance(session_id, body.text)
        except SessionNotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except TurnInProgress as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except EmptyUtterance as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {"turn_index": turn_index}

    @app.get("/sessions/{session_id}/events")
    def events(session_id: str, request: Request, once: bool = False) -> StreamingResponse:
        check_auth(request)
        try:
            subscription = manager.subscribe(session_id)
        except SessionNotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

        def frames() -> Iterator[str]:
            # Blank lines are keepalives; they also bound how long a
            # disconnected generator can stay parked in queue.get.
            try:
                while True:
                    try:
                        frame = subscription.get(timeout=2.0)
                    except queue.Empty:
                        yield "\n"
                        continue
                    if frame is None:
                        return
                    yield frame.to_json() + "\n"
                    if once and frame.kind in ("turn_done", "error"):
                        return
            finally:
                subscription.close()

        return StreamingResponse(frames(), media_type="application/x-ndjson")

    @app.get("/sessions/{session_id}/transcript")
    def transcript(session_id: str, request: Request) -> dict:
        check_auth(request)
        try:
            return manager.transcript_payload(session_id)
        except SessionNotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def build_service(
    config_path: str | None = None,
    sets: list[str] | None = None,
    demo: bool = False,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    """Assemble the manager and app from config file + env + CLI overrides."""
    config = apply_env_overrides(load_config(config_path))
    if sets:
        apply_set_overrides(config, sets)
    factory = demo_session_factory(config) if demo else config_session_factory(config)
    gateway_cfg = config.get("gateway", {})
    token_env = gateway_cfg.get("auth_token_env")
    auth_token = os.environ.get(token_env) if token_env else None
    manager = SessionManager(
        factory,
        threaded=True,
        transcript_dir=gateway_cfg.get("transcript_dir"),
    )
    return create_app(manager, auth_token=auth_token, ui_dir=ui_dir)
