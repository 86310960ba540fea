"""Session-oriented streaming gateway core: sessions, frames, fan-out.

A session owns one conversation: the backend dialogue history, the adapter
pair, and a broadcaster that turns the running turn into a totally ordered
frame stream.  Frames mirror the turn exactly (the gateway is a tap, not a
transform): every knowledge chunk, silence tick, and finished phrase becomes
one frame, closed off by a terminal ``turn_done`` (or ``error``) frame.

Subscribers may join at any moment; a late joiner first receives a replay
of the current turn's frames, then the live tail, with per-turn sequence
numbers that make gaps and duplicates detectable.  Slow subscribers are
disconnected rather than ever stalling the turn.

This module is transport-free; the HTTP layer lives in ``service``.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

from .clock import Clock
from .engine import (
    BackendFailure,
    BackendHandle,
    InfillFailure,
    InfillHandle,
    SilencePolicy,
    run_turn,
)
from .protocol import (
    ConversationalPhrase,
    EmptyUtterance,
    EventKind,
    KnowledgeEvent,
    TurnTranscript,
    transcript_to_dict,
)

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1


class GatewayError(Exception):
    """Base class for gateway request errors."""


class SessionNotFound(GatewayError):
    pass


class TurnInProgress(GatewayError):
    """Only one active turn per session; wait for the terminal frame."""


class InvalidConfig(GatewayError):
    pass


@dataclass(frozen=True)
class StreamEvent:
    """One wire frame of the session event stream (protocol v1)."""

    kind: str  # phrase_delta | phrase_done | knowledge_chunk | silence_tick | turn_done | error
    turn_index: int
    seq: int
    payload: dict

    def to_dict(self) -> dict:
        return {
            "protocol_version": PROTOCOL_VERSION,
            "kind": self.kind,
            "turn_index": self.turn_index,
            "seq": self.seq,
            "payload": self.payload,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


_CLOSE = object()  # subscription close sentinel


class Subscription:
    """One subscriber's bounded frame feed."""

    def __init__(self, broadcaster: "Broadcaster", maxsize: int):
        self._broadcaster = broadcaster
        self._queue: queue.Queue = queue.Queue(maxsize=maxsize)
        self.dropped = False

    def get(self, timeout: float | None = None) -> StreamEvent | None:
        """Next frame, or None once the subscription is closed."""
        item = self._queue.get(timeout=timeout)
        if item is _CLOSE:
            return None
        return item

    def __iter__(self) -> Iterator[StreamEvent]:
        while True:
            item = self._queue.get()
            if item is _CLOSE:
                return
            yield item

    def close(self) -> None:
        self._broadcaster.unsubscribe(self)

    # internal, called under the broadcaster lock
    def _offer(self, frame: StreamEvent) -> bool:
        try:
            self._queue.put_nowait(frame)
            return True
        except queue.Full:
            return False

    def _shutdown(self) -> None:
        try:
            self._queue.put_nowait(_CLOSE)
        except queue.Full:
            # Drain one slot so the close marker always fits.
            try:
                self._queue.get_nowait()
            except queue.Empty:
                pass
            self._queue.put_nowait(_CLOSE)


class Broadcaster:
    """Totally ordered frame fan-out with current-turn replay.

    Frames of the turn in progress are kept for replay to late joiners; the
    buffer resets when a new turn begins and after the terminal frame, so a
    subscriber joining an idle session sees nothing until the next turn.
    """

    def __init__(self, subscriber_buffer: int = 1024):
        self._lock = threading.Lock()
        self._subscribers: list[Subscription] = []
        self._current_turn: list[StreamEvent] = []
        self._subscriber_buffer = subscriber_buffer

    def begin_turn(self) -> None:
        with self._lock:
            self._current_turn = []

    def emit(self, frame: StreamEvent, terminal: bool = False) -> None:
        with self._lock:
            self._current_turn.append(frame)
            if terminal:
                self._current_turn = []
            stalled = [s for s in self._subscribers if not s._offer(frame)]
            for subscription in stalled:
                self._subscribers.remove(subscription)
                subscription.dropped = True
                subscription._shutdown()
                logger.warning("dropped a slow subscriber (buffer full)")

    def subscribe(self, replay: bool = True) -> Subscription:
        subscription = Subscription(self, maxsize=self._subscriber_buffer)
        with self._lock:
            if replay:
                for frame in self._current_turn:
                    subscription._offer(frame)
            self._subscribers.append(subscription)
        return subscription

    def unsubscribe(self, subscription: Subscription) -> None:
        with self._lock:
            if subscription in self._subscribers:
                self._subscribers.remove(subscription)
            subscription._shutdown()


class _FrameEmitter:
    """TurnObserver that maps protocol objects onto wire frames."""

    def __init__(self, broadcaster: Broadcaster, turn_index: int):
        self._broadcaster = broadcaster
        self._turn_index = turn_index
        self._seq = 0
        self._last_event: KnowledgeEvent | None = None

    def _emit(self, kind: str, payload: dict, terminal: bool = False) -> None:
        frame = StreamEvent(
            kind=kind, turn_index=self._turn_index, seq=self._seq, payload=payload
        )
        self._seq += 1
        self._broadcaster.emit(frame, terminal=terminal)

    def on_event(self, event: KnowledgeEvent) -> None:
        self._last_event = event
        if event.kind is EventKind.CHUNK:
            self._emit(
                "knowledge_chunk",
                {"event_seq": event.seq, "text": event.text, "timestamp": event.timestamp},
            )
        else:
            self._emit(
                "silence_tick",
                {"event_seq": event.seq, "timestamp": event.timestamp},
            )

    def on_phrase(self, phrase: ConversationalPhrase) -> None:
        source = self._last_event
        base = {
            "phrase_seq": phrase.seq,
            "text": phrase.text,
            "start_timestamp": phrase.start_timestamp,
        }
        self._emit("phrase_delta", dict(base))
        done = dict(base)
        done["source"] = (
            "chunk" if source is not None and source.kind is EventKind.CHUNK else "silence"
        )
        done["source_event_seq"] = phrase.source_event_seq
        if source is not None:
            done["latency_ms"] = round(
                max(phrase.start_timestamp - source.timestamp, 0.0) * 1000.0, 3
            )
        self._emit("phrase_done", done)

    def turn_done(self, transcript: TurnTranscript) -> None:
        self._emit(
            "turn_done",
            {
                "user": transcript.user_utterance,
                "ttft": transcript.ttft,
                "n_events": len(transcript.events),
                "n_phrases": len(transcript.phrases),
            },
            terminal=True,
        )

    def error(self, message: str) -> None:
        self._emit("error", {"message": message}, terminal=True)


@dataclass
class Session:
    """One conversation's runtime state inside the gateway."""

    id: str
    backend: BackendHandle
    infill: InfillHandle
    clock: Clock
    policy: SilencePolicy
    config_echo: dict
    created_at: float
    broadcaster: Broadcaster = field(default_factory=Broadcaster)
    history: list[tuple[str, str]] = field(default_factory=list)
    transcripts: list[TurnTranscript] = field(default_factory=list)
    last_error: str | None = None
    _turn_lock: threading.Lock = field(default_factory=threading.Lock)
    _active_turn: int | None = None


SessionFactory = Callable[[dict], tuple[BackendHandle, InfillHandle, Clock, SilencePolicy, dict]]


class SessionManager:
    """Registry and turn driver for all live sessions.

    ``session_factory`` receives merged config overrides and returns the
    adapter pair, clock, policy, and a config echo for the client.  With
    ``threaded=True`` turns run on daemon threads (the service mode); with
    ``threaded=False`` post_utterance blocks until the turn completes,
    which is what deterministic virtual-time tests want.
    """

    def __init__(
        self,
        session_factory: SessionFactory,
        threaded: bool = True,
        transcript_dir: str | Path | None = None,
    ):
        self._factory = session_factory
        self._threaded = threaded
        self._transcript_dir = Path(transcript_dir) if transcript_dir else None
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create_session(self, overrides: dict | None = None) -> Session:
        backend, infill, clock, policy, echo = self._factory(overrides or {})
        session = Session(
            id=uuid.uuid4().hex[:12],
            backend=backend,
            infill=infill,
            clock=clock,
            policy=policy,
            config_echo=echo,
            created_at=clock.now(),
        )
        with self._lock:
            self._sessions[session.id] = session
        logger.info("session %s created", session.id)
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise SessionNotFound(f"unknown session {session_id!r}")
        return session

    def sessions(self) -> list[Session]:
        with self._lock:
            return list(self._sessions.values())

    def post_utterance(self, session_id: str, text: str) -> int:
        """Start the next turn; returns its index.

        Raises:
            SessionNotFound, TurnInProgress, EmptyUtterance
        """
        session = self.get(session_id)
        if not text.strip():
            raise EmptyUtterance("utterance is empty")
        with session._turn_lock:
            if session._active_turn is not None:
                raise TurnInProgress(
                    f"turn {session._active_turn} is still running"
                )
            turn_index = len(session.transcripts)
            session._active_turn = turn_index
        session.broadcaster.begin_turn()
        if self._threaded:
            thread = threading.Thread(
                target=self._run_turn,
                args=(session, text.strip(), turn_index),
                daemon=True,
                name=f"turn-{session.id}-{turn_index}",
            )
            thread.start()
        else:
            self._run_turn(session, text.strip(), turn_index)
        return turn_index

    def _run_turn(self, session: Session, text: str, turn_index: int) -> None:
        emitter = _FrameEmitter(session.broadcaster, turn_index)
        transcript: TurnTranscript | None = None
        failed = False
        try:
            transcript = run_turn(
                text,
                session.backend,
                session.infill,
                session.clock,
                session.policy,
                history=tuple(session.history),
                turn_index=turn_index,
                observer=emitter,
            )
        except BackendFailure as failure:
            transcript = failure.transcript
            failed = True
            session.last_error = str(failure)
            emitter.error(f"backend stream aborted: {failure}")
        except InfillFailure as failure:
            failed = True
            session.last_error = str(failure)
            emitter.error(f"infill failed: {failure}")
        except Exception as failure:  # keep the session usable
            failed = True
            session.last_error = str(failure)
            logger.exception("turn %d crashed", turn_index)
            emitter.error(f"internal error: {failure}")
        finally:
            if transcript is not None and transcript.phrases:
                session.transcripts.append(transcript)
                session.history.append(("user", transcript.user_utterance))
                session.history.append(("assistant", transcript.joined_phrase_text()))
                if not failed:
                    emitter.turn_done(transcript)
                self._persist(session)
            with session._turn_lock:
                session._active_turn = None

    def _persist(self, session: Session) -> None:
        if self._transcript_dir is None:
            return
        self._transcript_dir.mkdir(parents=True, exist_ok=True)
        path = self._transcript_dir / f"{session.id}.json"
        data = {
            "session_id": session.id,
            "turns": [transcript_to_dict(t) for t in session.transcripts],
        }
        path.write_text(json.dumps(data, ensure_ascii=False, indent=2), encoding="utf-8")

    def subscribe(self, session_id: str) -> Subscription:
        """Attach to a session's frame stream (current-turn replay + tail).

        Raises:
            SessionNotFound
        """
        return self.get(session_id).broadcaster.subscribe()

    def transcript_payload(self, session_id: str) -> dict:
        session = self.get(session_id)
        return {
            "session_id": session.id,
            "turns": [transcript_to_dict(t) for t in session.transcripts],
        }
