"""Turn engine: drives the infill generator against the streamed knowledge queue.

One turn runs as a loop over :func:`next_event`: take the oldest backend
chunk if one is waiting, otherwise wait until either a chunk arrives or the
silence cadence fires (``period_d`` seconds after the previous event), and
answer every event with exactly one generated phrase before looking at the
stream again.  The backend closing its stream ends the turn.

Concurrency model: the backend reader (adapter-owned thread or scheduled
callbacks) and the silence cadence are the two producers; the phrase loop is
the single consumer.  They meet only in :class:`KnowledgeQueue`, whose
blocking-with-deadline dequeue is mediated by the clock so the same code is
exact under virtual time and safe under real threads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from threading import Condition
from typing import Callable, Protocol, Sequence

from .clock import Clock
from .prompting import render_context
from .protocol import (
    Conversation,
    ConversationalPhrase,
    EventKind,
    InvalidChunk,
    KnowledgeEvent,
    TurnTranscript,
    append_event,
    append_phrase,
    close_turn,
    make_conversation,
    open_turn,
)

logger = logging.getLogger(__name__)


class EngineError(Exception):
    """Base class for turn-engine failures."""


class BackendFailure(EngineError):
    """The backend stream aborted.

    The turn is closed after the last balanced event/phrase pair and the
    partial transcript travels on the exception.
    """

    def __init__(self, cause: BaseException | str, transcript: TurnTranscript | None = None):
        super().__init__(str(cause))
        self.cause = cause if isinstance(cause, BaseException) else None
        self.transcript = transcript
        self.turn_index: int | None = None


class InfillFailure(EngineError):
    """The infill generator failed; no degraded phrase text is fabricated."""

    def __init__(self, message: str):
        super().__init__(message)
        self.turn_index: int | None = None


class QueueClosed(EngineError):
    """Enqueue attempted on a queue whose stream already finished."""


@dataclass(frozen=True)
class SilencePolicy:
    """Cadence rule for injecting silence markers.

    A silence fires ``period_d`` seconds after the previous event (chunk or
    silence), unless a chunk is already waiting.  ``period_d == 0`` is the
    respond-instantly mode: the first silence fires at turn start.  At most
    ``max_consecutive_silence`` silences may run back to back; after that the
    engine waits quietly for the backend, since piling up filler on a stalled
    stream reads worse than a pause.
    """

    period_d: float = 1.0
    max_consecutive_silence: int = 3

    def __post_init__(self) -> None:
        if self.period_d < 0:
            raise ValueError("period_d must be >= 0")
        if self.max_consecutive_silence < 1:
            raise ValueError("max_consecutive_silence must be >= 1")


@dataclass(frozen=True)
class _Arrival:
    text: str
    timestamp: float  # seconds since turn start


class KnowledgeQueue:
    """FIFO of backend chunk texts shared by producers and the phrase loop.

    Arrival timestamps are stamped at enqueue, relative to the queue's
    origin (turn start).  Safe for concurrent enqueue/dequeue; dequeue
    blocks with an optional deadline via the clock.
    """

    def __init__(self, clock: Clock, origin: float | None = None) -> None:
        self._clock = clock
        self._origin = clock.now() if origin is None else origin
        self._cond = Condition()
        self._pending: list[_Arrival] = []
        self._closed = False
        self._error: BaseException | None = None
        self._last_arrival = 0.0

    @property
    def origin(self) -> float:
        return self._origin

    @property
    def closed(self) -> bool:
        with self._cond:
            return self._closed

    @property
    def error(self) -> BaseException | None:
        with self._cond:
            return self._error

    def put(self, text: str) -> float:
        """Enqueue one chunk, stamped with its arrival time; returns the stamp."""
        now_rel = self._clock.now() - self._origin
        with self._cond:
            if self._closed:
                raise QueueClosed("stream already finished")
            arrival = max(now_rel, self._last_arrival)
            self._pending.append(_Arrival(text=text, timestamp=arrival))
            self._last_arrival = arrival
            self._cond.notify_all()
        return arrival

    def close(self) -> None:
        """Mark the backend stream complete.  Idempotent."""
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def fail(self, error: BaseException) -> None:
        """Mark the backend stream aborted.  Also closes the queue."""
        with self._cond:
            self._error = error
            self._closed = True
            self._cond.notify_all()

    def take_nowait(self) -> _Arrival | None:
        with self._cond:
            if self._pending:
                return self._pending.pop(0)
            return None

    def _ready(self) -> bool:
        # Callers hold self._cond or run single-threaded under virtual time.
        return bool(self._pending) or self._closed

    def wait_ready(self, deadline: float | None) -> None:
        """Block until a chunk is pending, the stream ends, or the deadline."""
        self._clock.wait_for(self._cond, self._ready, deadline)


class TurnEnd:
    """Sentinel outcome of :func:`next_event`: the turn is over."""

    _instance: "TurnEnd | None" = None

    def __new__(cls) -> "TurnEnd":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:  # pragma: no cover
        return "TURN_END"


TURN_END = TurnEnd()


def next_event(
    queue: KnowledgeQueue,
    clock: Clock,
    policy: SilencePolicy,
    last_event_time: float = 0.0,
    consecutive_silence: int = 0,
    *,
    seq: int = 0,
) -> KnowledgeEvent | TurnEnd:
    """Produce the next event of the turn, or TURN_END.

    Priority at any instant: an aborted stream raises; a pending chunk is
    delivered immediately (stamped with its arrival time); a closed, drained
    stream ends the turn.  Otherwise the call blocks until the earlier of
    the next chunk arrival and the silence deadline
    ``last_event_time + period_d``; if the deadline fires first while the
    stream is still open and the silence budget is not exhausted, a silence
    event stamped at the deadline is returned.  With the budget exhausted
    the call waits indefinitely for a chunk or stream end.

    A chunk arriving exactly at the deadline wins over the silence.
    """
    while True:
        if queue.error is not None:
            raise BackendFailure(queue.error)
        item = queue.take_nowait()
        if item is not None:
            return KnowledgeEvent(
                seq=seq, kind=EventKind.CHUNK, text=item.text, timestamp=item.timestamp
            )
        if queue.closed:
            return TURN_END
        deadline_rel: float | None = None
        if consecutive_silence < policy.max_consecutive_silence:
            deadline_rel = last_event_time + policy.period_d
            now_rel = clock.now() - queue.origin
            if now_rel >= deadline_rel:
                return KnowledgeEvent(
                    seq=seq, kind=EventKind.SILENCE, text=None, timestamp=deadline_rel
                )
        queue.wait_ready(
            None if deadline_rel is None else queue.origin + deadline_rel
        )


class BackendHandle(Protocol):
    """Conversation-level knowledge source; see adapters for implementations."""

    name: str

    def start_turn(
        self,
        history: Sequence[tuple[str, str]],
        utterance: str,
        queue: KnowledgeQueue,
    ) -> None: ...


@dataclass(frozen=True)
class PhraseResult:
    """One generated phrase with its timing, on the engine clock."""

    text: str
    generation_start: float
    first_output: float


class InfillHandle(Protocol):
    """Turn-level phrase generator; see adapters for implementations."""

    name: str

    def generate(self, rendered_context: str) -> PhraseResult: ...


class TurnObserver(Protocol):
    """Live tap on a running turn (the gateway's event feed hangs off this)."""

    def on_event(self, event: KnowledgeEvent) -> None: ...

    def on_phrase(self, phrase: ConversationalPhrase) -> None: ...


def run_turn(
    user_utterance: str,
    backend: BackendHandle,
    infill: InfillHandle,
    clock: Clock,
    policy: SilencePolicy,
    *,
    history: Sequence[tuple[str, str]] = (),
    turn_index: int = 0,
    observer: TurnObserver | None = None,
) -> TurnTranscript:
    """Run one conversational turn end to end.

    Dispatches the utterance to the backend, then loops: pull the next
    event, render the turn context, generate the answering phrase.  Closes
    when the backend stream is complete and drained.  If the backend closes
    before producing any event, one silence event is forced so the user
    always receives a response.

    Raises:
        BackendFailure: stream aborted; carries the balanced partial
            transcript on ``exc.transcript``.
        InfillFailure: the phrase generator failed (fatal, no fabrication).
    """
    state = open_turn(user_utterance)
    queue = KnowledgeQueue(clock)
    backend.start_turn(history, state.user_utterance, queue)

    last_event_time = 0.0
    consecutive_silence = 0

    def answer(event: KnowledgeEvent) -> None:
        append_event(state, event.kind, event.text, event.timestamp)
        if observer is not None:
            observer.on_event(state.events[-1])
        context = render_context(state)
        result = infill.generate(context)
        start_rel = result.first_output - queue.origin
        append_phrase(state, result.text, max(start_rel, 0.0))
        if observer is not None:
            observer.on_phrase(state.phrases[-1])

    while True:
        try:
            event = next_event(
                queue,
                clock,
                policy,
                last_event_time,
                consecutive_silence,
                seq=len(state.events),
            )
        except BackendFailure as failure:
            failure.transcript = close_turn(state, turn_index=turn_index)
            logger.warning("backend stream aborted mid-turn: %s", failure)
            raise
        if isinstance(event, TurnEnd):
            if not state.events:
                forced = KnowledgeEvent(
                    seq=0,
                    kind=EventKind.SILENCE,
                    text=None,
                    timestamp=max(clock.now() - queue.origin, 0.0),
                )
                answer(forced)
            break
        try:
            answer(event)
        except InvalidChunk as bad_chunk:
            # the stream violated its contract (e.g. smuggled the silence
            # literal); treat it like any other backend abort
            failure = BackendFailure(bad_chunk)
            failure.transcript = close_turn(state, turn_index=turn_index)
            raise failure from bad_chunk
        if event.kind is EventKind.SILENCE:
            consecutive_silence += 1
        else:
            consecutive_silence = 0
        last_event_time = event.timestamp

    return close_turn(state, turn_index=turn_index)


@dataclass
class ConversationSession:
    """Holds what persists across turns: the backend's dialogue history.

    The infill context never spans turns; only the backend sees the
    accumulated exchanges.
    """

    backend: BackendHandle
    infill: InfillHandle
    clock: Clock
    policy: SilencePolicy = field(default_factory=SilencePolicy)
    conversation_id: str = "conversation-0"
    domain_label: str | None = None
    history: list[tuple[str, str]] = field(default_factory=list)

    def record_exchange(self, utterance: str, response: str) -> None:
        self.history.append(("user", utterance))
        self.history.append(("assistant", response))


def run_conversation(
    session: ConversationSession,
    utterances: Sequence[str],
    *,
    observer_factory: Callable[[int], TurnObserver] | None = None,
) -> Conversation:
    """Run utterances as consecutive turns that share backend history.

    On turn ``k`` the backend receives the ``2(k-1)`` prior messages plus
    the new utterance; after the turn closes, the utterance and the joined
    phrase text are appended to the session history.
    """
    transcripts: list[TurnTranscript] = []
    for index, utterance in enumerate(utterances):
        observer = observer_factory(index) if observer_factory is not None else None
        try:
            transcript = run_turn(
                utterance,
                session.backend,
                session.infill,
                session.clock,
                session.policy,
                history=tuple(session.history),
                turn_index=index,
                observer=observer,
            )
        except (BackendFailure, InfillFailure) as failure:
            failure.turn_index = index
            raise
        transcripts.append(transcript)
        session.record_exchange(transcript.user_utterance, transcript.joined_phrase_text())
    return make_conversation(
        session.conversation_id, transcripts, domain_label=session.domain_label
    )
