"""Core domain types for the conversational-infill turn protocol.

A *turn* is one user utterance answered as an alternating stream: external
knowledge events (backend chunks or injected silence markers) arrive one at a
time, and each event is answered by exactly one locally generated
conversational phrase before the next event may be accepted.  This strict
alternation is what makes the closed-turn balance (as many phrases as events)
locally checkable: a turn can never get more than one event ahead of its
phrases.

Timestamps are seconds relative to the start of the turn, never wall clock,
so transcripts are replayable and clock-independent.

``TurnState`` is single-writer: exactly one owner mutates it.  Transcripts
and conversations are frozen and freely shareable across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any


# The marker injected for silence events in rendered contexts and dataset
# documents.  Compared byte-exactly, and banned from chunk and phrase text:
# a chunk whose text contained it would be indistinguishable from a silence
# event once rendered.
SILENCE_TOKEN = "<|sil|>"


class ProtocolError(Exception):
    """Base class for turn-protocol violations."""


class EmptyUtterance(ProtocolError):
    """A turn was opened with a blank user utterance."""


class EmptyPhrase(ProtocolError):
    """A phrase with no text was offered to the turn."""


class InvalidChunk(ProtocolError):
    """A chunk event with empty text, or a silence event carrying text."""


class ProtocolViolation(ProtocolError):
    """An append was attempted in a state where it is not permitted."""


class ClosedTurn(ProtocolError):
    """The turn has already been closed."""


class UnbalancedTurn(ProtocolError):
    """close was called while an event is still awaiting its phrase."""


class EventKind(Enum):
    CHUNK = "chunk"
    SILENCE = "silence"


class TurnStatus(Enum):
    OPEN = "open"
    CLOSED = "closed"


@dataclass(frozen=True)
class KnowledgeEvent:
    """One element of the external stream feeding the infill generator.

    Either a knowledge chunk produced by the backend model or a silence
    marker injected by the cadence scheduler.  ``timestamp`` is seconds
    since turn start.
    """

    seq: int
    kind: EventKind
    text: str | None
    timestamp: float

    @property
    def is_chunk(self) -> bool:
        return self.kind is EventKind.CHUNK


@dataclass(frozen=True)
class ConversationalPhrase:
    """One infill output, conditioned on exactly one knowledge event.

    ``start_timestamp`` marks the moment the phrase text started being
    emitted (first output character), seconds since turn start.
    """

    seq: int
    text: str
    source_event_seq: int
    start_timestamp: float


@dataclass
class TurnState:
    """The open, mutable record of one user turn.

    Invariant held after every accepted mutation::

        len(phrases) <= len(events) <= len(phrases) + 1
    """

    user_utterance: str
    events: list[KnowledgeEvent] = field(default_factory=list)
    phrases: list[ConversationalPhrase] = field(default_factory=list)
    status: TurnStatus = TurnStatus.OPEN

    @property
    def pending_event(self) -> KnowledgeEvent | None:
        """The event awaiting its phrase, if any."""
        if len(self.events) == len(self.phrases) + 1:
            return self.events[-1]
        return None


@dataclass(frozen=True)
class TurnTranscript:
    """The closed, immutable record of one user turn.

    Balanced by construction: one phrase per event.  ``ttft`` is the start
    timestamp of the first phrase, or ``None`` for a turn that produced no
    phrases.
    """

    user_utterance: str
    events: tuple[KnowledgeEvent, ...]
    phrases: tuple[ConversationalPhrase, ...]
    turn_index: int = 0
    ttft: float | None = None

    def __len__(self) -> int:
        return len(self.events)

    def joined_phrase_text(self, separator: str = " ") -> str:
        """All phrase text in order, the user-visible response for the turn."""
        return separator.join(p.text for p in self.phrases)


@dataclass(frozen=True)
class Conversation:
    """An ordered sequence of closed turns under one conversation id."""

    id: str
    turns: tuple[TurnTranscript, ...]
    domain_label: str | None = None


def open_turn(user_utterance: str) -> TurnState:
    """Open a fresh turn for a (trimmed) user utterance.

    Raises:
        EmptyUtterance: if the utterance is blank after trimming.
    """
    trimmed = user_utterance.strip()
    if not trimmed:
        raise EmptyUtterance("user utterance is empty")
    return TurnState(user_utterance=trimmed)


def append_event(
    state: TurnState,
    kind: EventKind,
    text: str | None,
    timestamp: float,
) -> int:
    """Append the next knowledge event and return its sequence number.

    Only legal while the previous event (if any) has been answered, which is
    what keeps the event/phrase lists in lockstep.

    Raises:
        ClosedTurn: the turn is closed.
        ProtocolViolation: an event is still awaiting its phrase, or the
            timestamp regresses below the previous event's.
        InvalidChunk: chunk without text, or silence carrying text.
    """
    if state.status is not TurnStatus.OPEN:
        raise ClosedTurn("cannot append event to a closed turn")
    if len(state.events) != len(state.phrases):
        raise ProtocolViolation(
            "event %d is still awaiting its phrase" % state.events[-1].seq
        )
    if kind is EventKind.CHUNK:
        text = (text or "").strip()
        if not text:
            raise InvalidChunk("chunk event requires non-empty text")
        if SILENCE_TOKEN in text:
            raise InvalidChunk("chunk text must not contain the silence literal")
    else:
        if text is not None and text.strip():
            raise InvalidChunk("silence event must not carry text")
        text = None
    if timestamp < 0:
        raise ProtocolViolation("timestamp must be non-negative")
    if state.events and timestamp < state.events[-1].timestamp:
        raise ProtocolViolation(
            "event timestamps must be non-decreasing "
            f"({timestamp} after {state.events[-1].timestamp})"
        )
    seq = len(state.events)
    state.events.append(
        KnowledgeEvent(seq=seq, kind=kind, text=text, timestamp=timestamp)
    )
    return seq


def append_phrase(state: TurnState, text: str, start_timestamp: float) -> int:
    """Append the phrase answering the pending event; returns its seq.

    The phrase is bound to the most recent event: ``seq`` equals
    ``source_event_seq`` equals the pending event's seq.

    Raises:
        ClosedTurn: the turn is closed.
        ProtocolViolation: there is no unanswered event.
        EmptyPhrase: the phrase text is blank.
    """
    if state.status is not TurnStatus.OPEN:
        raise ClosedTurn("cannot append phrase to a closed turn")
    pending = state.pending_event
    if pending is None:
        raise ProtocolViolation("no event is awaiting a phrase")
    text = text.strip()
    if not text:
        raise EmptyPhrase("phrase text is empty")
    if start_timestamp < 0:
        raise ProtocolViolation("start_timestamp must be non-negative")
    seq = len(state.phrases)
    state.phrases.append(
        ConversationalPhrase(
            seq=seq,
            text=text,
            source_event_seq=pending.seq,
            start_timestamp=start_timestamp,
        )
    )
    return seq


def close_turn(state: TurnState, turn_index: int = 0) -> TurnTranscript:
    """Close a balanced turn, yielding its immutable transcript.

    An empty (zero-event) turn is structurally legal here; the turn engine
    is responsible for never emitting one.

    Raises:
        ClosedTurn: the turn is already closed.
        UnbalancedTurn: an event is still awaiting its phrase.
    """
    if state.status is not TurnStatus.OPEN:
        raise ClosedTurn("turn already closed")
    if len(state.events) != len(state.phrases):
        raise UnbalancedTurn(
            f"{len(state.events)} events vs {len(state.phrases)} phrases"
        )
    state.status = TurnStatus.CLOSED
    ttft = state.phrases[0].start_timestamp if state.phrases else None
    return TurnTranscript(
        user_utterance=state.user_utterance,
        events=tuple(state.events),
        phrases=tuple(state.phrases),
        turn_index=turn_index,
        ttft=ttft,
    )


def make_conversation(
    conversation_id: str,
    turns: list[TurnTranscript] | tuple[TurnTranscript, ...],
    domain_label: str | None = None,
) -> Conversation:
    """Assemble a conversation, re-indexing turns consecutively from 0."""
    indexed = tuple(
        t if t.turn_index == i else TurnTranscript(
            user_utterance=t.user_utterance,
            events=t.events,
            phrases=t.phrases,
            turn_index=i,
            ttft=t.ttft,
        )
        for i, t in enumerate(turns)
    )
    return Conversation(id=conversation_id, turns=indexed, domain_label=domain_label)


# --- canonical transcript serialization -----------------------------------
#
# The JSON field names below (user, events[].seq/kind/text/timestamp,
# phrases[].seq/text/start_timestamp) are the wire contract shared with the
# dataset tooling, the gateway transcript endpoint, and the golden tests.


def transcript_to_dict(transcript: TurnTranscript) -> dict[str, Any]:
    """Canonical JSON-ready form of a transcript."""
    events = []
    for e in transcript.events:
        entry: dict[str, Any] = {
            "seq": e.seq,
            "kind": e.kind.value,
            "timestamp": e.timestamp,
        }
        if e.kind is EventKind.CHUNK:
            entry["text"] = e.text
        events.append(entry)
    return {
        "user": transcript.user_utterance,
        "turn_index": transcript.turn_index,
        "ttft": transcript.ttft,
        "events": events,
        "phrases": [
            {"seq": p.seq, "text": p.text, "start_timestamp": p.start_timestamp}
            for p in transcript.phrases
        ],
    }


def transcript_from_dict(data: dict[str, Any]) -> TurnTranscript:
    """Inverse of :func:`transcript_to_dict`.

    Replays the appends through the protocol state machine so a document
    that violates the turn invariants is rejected rather than smuggled in.
    """
    state = open_turn(data["user"])
    events = data.get("events", [])
    phrases = data.get("phrases", [])
    if len(events) != len(phrases):
        raise UnbalancedTurn(
            f"{len(events)} events vs {len(phrases)} phrases in document"
        )
    for ev, ph in zip(events, phrases):
        append_event(
            state,
            EventKind(ev["kind"]),
            ev.get("text"),
            float(ev["timestamp"]),
        )
        append_phrase(state, ph["text"], float(ph["start_timestamp"]))
    return close_turn(state, turn_index=int(data.get("turn_index", 0)))


def transcript_to_json(transcript: TurnTranscript) -> str:
    return json.dumps(transcript_to_dict(transcript), ensure_ascii=False)


def transcript_from_json(document: str) -> TurnTranscript:
    return transcript_from_dict(json.loads(document))
