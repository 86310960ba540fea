"""Turn context rendering, dataset-document parsing, and stream segmentation.

The infill generator is conditioned on a single flat string: the user
utterance followed by the turn's knowledge events and phrases interleaved in
arrival order, ending with the one event that still awaits its phrase.  The
template below is this package's own frozen scheme (golden-tested); it is
deliberately model-agnostic::

    <|user|>
    What's the weather in Tokyo?
    <|end|>
    <|knowledge|>
    <|sil|>
    <|end|>

A silence event renders as the literal ``<|sil|>`` token, compared
byte-exactly and banned from chunk and phrase text, as are the role and end
markers; that ban is what makes rendering injective and the line parser
unambiguous.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Iterator

from .protocol import (
    SILENCE_TOKEN,
    EventKind,
    TurnState,
    TurnTranscript,
    append_event,
    append_phrase,
    close_turn,
    open_turn,
)

_USER_TAG = "<|user|>"
_ASSISTANT_TAG = "<|assistant|>"
_KNOWLEDGE_TAG = "<|knowledge|>"
_END_TAG = "<|end|>"

RESERVED_MARKERS = (_USER_TAG, _ASSISTANT_TAG, _KNOWLEDGE_TAG, _END_TAG, SILENCE_TOKEN)


class FormatError(Exception):
    """Text cannot be rendered or parsed under the frozen template."""


class NotPending(FormatError):
    """Rendering requires exactly one event awaiting its phrase."""


class SchemaError(Exception):
    """A dataset document is missing a required field."""


class AlignmentError(Exception):
    """Thought and sentence lists of a dataset turn differ in length."""


class Role(Enum):
    USER = "user"
    ASSISTANT = "assistant"
    KNOWLEDGE = "knowledge"


_ROLE_TAGS = {
    Role.USER: _USER_TAG,
    Role.ASSISTANT: _ASSISTANT_TAG,
    Role.KNOWLEDGE: _KNOWLEDGE_TAG,
}
_TAG_ROLES = {tag: role for role, tag in _ROLE_TAGS.items()}


@dataclass(frozen=True)
class RoleTaggedMessage:
    """One message of the rendered context."""

    role: Role
    content: str


def _check_content(role: Role, content: str) -> None:
    if role is Role.KNOWLEDGE and content == SILENCE_TOKEN:
        return
    for marker in RESERVED_MARKERS:
        if marker in content:
            raise FormatError(f"reserved marker {marker!r} inside {role.value} content")


def render_messages(state: TurnState) -> list[RoleTaggedMessage]:
    """Interleaved message list for a turn with one pending event.

    Order: user utterance, then knowledge/assistant pairs, ending with the
    pending knowledge event.  Silence events carry ``<|sil|>`` as content.
    """
    if len(state.events) != len(state.phrases) + 1:
        raise NotPending(
            f"need exactly one unanswered event, have {len(state.events)} events "
            f"and {len(state.phrases)} phrases"
        )
    messages = [RoleTaggedMessage(Role.USER, state.user_utterance)]
    for i, event in enumerate(state.events):
        content = SILENCE_TOKEN if event.kind is EventKind.SILENCE else (event.text or "")
        messages.append(RoleTaggedMessage(Role.KNOWLEDGE, content))
        if i < len(state.phrases):
            messages.append(RoleTaggedMessage(Role.ASSISTANT, state.phrases[i].text))
    return messages


def render_context(state: TurnState) -> str:
    """Deterministic flat rendering of :func:`render_messages`."""
    parts = []
    for message in render_messages(state):
        _check_content(message.role, message.content)
        parts.append(f"{_ROLE_TAGS[message.role]}\n{message.content}\n{_END_TAG}")
    return "\n".join(parts)


def parse_rendered_context(rendered: str) -> list[RoleTaggedMessage]:
    """Inverse of :func:`render_context` (strict; used by round-trip checks)."""
    lines = rendered.split("\n")
    messages: list[RoleTaggedMessage] = []
    i = 0
    while i < len(lines):
        tag = lines[i]
        role = _TAG_ROLES.get(tag)
        if role is None:
            raise FormatError(f"expected a role tag at line {i}, got {tag!r}")
        i += 1
        content_lines = []
        while i < len(lines) and lines[i] != _END_TAG:
            content_lines.append(lines[i])
            i += 1
        if i >= len(lines):
            raise FormatError("unterminated message: missing end marker")
        i += 1
        messages.append(RoleTaggedMessage(role, "\n".join(content_lines)))
    if not messages or messages[0].role is not Role.USER:
        raise FormatError("rendered context must begin with the user message")
    return messages


# --- dataset conversation documents ----------------------------------------


def _turn_to_transcript(
    user: str,
    thoughts: list[str],
    sentences: list[str],
    turn_index: int,
) -> TurnTranscript:
    # Dataset documents carry no timing; all timestamps are zeroed.
    state = open_turn(user)
    for thought, sentence in zip(thoughts, sentences):
        if thought == SILENCE_TOKEN:
            append_event(state, EventKind.SILENCE, None, 0.0)
        else:
            append_event(state, EventKind.CHUNK, thought, 0.0)
        append_phrase(state, sentence, 0.0)
    return close_turn(state, turn_index=turn_index)


def parse_turn_record(record: dict[str, Any], turn_index: int = 0) -> TurnTranscript:
    """One dataset turn (user / responder / responder_thoughts) to a transcript.

    ``responder_thoughts`` entries equal to the silence literal become
    silence events; everything else becomes a chunk.  Thought/sentence lists
    must align pairwise.
    """
    for field_name in ("user", "responder", "responder_thoughts"):
        if field_name not in record:
            raise SchemaError(f"turn {turn_index}: missing field {field_name!r}")
    sentences = record["responder"]
    thoughts = record["responder_thoughts"]
    if not isinstance(sentences, list) or not isinstance(thoughts, list):
        raise SchemaError(f"turn {turn_index}: responder fields must be lists")
    if len(sentences) != len(thoughts):
        raise AlignmentError(
            f"turn {turn_index}: {len(sentences)} responder sentences vs "
            f"{len(thoughts)} thoughts"
        )
    return _turn_to_transcript(record["user"], thoughts, sentences, turn_index)


def parse_transcript(document: str) -> list[TurnTranscript]:
    """Parse one conversation document (dataset JSON) into turn records.

    Raises:
        SchemaError: missing fields or a malformed document.
        AlignmentError: a turn whose sentence/thought lists differ in length.
    """
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or "turns" not in data:
        raise SchemaError("conversation document must be an object with 'turns'")
    turns = data["turns"]
    if not isinstance(turns, list):
        raise SchemaError("'turns' must be a list")
    return [parse_turn_record(turn, i) for i, turn in enumerate(turns)]


# --- incremental sentence segmentation --------------------------------------

# Terminal punctuation run followed by whitespace.  Deliberately simple:
# no abbreviation guards; backends are prompted to answer in short
# standalone sentences, so under-splitting hurts more than the odd "Dr."
_BOUNDARY = re.compile(r"[.!?]+(?=\s)")


class StreamSegmenter:
    """Splits an incremental text stream into sentence-like chunks.

    Boundaries do not depend on where the stream was cut: feeding
    ``"It is Ev"`` then ``"erest. Done."`` yields the same chunks as one
    combined feed.  ``close()`` flushes any trailing fragment.
    """

    def __init__(self) -> None:
        self._buffer = ""
        self._closed = False

    def feed(self, text: str) -> list[str]:
        if self._closed:
            raise ValueError("segmenter already closed")
        self._buffer += text
        chunks = []
        while True:
            match = _BOUNDARY.search(self._buffer)
            if match is None:
                break
            candidate = self._buffer[: match.end()].strip()
            self._buffer = self._buffer[match.end() :].lstrip()
            if candidate:
                chunks.append(candidate)
        return chunks

    def close(self) -> list[str]:
        self._closed = True
        tail = self._buffer.strip()
        self._buffer = ""
        return [tail] if tail else []


def segment_stream(pieces: Iterable[str]) -> Iterator[str]:
    """Segment an iterable of incremental deliveries, flushing at the end."""
    segmenter = StreamSegmenter()
    for piece in pieces:
        yield from segmenter.feed(piece)
    yield from segmenter.close()


def segment_text(text: str) -> list[str]:
    """Segment a complete text in one shot (the oracle for incremental runs)."""
    return list(segment_stream([text]))
