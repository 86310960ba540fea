"""Generation back-ends: scripted test doubles and streaming HTTP clients.

Two pluggable roles.  The *backend* is the conversation-level knowledge
source: it sees the full dialogue history and streams sentence-like chunks
into the turn's knowledge queue.  The *infill* generator is turn-level: it
sees one rendered context and returns one phrase with timing.

Scripted implementations replay fixed schedules on the engine clock and are
byte-deterministic under virtual time.  HTTP implementations speak the
OpenAI-compatible wire format (chat completions SSE for the backend, plain
completions for the infill server); provider quirks stay inside this module
and the engine sees only incremental text plus a completion signal.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import httpx

from .clock import Clock
from .engine import InfillFailure, KnowledgeQueue, PhraseResult, QueueClosed
from .prompting import SILENCE_TOKEN, Role, StreamSegmenter, parse_rendered_context

logger = logging.getLogger(__name__)

# Default system prompt steering API models to act as knowledge sources
# rather than conversationalist frontends; override via config.
DEFAULT_KNOWLEDGE_SYSTEM_PROMPT = (
    "You are a knowledge source. Respond in short standalone sentences. "
    "No greetings, no filler."
)

DEFAULT_SILENCE_ACKNOWLEDGMENT = "One moment."


class BackendError(Exception):
    """Base class for backend stream failures (becomes BackendFailure)."""


class NetworkError(BackendError):
    """The provider endpoint could not be reached."""


class AuthError(BackendError):
    """The provider rejected our credentials."""


class ProviderError(BackendError):
    """The provider answered, but not with a usable stream."""


@dataclass(frozen=True)
class ScriptedSchedule:
    """Replayable backend script: inter-chunk delays and a close delay.

    ``chunks`` is a list of ``(delay_seconds, text)`` pairs; each delay is
    relative to the previous chunk (the first to turn start).  The stream
    closes ``close_delay`` seconds after the last chunk.
    """

    chunks: tuple[tuple[float, str], ...] = ()
    close_delay: float = 0.0

    def __post_init__(self) -> None:
        for delay, text in self.chunks:
            if delay < 0:
                raise ValueError("chunk delays must be non-negative")
            if not text.strip():
                raise ValueError("chunk texts must be non-empty")
        if self.close_delay < 0:
            raise ValueError("close_delay must be non-negative")

    @classmethod
    def of(cls, *chunks: tuple[float, str], close_delay: float = 0.0) -> "ScriptedSchedule":
        return cls(chunks=tuple(chunks), close_delay=close_delay)

    @classmethod
    def from_dict(cls, data: dict) -> "ScriptedSchedule":
        return cls(
            chunks=tuple((float(d), str(t)) for d, t in data.get("chunks", [])),
            close_delay=float(data.get("close_delay", 0.0)),
        )


@dataclass(frozen=True)
class RecordedTurnRequest:
    """What a scripted backend was asked to do (for test assertions)."""

    history: tuple[tuple[str, str], ...]
    utterance: str


class DialogueHistory:
    """Backend-side conversation history: (role, text) pairs.

    Strictly alternates user/assistant starting with user; the constructor
    rejects anything else, so wrapping a history is also validating it.
    """

    def __init__(self, messages: Sequence[tuple[str, str]] = ()) -> None:
        self._messages: list[tuple[str, str]] = []
        for role, text in messages:
            self.append(role, text)

    def append(self, role: str, text: str) -> None:
        expected = "user" if len(self._messages) % 2 == 0 else "assistant"
        if role != expected:
            raise ValueError(
                f"history must alternate user/assistant starting with user; "
                f"got {role!r} at position {len(self._messages)}"
            )
        self._messages.append((role, text))

    def add_user(self, text: str) -> None:
        self.append("user", text)

    def add_assistant(self, text: str) -> None:
        self.append("assistant", text)

    @property
    def messages(self) -> tuple[tuple[str, str], ...]:
        return tuple(self._messages)

    def __len__(self) -> int:
        return len(self._messages)


class ScriptedBackend:
    """Deterministic backend replaying one schedule for every turn.

    Chunk arrivals and the close are scheduled on the engine clock, so under
    virtual time the replay is exact.  Every ``start_turn`` call is recorded
    on :attr:`calls`.
    """

    def __init__(self, schedule: ScriptedSchedule, clock: Clock, name: str = "scripted"):
        self.schedule = schedule
        self.clock = clock
        self.name = name
        self.calls: list[RecordedTurnRequest] = []

    def _schedule_for(self, utterance: str) -> ScriptedSchedule:
        return self.schedule

    def start_turn(
        self,
        history: Sequence[tuple[str, str]],
        utterance: str,
        queue: KnowledgeQueue,
    ) -> None:
        self.calls.append(RecordedTurnRequest(tuple(history), utterance))
        schedule = self._schedule_for(utterance)
        at = self.clock.now()

        def deliver(text: str) -> Callable[[], None]:
            def _put() -> None:
                try:
                    queue.put(text)
                except QueueClosed:  # turn already over (wall-clock race)
                    pass

            return _put

        for delay, text in schedule.chunks:
            at += delay
            self.clock.call_at(at, deliver(text))
        self.clock.call_at(at + schedule.close_delay, queue.close)


class KeyedScriptedBackend(ScriptedBackend):
    """Scripted backend whose schedule depends on the utterance.

    Useful for answer-key evaluation runs and canned demos: the lookup maps
    each utterance to its own schedule.
    """

    def __init__(
        self,
        lookup: Callable[[str], ScriptedSchedule],
        clock: Clock,
        name: str = "scripted-keyed",
    ):
        super().__init__(ScriptedSchedule(), clock, name=name)
        self._lookup = lookup

    def _schedule_for(self, utterance: str) -> ScriptedSchedule:
        return self._lookup(utterance)


class FailingBackend:
    """Backend that aborts its stream after optional chunks (test double)."""

    def __init__(
        self,
        error: BackendError,
        clock: Clock,
        prelude: ScriptedSchedule | None = None,
        fail_delay: float = 0.0,
        name: str = "scripted-failing",
    ):
        self.error = error
        self.clock = clock
        self.prelude = prelude or ScriptedSchedule()
        self.fail_delay = fail_delay
        self.name = name

    def start_turn(
        self,
        history: Sequence[tuple[str, str]],
        utterance: str,
        queue: KnowledgeQueue,
    ) -> None:
        at = self.clock.now()
        for delay, text in self.prelude.chunks:
            at += delay
            self.clock.call_at(at, lambda t=text: queue.put(t))
        self.clock.call_at(at + self.fail_delay, lambda: queue.fail(self.error))


def latest_knowledge(rendered_context: str) -> str:
    """Content of the final knowledge message of a rendered context."""
    messages = parse_rendered_context(rendered_context)
    last = messages[-1]
    if last.role is not Role.KNOWLEDGE:
        raise ValueError("rendered context does not end with a knowledge message")
    return last.content


def echo_phrase_fn(silence_text: str = DEFAULT_SILENCE_ACKNOWLEDGMENT) -> Callable[[str], str]:
    """Phrase function echoing the latest chunk verbatim.

    Silence events get the fixed acknowledgment instead, since there is
    nothing to echo.
    """

    def phrase(context: str) -> str:
        knowledge = latest_knowledge(context)
        if knowledge == SILENCE_TOKEN:
            return silence_text
        return knowledge

    return phrase


def constant_phrase_fn(text: str) -> Callable[[str], str]:
    """Phrase function that ignores the context (canned-response stand-in)."""

    def phrase(_context: str) -> str:
        return text

    return phrase


class ScriptedInfill:
    """Infill generator with fixed latency and a pluggable phrase function."""

    def __init__(
        self,
        clock: Clock,
        fixed_latency: float = 0.0,
        phrase_fn: Callable[[str], str] | None = None,
        name: str = "scripted-infill",
    ):
        if fixed_latency < 0:
            raise ValueError("fixed_latency must be >= 0")
        self.clock = clock
        self.fixed_latency = fixed_latency
        self.phrase_fn = phrase_fn or echo_phrase_fn()
        self.name = name

    def generate(self, rendered_context: str) -> PhraseResult:
        generation_start = self.clock.now()
        self.clock.sleep(self.fixed_latency)
        first_output = self.clock.now()
        text = self.phrase_fn(rendered_context)
        return _checked_phrase(text, generation_start, first_output)


def _checked_phrase(text: str, generation_start: float, first_output: float) -> PhraseResult:
    text = (text or "").strip()
    if not text:
        raise InfillFailure("infill produced an empty phrase")
    if SILENCE_TOKEN in text:
        raise InfillFailure("infill phrase contains the silence literal")
    return PhraseResult(
        text=text, generation_start=generation_start, first_output=first_output
    )


# --- HTTP adapters -----------------------------------------------------------


@dataclass(frozen=True)
class HttpEndpointConfig:
    """Where and how to reach an OpenAI-compatible endpoint.

    ``api_key_env`` names an environment variable; the key itself is never
    stored in configuration files.
    """

    url: str
    model: str = ""
    api_key_env: str | None = None
    system_prompt: str = DEFAULT_KNOWLEDGE_SYSTEM_PROMPT
    timeout_seconds: float = 30.0
    max_tokens: int = 256

    def headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise AuthError(f"environment variable {self.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers


def _classify_status(status_code: int, body: str) -> BackendError:
    if status_code in (401, 403):
        return AuthError(f"provider rejected credentials (HTTP {status_code})")
    return ProviderError(f"provider error HTTP {status_code}: {body[:200]}")


class HttpStreamingBackend:
    """Backend over chat-completions SSE, segmented into sentence chunks.

    The request carries the concise-knowledge system prompt, the full
    dialogue history, and the new utterance.  Incremental text deltas run
    through the stream segmenter; each completed sentence is enqueued with
    its receipt time.  Non-text deltas are dropped (logged at debug).
    """

    def __init__(
        self,
        config: HttpEndpointConfig,
        clock: Clock,
        transport: httpx.BaseTransport | None = None,
        name: str | None = None,
    ):
        self.config = config
        self.clock = clock
        self.name = name or f"http:{config.model or config.url}"
        self._client = httpx.Client(
            transport=transport, timeout=config.timeout_seconds
        )

    def _request_body(
        self, history: Sequence[tuple[str, str]], utterance: str
    ) -> dict:
        messages = [{"role": "system", "content": self.config.system_prompt}]
        messages += [{"role": role, "content": text} for role, text in history]
        messages.append({"role": "user", "content": utterance})
        return {
            "model": self.config.model,
            "messages": messages,
            "stream": True,
            "max_tokens": self.config.max_tokens,
        }

    def _pump(self, body: dict, queue: KnowledgeQueue) -> None:
        segmenter = StreamSegmenter()

        # Chunks pass through unfiltered: this transport also carries raw
        # generation payloads (dataset documents) where the silence literal
        # is legitimate data.  The turn engine polices the knowledge stream.
        def enqueue_all(chunks: list[str]) -> None:
            for chunk in chunks:
                try:
                    queue.put(chunk)
                except QueueClosed:
                    raise _StreamAbandoned()

        try:
            with self._client.stream(
                "POST", self.config.url, json=body, headers=self.config.headers()
            ) as response:
                if response.status_code != 200:
                    response.read()
                    queue.fail(_classify_status(response.status_code, response.text))
                    return
                for line in response.iter_lines():
                    if not line.startswith("data:"):
                        continue
                    payload = line[len("data:") :].strip()
                    if payload == "[DONE]":
                        break
                    delta = _extract_delta(payload)
                    if delta:
                        enqueue_all(segmenter.feed(delta))
            enqueue_all(segmenter.close())
            queue.close()
        except _StreamAbandoned:
            pass
        except AuthError as exc:
            queue.fail(exc)
        except httpx.HTTPError as exc:
            queue.fail(NetworkError(str(exc)))
        except Exception as exc:  # malformed stream payloads etc.
            queue.fail(ProviderError(str(exc)))

    def start_turn(
        self,
        history: Sequence[tuple[str, str]],
        utterance: str,
        queue: KnowledgeQueue,
    ) -> None:
        body = self._request_body(history, utterance)
        thread = threading.Thread(
            target=self._pump, args=(body, queue), daemon=True, name="backend-pump"
        )
        thread.start()


class _StreamAbandoned(Exception):
    """Consumer closed the queue under us; stop pumping quietly."""


def _extract_delta(payload: str) -> str | None:
    data = json.loads(payload)
    choices = data.get("choices") or []
    if not choices:
        return None
    delta = choices[0].get("delta") or {}
    content = delta.get("content")
    if content is None:
        if delta:
            logger.debug("dropping non-text delta: %s", sorted(delta))
        return None
    return str(content)


class HttpInfill:
    """Infill generator over a plain completions endpoint.

    Posts the rendered context, keeps the first non-empty line of the
    completion as the phrase.  The endpoint is expected to be a local,
    low-latency server; the response is not streamed, so the first-output
    timestamp is the response receipt time.
    """

    def __init__(
        self,
        config: HttpEndpointConfig,
        clock: Clock,
        transport: httpx.BaseTransport | None = None,
        name: str | None = None,
    ):
        self.config = config
        self.clock = clock
        self.name = name or f"http-infill:{config.model or config.url}"
        self._client = httpx.Client(
            transport=transport, timeout=config.timeout_seconds
        )

    def generate(self, rendered_context: str) -> PhraseResult:
        body = {
            "model": self.config.model,
            "prompt": rendered_context,
            "max_tokens": self.config.max_tokens,
            "stop": ["<|end|>"],
        }
        generation_start = self.clock.now()
        try:
            response = self._client.post(
                self.config.url, json=body, headers=self.config.headers()
            )
        except httpx.HTTPError as exc:
            raise InfillFailure(f"infill endpoint unreachable: {exc}") from exc
        first_output = self.clock.now()
        if response.status_code != 200:
            raise InfillFailure(
                f"infill endpoint HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            data = response.json()
            completion = data["choices"][0]["text"]
        except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
            raise InfillFailure(f"malformed infill response: {exc}") from exc
        first_line = next(
            (line.strip() for line in str(completion).splitlines() if line.strip()), ""
        )
        return _checked_phrase(first_line, generation_start, first_output)
