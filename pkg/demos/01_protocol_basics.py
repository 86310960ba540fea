"""Walk through one conversational turn at the protocol level.

A turn alternates strictly: one knowledge event (backend chunk or silence
marker) in, one generated phrase out.  The closed transcript is balanced by
construction and serializes to a canonical JSON document.
"""

from turnfill import (
    EventKind,
    append_event,
    append_phrase,
    close_turn,
    open_turn,
    transcript_to_json,
)
from turnfill.protocol import ProtocolViolation

print("== opening a turn")
state = open_turn("What's the weather in Tokyo next week?")
print(f"utterance: {state.user_utterance!r}, events={len(state.events)}, phrases={len(state.phrases)}")

print("\n== the silence marker arrives first (backend still thinking)")
append_event(state, EventKind.SILENCE, None, timestamp=1.0)
append_phrase(state, "Let me check the forecast for Tokyo...", start_timestamp=1.15)

print("== a knowledge chunk arrives, and is answered")
append_event(state, EventKind.CHUNK, "Tokyo will be rainy most of next week.", timestamp=2.3)
append_phrase(state, "Looks like rain for most of next week in Tokyo.", start_timestamp=2.45)

print("\n== the protocol refuses to run ahead")
try:
    append_event(state, EventKind.SILENCE, None, timestamp=3.0)
    append_event(state, EventKind.SILENCE, None, timestamp=4.0)
except ProtocolViolation as exc:
    print(f"second unanswered event rejected: {exc}")
append_phrase(state, "Anything else you want to know?", start_timestamp=3.15)

print("\n== closing yields the balanced, immutable transcript")
transcript = close_turn(state)
print(f"n = {len(transcript)} events == {len(transcript.phrases)} phrases, ttft = {transcript.ttft}s")
print("\ncanonical JSON:")
print(transcript_to_json(transcript))
