"""Export a scripted turn's frame stream as a fixture for the browser client.

The web client's reducer tests replay a recorded frame sequence; this
script regenerates that recording deterministically (virtual clock, the
same 2.5-second-delay script the demo gateway uses) and writes it to
frontend/tests/fixtures/scripted_turn_frames.json.
"""

import json
from pathlib import Path

from turnfill import (
    ScriptedBackend,
    ScriptedInfill,
    ScriptedSchedule,
    SilencePolicy,
    VirtualClock,
    echo_phrase_fn,
)
from turnfill.gateway import SessionManager

OUT = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures"


def factory(overrides):
    clock = VirtualClock()
    backend = ScriptedBackend(
        ScriptedSchedule.of((2.5, "The answer is Mount Everest."), (0.5, "It stands at 8849 m.")),
        clock,
    )
    infill = ScriptedInfill(clock, 0.15, echo_phrase_fn())
    return backend, infill, clock, SilencePolicy(1.0, 3), {}


manager = SessionManager(factory, threaded=False)
session = manager.create_session()
subscription = manager.subscribe(session.id)
manager.post_utterance(session.id, "What is the tallest mountain in the world?")

frames = []
while True:
    import queue

    try:
        frame = subscription.get(timeout=0.05)
    except queue.Empty:
        break
    if frame is None:
        break
    frames.append(frame.to_dict())

OUT.mkdir(parents=True, exist_ok=True)
path = OUT / "scripted_turn_frames.json"
path.write_text(json.dumps(frames, indent=2, ensure_ascii=False), encoding="utf-8")
print(f"wrote {len(frames)} frames to {path}")
