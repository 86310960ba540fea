"""Watch the silence cadence fill a slow backend's dead air, in virtual time.

The backend's first chunk lands 2.5 seconds in; with a 1-second cadence the
engine injects silence markers at t=1.0 and t=2.0 so the user hears filler
phrases instead of a pause.  A chunk arriving before a deadline always
preempts the silence, and the silence budget caps runs of filler when the
backend stalls outright.
"""

from turnfill import (
    ScriptedBackend,
    ScriptedInfill,
    ScriptedSchedule,
    SilencePolicy,
    VirtualClock,
    run_turn,
)


def show(title, schedule, d=1.0, max_consecutive=3, latency=0.15):
    clock = VirtualClock()
    backend = ScriptedBackend(schedule, clock)
    infill = ScriptedInfill(clock, latency)
    transcript = run_turn(
        "What is the tallest mountain in the world?",
        backend,
        infill,
        clock,
        SilencePolicy(d, max_consecutive),
    )
    print(f"\n== {title}")
    for event, phrase in zip(transcript.events, transcript.phrases):
        tag = "chunk  " if event.is_chunk else "silence"
        source = event.text or "(cadence)"
        print(f"  t={event.timestamp:5.2f}  {tag}  {source}")
        print(f"  t={phrase.start_timestamp:5.2f}  phrase   -> {phrase.text}")
    print(f"  ttft = {transcript.ttft:.2f}s over {len(transcript)} events")


show(
    "slow backend: silences at 1.0 and 2.0, chunk preempts at 2.5",
    ScriptedSchedule.of((2.5, "It is Mount Everest."), (0.5, "It stands at 8849 m.")),
)

show(
    "fast backend: no filler at all",
    ScriptedSchedule.of((0.2, "It is Mount Everest.")),
)

show(
    "stalled backend: the silence budget stops the filler at three",
    ScriptedSchedule.of((10.0, "Finally, it is Mount Everest.")),
)

show(
    "respond-instantly mode (period 0): first phrase starts immediately",
    ScriptedSchedule.of((2.5, "It is Mount Everest.")),
    d=0.0,
)
