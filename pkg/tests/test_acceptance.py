"""Acceptance criteria, one test per criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
"""

from __future__ import annotations

import random
import time
from contextlib import contextmanager

import pytest

from turnfill.adapters import (
    ScriptedBackend,
    ScriptedInfill,
    ScriptedSchedule,
    constant_phrase_fn,
    echo_phrase_fn,
)
from turnfill.clock import VirtualClock, WallClock
from turnfill.engine import SilencePolicy, run_turn
from turnfill.entailment import EntailmentLabel, LexicalOracle, verify_turn
from turnfill.evaluation import (
    BackendOnlySystem,
    ModelOnlySystem,
    RuntimeSystem,
    bundled_qa_items,
    compare_report,
    gold_backend_factory,
    measure_ttft,
    run_eval,
)
from turnfill.dataset import (
    DOMAINS,
    default_seed_bank,
    filter_entailed,
    split_turns,
    template_generate,
    validate_document,
)
from turnfill.gateway import Broadcaster, SessionManager
from turnfill.prompting import Role, parse_rendered_context
from turnfill.protocol import EventKind, ProtocolViolation

from .oracles import replay_cadence

ORACLE = LexicalOracle()
ITEMS = bundled_qa_items()


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"FAIL  {name}")
        raise
    print(f"PASS  {name}")


def scripted_turn(arrivals, close_delay, latency, d, max_consecutive=3):
    clock = VirtualClock()
    gaps = []
    prev = 0.0
    for arrival in arrivals:
        gaps.append((arrival - prev, f"scripted chunk at {arrival} seconds."))
        prev = arrival
    backend = ScriptedBackend(ScriptedSchedule.of(*gaps, close_delay=close_delay), clock)
    infill = ScriptedInfill(clock, latency)
    return run_turn("acceptance question?", backend, infill, clock,
                    SilencePolicy(d, max_consecutive))


def random_turn(rng):
    n = rng.randint(0, 6)
    arrivals = []
    t = 0.0
    for _ in range(n):
        t += rng.randint(1, 256) / 64.0
        arrivals.append(t)
    return scripted_turn(
        arrivals,
        close_delay=rng.randint(0, 128) / 64.0,
        latency=rng.randint(0, 96) / 64.0,
        d=rng.randint(4, 128) / 64.0,
        max_consecutive=rng.randint(1, 4),
    )


def test_protocol_balance_10000_randomized_turns():
    with criterion("protocol balance: 10,000 randomized turns close with len(S)+len(L)=len(C)=n"):
        rng = random.Random(2026)
        started = time.monotonic()
        for _ in range(10_000):
            try:
                transcript = random_turn(rng)
            except ProtocolViolation as violation:  # pragma: no cover
                raise AssertionError(f"protocol violation escaped the engine: {violation}")
            n_silence = sum(1 for e in transcript.events if e.kind is EventKind.SILENCE)
            n_chunks = sum(1 for e in transcript.events if e.kind is EventKind.CHUNK)
            assert n_silence + n_chunks == len(transcript.phrases) == len(transcript.events)
        elapsed = time.monotonic() - started
        assert elapsed < 30.0, f"10,000 simulations took {elapsed:.1f}s (budget 30s)"


def test_silence_cadence_exact_schedule():
    with criterion("silence cadence: first chunk at 2.5s, d=1.0 -> [Sil@1.0, Sil@2.0, Chunk@2.5]"):
        transcript = scripted_turn([2.5], close_delay=0.0, latency=0.15, d=1.0)
        got = [(e.kind.value, e.timestamp) for e in transcript.events]
        assert got == [("silence", 1.0), ("silence", 2.0), ("chunk", 2.5)]
        # independent discrete-event replay agrees
        expected = replay_cadence([2.5], 2.5, 1.0, 3, 0.15)
        assert got == list(expected.events)


def test_ttft_decoupling_table_shape():
    with criterion("TTFT decoupling: backend-only 10.9s; runtime 0.16s (d=0) and 1.16s (d=1)"):
        gemini_like = gold_backend_factory(ITEMS, first_chunk_delay=10.9)
        question = ITEMS[0].question

        backend_only = BackendOnlySystem(backend_factory=gemini_like)
        assert measure_ttft(backend_only, question, ceiling_seconds=60.0) == 10.9

        instant = RuntimeSystem(
            backend_factory=gemini_like,
            infill_factory=lambda clock: ScriptedInfill(clock, 0.16, echo_phrase_fn()),
            policy=SilencePolicy(0.0, 3),
        )
        assert measure_ttft(instant, question) == 0.0 + 0.16

        cadenced = RuntimeSystem(
            backend_factory=gemini_like,
            infill_factory=lambda clock: ScriptedInfill(clock, 0.16, echo_phrase_fn()),
            policy=SilencePolicy(1.0, 3),
        )
        assert measure_ttft(cadenced, question) == 1.0 + 0.16


def test_ttft_wall_clock_smoke():
    with criterion("TTFT wall-clock smoke: runtime < 0.3s with a 0.15s-sleep infill"):
        clock = WallClock()
        backend = ScriptedBackend(
            ScriptedSchedule.of((0.05, "The answer is Everest."), close_delay=0.1), clock
        )
        infill = ScriptedInfill(clock, 0.15, echo_phrase_fn())
        transcript = run_turn(
            "What is the tallest mountain?", backend, infill, clock, SilencePolicy(0.0, 3)
        )
        assert transcript.ttft is not None
        assert transcript.ttft < 0.3, f"wall-clock ttft {transcript.ttft:.3f}s"


def test_accuracy_plumbing_table_shape():
    with criterion("accuracy plumbing: gold echo 1.00, canned base 0.00, delta +1.00"):
        full = RuntimeSystem(
            backend_factory=gold_backend_factory(ITEMS, first_chunk_delay=0.2),
            infill_factory=lambda clock: ScriptedInfill(clock, 0.16, echo_phrase_fn()),
            policy=SilencePolicy(1.0, 3),
            name="runtime-gold-echo",
        )
        base = ModelOnlySystem(
            answer_fn=lambda _q: "I don't know.", latency=0.16, name="base-canned"
        )
        full_report = run_eval(full, ITEMS)
        base_report = run_eval(base, ITEMS)
        assert full_report.accuracy == 1.0
        assert base_report.accuracy == 0.0
        delta = compare_report(base_report, full_report)
        assert delta.deltas["accuracy"] == 1.0


def test_entailment_accounting_table_shape():
    with criterion("entailment accounting: echo 100% E, contradictions caught, judged+skipped==n"):
        # echo-mode transcripts: every chunk-conditioned phrase fully entailed
        rng = random.Random(5)
        for _ in range(50):
            transcript = random_turn(rng)
            report = verify_turn(transcript, ORACLE)
            assert report.judged + report.skipped == len(transcript)
            if report.judged:
                assert report.percentages[EntailmentLabel.ENTAILMENT] == 100.0
                assert report.percentages[EntailmentLabel.CONTRADICTION] == 0.0
                assert sum(report.percentages.values()) == pytest.approx(100.0, abs=0.1)

        # hand-built contradiction fixture
        from turnfill.protocol import append_event, append_phrase, close_turn, open_turn

        state = open_turn("Is the shop open?")
        append_event(state, EventKind.CHUNK, "The shop is open today.", 0.5)
        append_phrase(state, "The shop is not open today.", 0.6)
        contradiction_report = verify_turn(close_turn(state), ORACLE)
        assert contradiction_report.counts[EntailmentLabel.CONTRADICTION] == 1


def test_dataset_pipeline_end_to_end():
    with criterion("dataset pipeline: 6 domains x 50 docs validate, split, filter, round-trip"):
        bank = default_seed_bank()
        total_docs = 0
        for domain in DOMAINS:
            seeds = bank.for_domain(domain)
            for i in range(50):
                doc = template_generate(domain, seeds[i], i)
                assert validate_document(doc) == []
                examples = split_turns(doc)
                assert len(examples) == sum(len(t.responder) for t in doc.turns)
                kept, rejected = filter_entailed(examples, ORACLE)
                assert not rejected, f"{domain} doc {i} had rejects"
                for example in examples:
                    messages = parse_rendered_context(example.rendered_context)
                    turn = doc.turns[example.provenance.turn_index]
                    j = example.provenance.phrase_index
                    assert messages[0].content == turn.user
                    knowledge = [m.content for m in messages if m.role is Role.KNOWLEDGE]
                    spoken = [m.content for m in messages if m.role is Role.ASSISTANT]
                    assert knowledge == list(turn.responder_thoughts[: j + 1])
                    assert spoken == list(turn.responder[:j])
                total_docs += 1
        assert total_docs == 300


def test_gateway_fidelity_and_replay():
    with criterion("gateway fidelity: stream == transcript; 100 replay join points equivalent"):
        def factory(overrides):
            clock = VirtualClock()
            backend = ScriptedBackend(
                ScriptedSchedule.of((2.5, "The answer is Everest."), (0.4, "It stands tall.")),
                clock,
            )
            infill = ScriptedInfill(clock, 0.15, echo_phrase_fn())
            return backend, infill, clock, SilencePolicy(1.0, 3), {}

        manager = SessionManager(factory, threaded=False)
        session = manager.create_session()
        subscription = manager.subscribe(session.id)
        manager.post_utterance(session.id, "What is the tallest mountain?")

        frames = []
        import queue as queue_module

        while True:
            try:
                item = subscription.get(timeout=0.05)
            except queue_module.Empty:
                break
            if item is None:
                break
            frames.append(item)

        transcript = session.transcripts[0]
        event_frames = [f for f in frames if f.kind in ("knowledge_chunk", "silence_tick")]
        phrase_frames = [f for f in frames if f.kind == "phrase_done"]
        assert [
            (
                EventKind.CHUNK if f.kind == "knowledge_chunk" else EventKind.SILENCE,
                f.payload.get("text"),
                f.payload["timestamp"],
            )
            for f in event_frames
        ] == [(e.kind, e.text, e.timestamp) for e in transcript.events]
        assert [
            (f.payload["text"], f.payload["start_timestamp"]) for f in phrase_frames
        ] == [(p.text, p.start_timestamp) for p in transcript.phrases]
        assert frames[-1].kind == "turn_done"

        rng = random.Random(77)
        for _ in range(100):
            join_at = rng.randrange(len(frames))
            broadcaster = Broadcaster()
            broadcaster.begin_turn()
            joined = None
            for i, item in enumerate(frames):
                if i == join_at:
                    joined = broadcaster.subscribe()
                broadcaster.emit(item, terminal=(i == len(frames) - 1))
            received = []
            while True:
                try:
                    got = joined.get(timeout=0.01)
                except queue_module.Empty:
                    break
                if got is None:
                    break
                received.append(got)
            assert received == frames, f"join point {join_at} diverged"
