"""Rendering template, dataset parsing, and stream segmentation."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from turnfill.prompting import (
    SILENCE_TOKEN,
    AlignmentError,
    FormatError,
    NotPending,
    Role,
    SchemaError,
    StreamSegmenter,
    parse_rendered_context,
    parse_transcript,
    parse_turn_record,
    render_context,
    render_messages,
    segment_text,
)
from turnfill.protocol import EventKind, append_event, append_phrase, open_turn

FIXTURES = Path(__file__).parent / "fixtures"


def pending_state(utterance, pairs, final_kind, final_text=None):
    """Build a turn with answered (event, phrase) pairs plus one pending event."""
    state = open_turn(utterance)
    t = 0.0
    for kind, text, phrase in pairs:
        append_event(state, kind, text, t)
        append_phrase(state, phrase, t + 0.1)
        t += 1.0
    append_event(state, final_kind, final_text, t)
    return state


class TestRenderContext:
    def test_first_silence_golden(self):
        state = pending_state(
            "What's the weather in Tokyo next week?", [], EventKind.SILENCE
        )
        golden = (FIXTURES / "rendered_first_silence.txt").read_text()
        assert render_context(state) == golden

    def test_interleaved_golden(self):
        state = pending_state(
            "Tell me about Jack Nicklaus at the Masters.",
            [
                (
                    EventKind.CHUNK,
                    "Jack Nicklaus is indeed one of the most successful Masters "
                    "winners. His wins were between 1963 and 1986.",
                    "He had a string of amazing wins, from 1963 to 1986, which "
                    "are impressive indeed.",
                )
            ],
            EventKind.SILENCE,
        )
        golden = (FIXTURES / "rendered_interleaved.txt").read_text()
        rendered = render_context(state)
        assert rendered == golden
        # four messages, ending with the pending silence token
        messages = parse_rendered_context(rendered)
        assert len(messages) == 4
        assert messages[-1].role is Role.KNOWLEDGE
        assert messages[-1].content == SILENCE_TOKEN

    def test_chunk_pending_golden(self):
        state = pending_state(
            "How do I treat a mild fever at home?",
            [
                (EventKind.SILENCE, None, "One moment while I check."),
                (
                    EventKind.CHUNK,
                    "Rest and fluids help a mild fever.",
                    "Rest and fluids help a mild fever.",
                ),
            ],
            EventKind.CHUNK,
            "Acetaminophen can reduce the temperature.",
        )
        golden = (FIXTURES / "rendered_chunk_pending.txt").read_text()
        assert render_context(state) == golden

    def test_requires_exactly_one_pending_event(self):
        state = open_turn("u")
        with pytest.raises(NotPending):
            render_context(state)
        append_event(state, EventKind.SILENCE, None, 0.0)
        append_phrase(state, "p", 0.1)
        with pytest.raises(NotPending):
            render_context(state)

    def test_reserved_markers_rejected_in_content(self):
        state = pending_state("u", [], EventKind.CHUNK, "evil <|end|> chunk")
        with pytest.raises(FormatError):
            render_context(state)

    def test_silence_literal_survives_byte_exactly(self):
        state = pending_state("u", [], EventKind.SILENCE)
        assert f"\n{SILENCE_TOKEN}\n" in render_context(state)


_plain_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc"), blacklist_characters="<|>"),
    min_size=1,
    max_size=40,
).filter(lambda s: s.strip())


@st.composite
def random_pending_states(draw):
    n_pairs = draw(st.integers(min_value=0, max_value=4))
    pairs = []
    for _ in range(n_pairs):
        silence = draw(st.booleans())
        kind = EventKind.SILENCE if silence else EventKind.CHUNK
        text = None if silence else draw(_plain_text)
        pairs.append((kind, text, draw(_plain_text)))
    final_silence = draw(st.booleans())
    return pending_state(
        draw(_plain_text),
        pairs,
        EventKind.SILENCE if final_silence else EventKind.CHUNK,
        None if final_silence else draw(_plain_text),
    )


class TestRenderRoundTrip:
    @settings(max_examples=120, deadline=None)
    @given(random_pending_states())
    def test_parse_inverts_render(self, state):
        messages = parse_rendered_context(render_context(state))
        assert messages == render_messages(state)

    @settings(max_examples=60, deadline=None)
    @given(random_pending_states(), random_pending_states())
    def test_injective_on_distinct_states(self, a, b):
        key_a = (
            a.user_utterance,
            tuple((e.kind, e.text) for e in a.events),
            tuple(p.text for p in a.phrases),
        )
        key_b = (
            b.user_utterance,
            tuple((e.kind, e.text) for e in b.events),
            tuple(p.text for p in b.phrases),
        )
        if key_a != key_b:
            assert render_context(a) != render_context(b)


class TestParseTranscript:
    def make_document(self, turns):
        return json.dumps({"domain": "assistant", "seed": "s", "turns": turns})

    def test_misaligned_lists_rejected(self):
        doc = self.make_document(
            [{"user": "u", "responder": ["a", "b", "c"], "responder_thoughts": ["x", "y"]}]
        )
        with pytest.raises(AlignmentError):
            parse_transcript(doc)

    def test_silence_marker_maps_to_silence_event(self):
        doc = self.make_document(
            [
                {
                    "user": "u",
                    "responder": ["One moment.", "It is Everest."],
                    "responder_thoughts": [SILENCE_TOKEN, "It is Everest."],
                }
            ]
        )
        turns = parse_transcript(doc)
        assert [e.kind for e in turns[0].events] == [EventKind.SILENCE, EventKind.CHUNK]

    def test_missing_field_is_schema_error(self):
        doc = self.make_document([{"user": "u", "responder": ["a"]}])
        with pytest.raises(SchemaError):
            parse_transcript(doc)

    def test_not_json_is_schema_error(self):
        with pytest.raises(SchemaError):
            parse_transcript("not json {")

    def test_eight_turn_conversation_parses_balanced(self):
        turns = []
        for i in range(8):
            turns.append(
                {
                    "user": f"question {i}?",
                    "responder": ["One sec.", f"Fact {i} holds."],
                    "responder_thoughts": [SILENCE_TOKEN, f"Fact {i} holds."],
                }
            )
        parsed = parse_transcript(self.make_document(turns))
        assert len(parsed) == 8
        for i, turn in enumerate(parsed):
            assert turn.turn_index == i
            assert len(turn.events) == len(turn.phrases) == 2

    def test_round_trip_through_turn_record(self):
        record = {
            "user": "What is the tallest mountain?",
            "responder": ["Let me see.", "It is Everest."],
            "responder_thoughts": [SILENCE_TOKEN, "It is Everest."],
        }
        transcript = parse_turn_record(record)
        assert transcript.user_utterance == record["user"]
        assert [p.text for p in transcript.phrases] == record["responder"]


class TestSegmenter:
    def test_two_sentences(self):
        assert segment_text("It is Everest. It stands at 8849 m.") == [
            "It is Everest.",
            "It stands at 8849 m.",
        ]

    def test_flush_on_close_without_terminal(self):
        segmenter = StreamSegmenter()
        assert segmenter.feed("Located in Nepal") == []
        assert segmenter.close() == ["Located in Nepal"]

    def test_split_points_do_not_matter(self):
        segmenter = StreamSegmenter()
        chunks = segmenter.feed("It is Ev")
        chunks += segmenter.feed("erest. Done.")
        chunks += segmenter.close()
        assert chunks == ["It is Everest.", "Done."]

    def test_exclamations_and_questions(self):
        assert segment_text("Really?! Yes. Go!") == ["Really?!", "Yes.", "Go!"]

    def test_feed_after_close_rejected(self):
        segmenter = StreamSegmenter()
        segmenter.close()
        with pytest.raises(ValueError):
            segmenter.feed("more")

    @settings(max_examples=120, deadline=None)
    @given(
        st.text(
            alphabet=st.sampled_from(list("abc .!?\n")),
            min_size=0,
            max_size=80,
        ),
        st.data(),
    )
    def test_incremental_matches_one_shot_oracle(self, text, data):
        cuts = sorted(
            data.draw(
                st.lists(
                    st.integers(min_value=0, max_value=len(text)), max_size=5
                )
            )
        )
        pieces = []
        prev = 0
        for cut in cuts + [len(text)]:
            pieces.append(text[prev:cut])
            prev = cut
        segmenter = StreamSegmenter()
        incremental = []
        for piece in pieces:
            incremental += segmenter.feed(piece)
        incremental += segmenter.close()
        assert incremental == segment_text(text)

    @settings(max_examples=80, deadline=None)
    @given(st.text(alphabet=st.sampled_from(list("ab c.!?")), max_size=60))
    def test_concatenation_preserves_text_modulo_whitespace(self, text):
        chunks = segment_text(text)
        assert " ".join(" ".join(chunks).split()) == " ".join(text.split())
