"""Dataset pipeline: validation, splitting, filtering, generators, IO."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings, strategies as st

from turnfill.adapters import ScriptedBackend, ScriptedSchedule
from turnfill.clock import VirtualClock
from turnfill.dataset import (
    DOMAINS,
    ConversationDocument,
    DialogueTurn,
    InvalidDocument,
    ParseError,
    UnknownDomain,
    ValidationError,
    corpus_stats,
    default_seed_bank,
    document_from_json,
    filter_entailed,
    llm_generate,
    read_corpus,
    read_examples,
    split_turns,
    template_generate,
    validate_document,
    write_corpus,
    write_examples,
)
from turnfill.entailment import LexicalOracle
from turnfill.prompting import SILENCE_TOKEN, Role, parse_rendered_context

ORACLE = LexicalOracle()


def make_doc(n_turns=8, responder=None, thoughts=None):
    turns = []
    for i in range(n_turns):
        turns.append(
            DialogueTurn(
                user=f"question {i}?",
                responder=tuple(responder or ("One sec.", f"The fact {i} holds.")),
                responder_thoughts=tuple(
                    thoughts or (SILENCE_TOKEN, f"The fact {i} holds.")
                ),
            )
        )
    return ConversationDocument(domain="assistant", seed="a tester", turns=tuple(turns))


class TestValidateDocument:
    def test_well_formed_doc_is_clean(self):
        assert validate_document(make_doc()) == []

    def test_misalignment_is_an_error_naming_the_turn(self):
        doc = make_doc(
            n_turns=8,
            responder=("a", "b"),
            thoughts=(SILENCE_TOKEN, "b", "c"),
        )
        violations = validate_document(doc)
        errors = [v for v in violations if v.severity == "error"]
        assert errors and errors[0].rule == "alignment"
        assert errors[0].turn_index == 0

    def test_short_doc_warns_but_does_not_error(self):
        violations = validate_document(make_doc(n_turns=6))
        assert [v.severity for v in violations] == ["warning"]
        assert violations[0].rule == "turn-count"

    def test_empty_user_is_an_error(self):
        doc = ConversationDocument(
            domain="assistant",
            seed="s",
            turns=tuple(
                [DialogueTurn(user="  ", responder=("a",), responder_thoughts=("a",))]
                + list(make_doc(7).turns)
            ),
        )
        assert any(v.rule == "empty-user" for v in validate_document(doc))


class TestSplitTurns:
    def test_context_grows_by_two_messages_per_phrase(self):
        doc = ConversationDocument(
            domain="assistant",
            seed="s",
            turns=(
                DialogueTurn(
                    user="u?",
                    responder=("p0", "p1", "p2"),
                    responder_thoughts=("c0.", SILENCE_TOKEN, "c2."),
                ),
            )
            + make_doc(7).turns,
        )
        examples = split_turns(doc)
        first_turn = [e for e in examples if e.provenance.turn_index == 0]
        lengths = [len(parse_rendered_context(e.rendered_context)) for e in first_turn]
        assert lengths == [2, 4, 6]
        assert [e.target_phrase for e in first_turn] == ["p0", "p1", "p2"]

    def test_one_example_per_phrase(self):
        doc = make_doc(n_turns=10, responder=("only",), thoughts=("only",))
        assert len(split_turns(doc)) == 10

    def test_invalid_document_rejected(self):
        doc = make_doc(responder=("a",), thoughts=("a", "b"))
        with pytest.raises(InvalidDocument):
            split_turns(doc)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(
            st.lists(st.booleans(), min_size=1, max_size=4), min_size=8, max_size=12
        )
    )
    def test_example_count_equals_phrase_count(self, layout):
        turns = []
        for i, phrase_plan in enumerate(layout):
            thoughts = tuple(
                SILENCE_TOKEN if silent else f"fact {i} {j} words."
                for j, silent in enumerate(phrase_plan)
            )
            responder = tuple(
                f"phrase {i} {j} text." for j in range(len(phrase_plan))
            )
            turns.append(
                DialogueTurn(user=f"q{i}?", responder=responder, responder_thoughts=thoughts)
            )
        doc = ConversationDocument(domain="advice", seed="s", turns=tuple(turns))
        total_phrases = sum(len(t.responder) for t in doc.turns)
        examples = split_turns(doc)
        assert len(examples) == total_phrases

    def test_every_context_parses_back_to_a_prefix(self):
        doc = make_doc()
        for example in split_turns(doc):
            messages = parse_rendered_context(example.rendered_context)
            turn = doc.turns[example.provenance.turn_index]
            j = example.provenance.phrase_index
            assert messages[0].content == turn.user
            knowledge = [m for m in messages if m.role is Role.KNOWLEDGE]
            assistant = [m for m in messages if m.role is Role.ASSISTANT]
            assert len(knowledge) == j + 1
            assert [m.content for m in assistant] == list(turn.responder[:j])
            assert messages[-1].role is Role.KNOWLEDGE


class TestFilterEntailed:
    def test_silence_final_examples_always_kept(self):
        doc = make_doc(responder=("anything goes",), thoughts=(SILENCE_TOKEN,))
        kept, rejected = filter_entailed(split_turns(doc), ORACLE)
        assert len(kept) == 8 and not rejected

    def test_echo_pairs_kept(self):
        doc = make_doc(
            responder=("The fact holds today.",), thoughts=("The fact holds today.",)
        )
        kept, rejected = filter_entailed(split_turns(doc), ORACLE)
        assert len(kept) == 8 and not rejected

    def test_contradiction_rejected_with_reason(self):
        doc = make_doc(
            responder=("The shop is not open.",), thoughts=("The shop is open.",)
        )
        kept, rejected = filter_entailed(split_turns(doc), ORACLE)
        assert not kept and len(rejected) == 8
        assert rejected[0].verdict.label.value == "contradiction"


class TestTemplateGenerate:
    def test_generated_doc_is_valid(self):
        doc = template_generate("medical", "a parent asking about a child's fever", 42)
        assert validate_document(doc) == []
        assert 8 <= len(doc.turns) <= 12

    def test_deterministic_given_same_inputs(self):
        a = template_generate("advice", "a new graduate", 7)
        b = template_generate("advice", "a new graduate", 7)
        assert a.to_json() == b.to_json()

    def test_different_seeds_differ(self):
        a = template_generate("advice", "a new graduate", 7)
        b = template_generate("advice", "a new graduate", 8)
        assert a.to_json() != b.to_json()

    def test_unknown_domain_rejected(self):
        with pytest.raises(UnknownDomain):
            template_generate("cooking", "s", 0)

    def test_generated_docs_pass_entailment_gate(self):
        bank = default_seed_bank()
        for domain in DOMAINS:
            for i in range(5):
                doc = template_generate(domain, bank.for_domain(domain)[i], i)
                kept, rejected = filter_entailed(split_turns(doc), ORACLE)
                assert not rejected, (domain, i, rejected[:1])

    def test_seed_appears_in_first_utterance(self):
        doc = template_generate("education", "an adult learner", 3)
        assert "an adult learner" in doc.turns[0].user


class TestLlmGenerate:
    def fixed_doc_json(self):
        return make_doc().to_dict()

    def test_stub_backend_with_valid_doc_accepted(self):
        clock = VirtualClock()
        payload = json.dumps(self.fixed_doc_json())
        backend = ScriptedBackend(ScriptedSchedule.of((0.1, payload)), clock)
        doc = llm_generate("assistant", "a tester", backend, clock)
        assert len(doc.turns) == 8

    def test_misaligned_stub_doc_rejected(self):
        clock = VirtualClock()
        bad = self.fixed_doc_json()
        bad["turns"][0]["responder_thoughts"] = bad["turns"][0]["responder_thoughts"][:-1] or ["x"]
        bad["turns"][0]["responder"] = ["a", "b"]
        backend = ScriptedBackend(ScriptedSchedule.of((0.1, json.dumps(bad))), clock)
        with pytest.raises(ValidationError):
            llm_generate("assistant", "a tester", backend, clock)

    def test_non_json_output_is_parse_error(self):
        clock = VirtualClock()
        backend = ScriptedBackend(ScriptedSchedule.of((0.1, "I cannot do that.")), clock)
        with pytest.raises(ParseError):
            llm_generate("assistant", "a tester", backend, clock)

    def test_prompt_contains_seed_verbatim(self):
        clock = VirtualClock()
        payload = json.dumps(self.fixed_doc_json())
        backend = ScriptedBackend(ScriptedSchedule.of((0.1, payload)), clock)
        llm_generate("medical", "a parent asking about a child's fever", backend, clock)
        assert "a parent asking about a child's fever" in backend.calls[0].utterance

    def test_unknown_domain_rejected(self):
        clock = VirtualClock()
        backend = ScriptedBackend(ScriptedSchedule.of(), clock)
        with pytest.raises(UnknownDomain):
            llm_generate("finance", "s", backend, clock)


class TestSeedBank:
    def test_thousand_unique_seeds_per_domain(self):
        bank = default_seed_bank()
        for domain in DOMAINS:
            seeds = bank.for_domain(domain)
            assert len(seeds) == 1000
            assert len(set(seeds)) == 1000

    def test_unknown_domain(self):
        with pytest.raises(UnknownDomain):
            default_seed_bank().for_domain("sports")


class TestCorpusIo:
    def test_round_trip(self, tmp_path):
        docs = [template_generate("advice", f"seed {i}", i) for i in range(3)]
        path = tmp_path / "corpus.ndjson"
        assert write_corpus(docs, path) == 3
        restored = list(read_corpus(path))
        assert [d.to_json() for d in restored] == [d.to_json() for d in docs]

    def test_examples_round_trip(self, tmp_path):
        examples = split_turns(make_doc())
        path = tmp_path / "examples.ndjson"
        write_examples(examples, path)
        restored = list(read_examples(path))
        assert restored == examples

    def test_stats(self):
        docs = [make_doc(n_turns=10), make_doc(n_turns=8)]
        stats = corpus_stats(docs)
        assert stats.conversations == 2
        assert stats.turns == 18
        assert stats.examples == 36
        assert stats.to_dict()["turns_per_conversation"] == 9.0

    def test_document_from_json_rejects_garbage(self):
        with pytest.raises(ParseError):
            document_from_json("[1, 2, 3]")
        with pytest.raises(ParseError):
            document_from_json("{")
