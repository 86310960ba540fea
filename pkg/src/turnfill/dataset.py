"""Synthetic conversation corpus: generation, validation, split, and filtering.

A conversation document is the dataset unit: a domain label, the persona or
subtopic seed it grew from, and 8-12 turns of ``user`` /``responder`` /
``responder_thoughts``, where each responder sentence is paired with the
thought (knowledge chunk or silence literal) that conditioned it.  Corpus
files hold one JSON document per line.

Two generators share the schema.  The template generator is deterministic
and entailed by construction: every chunk textually contains its phrase's
content words, so the whole output passes the lexical entailment gate; it
exists to exercise the pipeline at desk scale.  The LLM generator delegates
to a configured backend in a single shot per conversation (multi-turn
simulation loses the thread of goal-directed dialogue) and rejects any
document that fails validation.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .clock import Clock, WallClock
from .engine import BackendHandle, KnowledgeQueue
from .entailment import EntailmentClassifier, EntailmentLabel, EntailmentVerdict, classify
from .prompting import (
    SILENCE_TOKEN,
    Role,
    parse_rendered_context,
    render_context,
)
from .protocol import EventKind, append_event, append_phrase, open_turn

logger = logging.getLogger(__name__)

DOMAINS = (
    "advice",
    "assistant",
    "education",
    "planning",
    "customer_service",
    "medical",
)

TURNS_MIN = 8
TURNS_MAX = 12


class ParseError(Exception):
    """The document is not parseable as a conversation document."""


class UnknownDomain(Exception):
    """Domain outside the supported set."""


class GenerationError(Exception):
    """The generation backend failed to produce a document."""


class ValidationError(Exception):
    """A generated document violated the schema invariants."""

    def __init__(self, violations: Sequence["Violation"]):
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = tuple(violations)


class InvalidDocument(Exception):
    """An operation requiring a valid document received a broken one."""

    def __init__(self, violations: Sequence["Violation"]):
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = tuple(violations)


@dataclass(frozen=True)
class DialogueTurn:
    user: str
    responder: tuple[str, ...]
    responder_thoughts: tuple[str, ...]


@dataclass(frozen=True)
class ConversationDocument:
    domain: str
    seed: str
    turns: tuple[DialogueTurn, ...]

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "seed": self.seed,
            "turns": [
                {
                    "user": t.user,
                    "responder": list(t.responder),
                    "responder_thoughts": list(t.responder_thoughts),
                }
                for t in self.turns
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    @property
    def content_id(self) -> str:
        """Stable content-derived identifier used for example provenance."""
        digest = hashlib.sha1(
            json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        ).hexdigest()
        return digest[:12]


def document_from_dict(data: object) -> ConversationDocument:
    """Build a document from parsed JSON, checking shape only (not invariants)."""
    if not isinstance(data, dict):
        raise ParseError("conversation document must be a JSON object")
    try:
        turns = tuple(
            DialogueTurn(
                user=str(t["user"]),
                responder=tuple(str(s) for s in t["responder"]),
                responder_thoughts=tuple(str(s) for s in t["responder_thoughts"]),
            )
            for t in data["turns"]
        )
        return ConversationDocument(
            domain=str(data.get("domain", "")),
            seed=str(data.get("seed", "")),
            turns=turns,
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed conversation document: {exc}") from exc


def document_from_json(text: str) -> ConversationDocument:
    try:
        return document_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}") from exc


# --- validation --------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    severity: str  # "error" | "warning"
    rule: str
    turn_index: int | None
    message: str

    def __str__(self) -> str:
        where = "document" if self.turn_index is None else f"turn {self.turn_index}"
        return f"[{self.severity}] {self.rule} at {where}: {self.message}"


def validate_document(doc: ConversationDocument) -> list[Violation]:
    """Check every schema invariant; empty result means a clean document.

    Turn-count drift outside 8-12 is reported as a warning (ingested data
    may legitimately differ); everything else is an error.
    """
    violations: list[Violation] = []
    if not (TURNS_MIN <= len(doc.turns) <= TURNS_MAX):
        violations.append(
            Violation(
                "warning",
                "turn-count",
                None,
                f"{len(doc.turns)} turns outside the generated range "
                f"{TURNS_MIN}-{TURNS_MAX}",
            )
        )
    for i, turn in enumerate(doc.turns):
        if not turn.user.strip():
            violations.append(Violation("error", "empty-user", i, "user utterance is empty"))
        if len(turn.responder) != len(turn.responder_thoughts):
            violations.append(
                Violation(
                    "error",
                    "alignment",
                    i,
                    f"{len(turn.responder)} responder sentences vs "
                    f"{len(turn.responder_thoughts)} thoughts",
                )
            )
        if len(turn.responder) < 1:
            violations.append(
                Violation("error", "empty-turn", i, "turn has no responder sentences")
            )
        for j, sentence in enumerate(turn.responder):
            if not sentence.strip():
                violations.append(
                    Violation("error", "empty-sentence", i, f"responder[{j}] is empty")
                )
        for j, thought in enumerate(turn.responder_thoughts):
            if not thought.strip():
                violations.append(
                    Violation("error", "empty-thought", i, f"responder_thoughts[{j}] is empty")
                )
    return violations


def document_errors(violations: Iterable[Violation]) -> list[Violation]:
    return [v for v in violations if v.severity == "error"]


# --- training examples --------------------------------------------------------


@dataclass(frozen=True)
class Provenance:
    conversation_id: str
    turn_index: int
    phrase_index: int


@dataclass(frozen=True)
class TrainingExample:
    """One fine-tuning unit: an interleaved context plus its target phrase.

    The rendered context always ends with the knowledge message the target
    answers.
    """

    rendered_context: str
    target_phrase: str
    provenance: Provenance

    def to_dict(self) -> dict:
        return {
            "context": self.rendered_context,
            "target": self.target_phrase,
            "provenance": {
                "conversation_id": self.provenance.conversation_id,
                "turn_index": self.provenance.turn_index,
                "phrase_index": self.provenance.phrase_index,
            },
        }


def example_from_dict(data: dict) -> TrainingExample:
    try:
        prov = data["provenance"]
        return TrainingExample(
            rendered_context=data["context"],
            target_phrase=data["target"],
            provenance=Provenance(
                conversation_id=prov["conversation_id"],
                turn_index=int(prov["turn_index"]),
                phrase_index=int(prov["phrase_index"]),
            ),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed training example: {exc}") from exc


def split_turns(doc: ConversationDocument, doc_id: str | None = None) -> list[TrainingExample]:
    """Explode a document into one example per responder phrase.

    Example ``j`` of a turn carries events 0..j and phrases 0..j-1 in its
    context and phrase ``j`` as the target, so the total example count
    equals the document's total phrase count.

    Raises:
        InvalidDocument: the document has validation errors.
    """
    errors = document_errors(validate_document(doc))
    if errors:
        raise InvalidDocument(errors)
    conversation_id = doc_id or doc.content_id
    examples: list[TrainingExample] = []
    for t_index, turn in enumerate(doc.turns):
        state = open_turn(turn.user)
        for j, (thought, sentence) in enumerate(
            zip(turn.responder_thoughts, turn.responder)
        ):
            if thought == SILENCE_TOKEN:
                append_event(state, EventKind.SILENCE, None, 0.0)
            else:
                append_event(state, EventKind.CHUNK, thought, 0.0)
            examples.append(
                TrainingExample(
                    rendered_context=render_context(state),
                    target_phrase=sentence,
                    provenance=Provenance(conversation_id, t_index, j),
                )
            )
            append_phrase(state, sentence, 0.0)
    return examples


@dataclass(frozen=True)
class RejectedExample:
    example: TrainingExample
    verdict: EntailmentVerdict


def filter_entailed(
    examples: Iterable[TrainingExample], gate: EntailmentClassifier
) -> tuple[list[TrainingExample], list[RejectedExample]]:
    """Keep examples whose final (chunk, target) pair is entailed.

    Silence-final examples are always kept; a rejected example carries the
    verdict that sank it.  Rejected examples are dropped, not regenerated:
    the pipeline is single-pass.
    """
    kept: list[TrainingExample] = []
    rejected: list[RejectedExample] = []
    for example in examples:
        final_knowledge = parse_rendered_context(example.rendered_context)[-1]
        if final_knowledge.role is not Role.KNOWLEDGE:
            raise InvalidDocument(
                [Violation("error", "context-shape", None, "context must end with knowledge")]
            )
        if final_knowledge.content == SILENCE_TOKEN:
            kept.append(example)
            continue
        verdict = classify(final_knowledge.content, example.target_phrase, gate)
        if verdict.label is EntailmentLabel.ENTAILMENT:
            kept.append(example)
        else:
            rejected.append(RejectedExample(example, verdict))
            logger.debug(
                "rejected %s turn %d phrase %d: %s",
                example.provenance.conversation_id,
                example.provenance.turn_index,
                example.provenance.phrase_index,
                verdict.label.value,
            )
    return kept, rejected


# --- seeds ---------------------------------------------------------------------


@dataclass(frozen=True)
class SeedBank:
    """Per-domain persona/subtopic seeds for conversation generation.

    Seeds are deliberately one-clause role descriptions; anything more
    specific tends to derail generated conversations with niche detail.
    """

    seeds: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for domain, entries in self.seeds.items():
            if len(set(entries)) != len(entries):
                raise ValueError(f"duplicate seeds for domain {domain!r}")
            if any(not s.strip() for s in entries):
                raise ValueError(f"empty seed for domain {domain!r}")

    def for_domain(self, domain: str) -> tuple[str, ...]:
        if domain not in self.seeds:
            raise UnknownDomain(f"no seeds for domain {domain!r}")
        return self.seeds[domain]


_SEED_ROLES = {
    "advice": (
        "a new graduate", "a first-time manager", "a recent retiree",
        "a long-distance partner", "a career changer", "a shy student",
        "a worried friend", "a young homeowner", "a freelance writer",
        "a weekend athlete",
    ),
    "assistant": (
        "a busy commuter", "a frequent traveler", "a home cook",
        "a podcast listener", "a casual gamer", "a gardening hobbyist",
        "a night-shift worker", "a student on a budget", "a dog owner",
        "a trivia enthusiast",
    ),
    "education": (
        "a high-school senior", "an adult learner", "a homeschooling parent",
        "a biology undergraduate", "an exchange student", "a math tutor",
        "a community-college applicant", "a language learner",
        "a science-fair participant", "a returning student",
    ),
    "planning": (
        "a wedding organizer", "a conference volunteer", "a family reunion host",
        "a road-trip driver", "a birthday party host", "a school-fair coordinator",
        "a camping trip leader", "a charity-run organizer", "a book-club founder",
        "a neighborhood cleanup lead",
    ),
    "customer_service": (
        "a delayed-parcel customer", "a new subscriber", "a refund seeker",
        "a warranty claimant", "a double-billed customer", "an account-locked user",
        "a plan-switching subscriber", "a damaged-item recipient",
        "a cancellation requester", "a loyalty-program member",
    ),
    "medical": (
        "a parent", "a caregiver", "a new patient", "a marathon trainee",
        "a recently diagnosed diabetic", "an allergy sufferer",
        "a post-surgery patient", "a night-shift nurse", "a college athlete",
        "an expectant mother",
    ),
}

_SEED_CONCERNS = {
    "advice": (
        "asking how to handle a difficult coworker", "weighing a cross-country move",
        "deciding whether to go back to school", "trying to repair an old friendship",
        "asking how to start saving money", "nervous about public speaking",
        "thinking about adopting a pet", "asking how to set boundaries with family",
        "trying to build an exercise habit", "unsure how to negotiate a raise",
        "asking how to pick a mentor", "struggling to balance work and rest",
        "asking whether to rent or buy", "trying to declutter a small apartment",
        "asking how to give honest feedback", "worried about a friend's spending",
        "planning a career pivot into design", "asking how to study consistently",
        "trying to make friends in a new city", "asking how to run a family meeting",
    ),
    "assistant": (
        "asking about tomorrow's weather", "looking for a quick dinner recipe",
        "asking how long a flight takes", "converting a recipe's measurements",
        "asking about a word's origin", "comparing two phone plans",
        "asking for a packing checklist", "setting up a workout reminder",
        "asking about a movie's runtime", "looking for a nearby trailhead",
        "asking how to remove a stain", "checking a capital city",
        "asking about a holiday date", "estimating a drive time",
        "asking how to brew cold coffee", "looking up a unit conversion",
        "asking about a plant's watering needs", "checking a sports score format",
        "asking how to split a bill fairly", "looking for a birthday gift idea",
    ),
    "education": (
        "asking how photosynthesis works", "preparing for an algebra exam",
        "asking about the water cycle", "comparing mitosis and meiosis",
        "asking how essays are structured", "learning about the French Revolution",
        "asking how vaccines train immunity", "studying plate tectonics",
        "asking about Newton's laws", "learning basic probability",
        "asking how enzymes work", "reviewing the periodic table",
        "asking about supply and demand", "learning to balance equations",
        "asking how memory consolidates", "studying the carbon cycle",
        "asking about parliamentary systems", "learning about neural signals",
        "asking how tides form", "reviewing literary devices",
    ),
    "planning": (
        "booking venues for a spring event", "drafting a three-day itinerary",
        "setting a catering budget", "scheduling volunteer shifts",
        "choosing a rain-backup plan", "ordering supplies in advance",
        "arranging carpool logistics", "timing invitations and reminders",
        "planning an accessible venue layout", "lining up a guest speaker",
        "coordinating a potluck signup", "mapping a race route",
        "reserving park permits", "planning a photo schedule",
        "building a cleanup crew roster", "choosing a theme and decorations",
        "sequencing a program of talks", "budgeting for rentals and deposits",
        "planning quiet space for kids", "setting up a registration table",
    ),
    "customer_service": (
        "tracking a package that stalled", "disputing an unexpected charge",
        "asking how returns work", "resetting a locked account",
        "claiming a warranty repair", "downgrading a subscription tier",
        "asking why service was interrupted", "updating a shipping address",
        "asking about a missing loyalty credit", "canceling before renewal",
        "reporting a damaged delivery", "asking for an invoice copy",
        "transferring service to a new home", "asking about data roaming fees",
        "requesting a delivery reschedule", "asking how refunds are timed",
        "fixing a wrong-item shipment", "asking about outage credits",
        "verifying a promotional price", "closing an unused account",
    ),
    "medical": (
        "asking about a child's fever", "managing seasonal allergies",
        "asking about safe stretching", "recovering from a sprained ankle",
        "asking how to read a nutrition label", "managing mild dehydration",
        "asking about sleep hygiene", "preparing for a blood test",
        "asking about sunscreen strength", "easing lower back pain",
        "asking when to treat a cough", "pacing a return to running",
        "asking about iron-rich foods", "handling a minor kitchen burn",
        "asking how hydration affects focus", "managing screen-time headaches",
        "asking about flu-season timing", "soothing a teething infant",
        "asking about blister care", "warming up before cold-weather runs",
    ),
}

_SEED_CONTEXTS = (
    "for the first time",
    "on a tight budget",
    "before the weekend",
    "after a recent move",
    "later this month",
)


def default_seed_bank(per_domain: int = 1000) -> SeedBank:
    """Deterministic seed bank built from role x concern x context clauses."""
    seeds: dict[str, tuple[str, ...]] = {}
    for domain in DOMAINS:
        combos = itertools.product(
            _SEED_ROLES[domain], _SEED_CONCERNS[domain], _SEED_CONTEXTS
        )
        entries = tuple(
            f"{role} {concern} {context}" for role, concern, context in combos
        )[:per_domain]
        seeds[domain] = entries
    return SeedBank(seeds=seeds)


# --- template generator ---------------------------------------------------------

# Chunk/phrase template pairs share every non-stopword slot and decoration,
# so the phrase's content words always occur in its chunk.
_PAIR_TEMPLATES = (
    ("The {key} for {topic} is {value}.", "The {key} for {topic} is {value}."),
    ("The {key} for {topic} is {value}.", "For {topic}, the {key} is {value}."),
    (
        "The recommended {key} for {topic} is {value}.",
        "So the recommended {key} for {topic} is {value}.",
    ),
    (
        "{value} is the usual {key} for {topic}.",
        "The usual {key} for {topic} is {value}.",
    ),
)

_USER_TEMPLATES = (
    "What is the {key} for {topic}?",
    "Can you tell me the {key} for {topic}?",
    "I need to know the {key} for {topic}.",
    "What would be the {key} for {topic}?",
)

_FILLER_PHRASES = (
    "One moment.",
    "Let me think about that.",
    "Give me just a second.",
    "Let me check on that for you.",
    "Hold on while I look into it.",
)

# Per-domain fact slots.  Values avoid negation words so the lexical gate's
# polarity rule stays quiet.
_TOPIC_BANK: dict[str, tuple[str, ...]] = {
    "advice": (
        "a salary negotiation", "a difficult conversation", "a new budget",
        "a morning routine", "a housing decision", "a study schedule",
    ),
    "assistant": (
        "a weekend forecast", "a pasta dinner", "a packing list",
        "a unit conversion", "a trivia question", "a travel estimate",
    ),
    "education": (
        "photosynthesis", "the water cycle", "basic probability",
        "plate tectonics", "the periodic table", "essay structure",
    ),
    "planning": (
        "a venue booking", "a catering order", "a volunteer roster",
        "an event timeline", "a supply run", "a guest list",
    ),
    "customer_service": (
        "a delayed package", "a billing dispute", "a warranty claim",
        "an account reset", "a subscription change", "a damaged delivery",
    ),
    "medical": (
        "a mild fever", "seasonal allergies", "a sprained ankle",
        "sleep hygiene", "hydration habits", "a minor burn",
    ),
}

_KEY_BANK = (
    "first step", "typical timeline", "main requirement", "usual cost range",
    "key detail", "common approach", "practical checklist", "core rule",
)

_VALUE_BANK = (
    "a short written plan", "two business days", "a confirmed appointment",
    "roughly twenty dollars", "the official form", "a quick daily review",
    "a simple checklist", "one clear reminder", "a fifteen minute buffer",
    "a trusted reference", "a small starter batch", "an early confirmation",
)


def template_generate(domain: str, seed: str, rng_seed: int) -> ConversationDocument:
    """Deterministic, schema-valid conversation from parameterized templates.

    Every chunk textually contains its phrase's content words, so generated
    documents pass the entailment gate by construction.  Identical inputs
    produce byte-identical documents.

    Raises:
        UnknownDomain: domain outside the six supported ones.
    """
    if domain not in DOMAINS:
        raise UnknownDomain(f"unknown domain {domain!r}")
    rng = random.Random(f"{rng_seed}:{domain}:{seed}")
    n_turns = rng.randint(TURNS_MIN, TURNS_MAX)
    turns: list[DialogueTurn] = []
    for t in range(n_turns):
        topic = rng.choice(_TOPIC_BANK[domain])
        key = rng.choice(_KEY_BANK)
        user = rng.choice(_USER_TEMPLATES).format(key=key, topic=topic)
        if t == 0:
            user = f"{user} I'm {seed}."
        thoughts: list[str] = []
        sentences: list[str] = []
        if rng.random() < 0.6:
            thoughts.append(SILENCE_TOKEN)
            sentences.append(rng.choice(_FILLER_PHRASES))
        for _ in range(rng.randint(1, 2)):
            value = rng.choice(_VALUE_BANK)
            chunk_tpl, phrase_tpl = rng.choice(_PAIR_TEMPLATES)
            thoughts.append(chunk_tpl.format(key=key, topic=topic, value=value))
            sentences.append(phrase_tpl.format(key=key, topic=topic, value=value))
        turns.append(
            DialogueTurn(
                user=user,
                responder=tuple(sentences),
                responder_thoughts=tuple(thoughts),
            )
        )
    return ConversationDocument(domain=domain, seed=seed, turns=tuple(turns))


# --- LLM generator ---------------------------------------------------------------


def build_generation_prompt(domain: str, seed: str) -> str:
    """Single-shot prompt asking for one full conversation document."""
    return (
        f"Write one complete spoken-style conversation in the {domain} domain "
        f"between a user and a responder. The responder role is seeded by: "
        f"{seed}. Produce strict JSON with the fields \"user\", \"responder\", "
        f"and \"responder_thoughts\" per turn, wrapped as "
        f"{{\"domain\": ..., \"seed\": ..., \"turns\": [...]}}. "
        f"Each turn's \"responder\" is a list of standalone sentences; "
        f"\"responder_thoughts\" pairs each sentence with either the concise "
        f"knowledge it restates or the literal token {SILENCE_TOKEN} for "
        f"filler said while thinking. Every knowledge thought must fully "
        f"support its sentence. Use 8 to 12 turns. Output only the JSON."
    )


def llm_generate(
    domain: str,
    seed: str,
    backend: BackendHandle,
    clock: Clock | None = None,
) -> ConversationDocument:
    """Generate one conversation document through a generation backend.

    The whole conversation is requested in a single shot and the result is
    validated; documents with errors are rejected rather than repaired.

    Raises:
        UnknownDomain, GenerationError, ParseError, ValidationError
    """
    if domain not in DOMAINS:
        raise UnknownDomain(f"unknown domain {domain!r}")
    clock = clock or WallClock()
    prompt = build_generation_prompt(domain, seed)
    queue = KnowledgeQueue(clock)
    backend.start_turn((), prompt, queue)
    pieces: list[str] = []
    while True:
        item = queue.take_nowait()
        if item is not None:
            pieces.append(item.text)
            continue
        if queue.error is not None:
            raise GenerationError(f"generation backend failed: {queue.error}")
        if queue.closed:
            break
        queue.wait_ready(None)
    text = " ".join(pieces).strip()
    if text.startswith("```"):
        text = text.strip("`")
        if text.startswith("json"):
            text = text[4:]
    if not text:
        raise GenerationError("generation backend produced no output")
    doc = document_from_json(text)
    violations = document_errors(validate_document(doc))
    if violations:
        raise ValidationError(violations)
    return doc


# --- corpus IO and stats ----------------------------------------------------------


@dataclass(frozen=True)
class CorpusStats:
    conversations: int
    turns: int
    examples: int

    def to_dict(self) -> dict:
        return {
            "conversations": self.conversations,
            "turns": self.turns,
            "examples": self.examples,
            "turns_per_conversation": (
                round(self.turns / self.conversations, 3) if self.conversations else 0.0
            ),
        }


def corpus_stats(docs: Iterable[ConversationDocument]) -> CorpusStats:
    conversations = turns = examples = 0
    for doc in docs:
        conversations += 1
        turns += len(doc.turns)
        examples += sum(len(t.responder) for t in doc.turns)
    return CorpusStats(conversations, turns, examples)


def write_corpus(docs: Iterable[ConversationDocument], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for doc in docs:
            handle.write(doc.to_json() + "\n")
            count += 1
    return count


def read_corpus(path: str | Path) -> Iterator[ConversationDocument]:
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                yield document_from_json(line)


def write_examples(examples: Iterable[TrainingExample], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for example in examples:
            handle.write(json.dumps(example.to_dict(), ensure_ascii=False) + "\n")
            count += 1
    return count


def read_examples(path: str | Path) -> Iterator[TrainingExample]:
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                yield example_from_dict(json.loads(line))
