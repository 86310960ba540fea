"""Evaluation harness: first-response latency, QA accuracy, turn entailment.

Three system shapes run under one protocol: the full runtime (infill
generator fed by a streamed backend), a bare backend, and a bare small
model.  Each answers a question and reports its time to first response
plus the full response text; the harness aggregates accuracy, latency
statistics, and (when a classifier is configured) entailment percentages
into a machine-readable report.

Conventions recorded in every report header:

* answer metric: normalized-substring containment over gold aliases
  (lowercase, punctuation and articles stripped, whitespace collapsed);
* first-response boundary: the first emitted character of the first phrase,
  not phrase completion;
* latency std is population (divide by n).
"""

from __future__ import annotations

import json
import logging
import random
import re
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from .adapters import KeyedScriptedBackend, ScriptedSchedule
from .clock import Clock, VirtualClock
from .engine import (
    BackendFailure,
    BackendHandle,
    InfillFailure,
    InfillHandle,
    KnowledgeQueue,
    SilencePolicy,
    run_turn,
)
from .entailment import (
    ClassifierUnavailable,
    EntailmentClassifier,
    EntailmentLabel,
    TurnEntailmentReport,
    verify_turn,
)
from .protocol import TurnTranscript

logger = logging.getLogger(__name__)

REPORT_CONVENTIONS = {
    "answer_metric": "normalized-substring containment over gold aliases",
    "ttft_boundary": "first emitted character of the first phrase",
    "std": "population (divide by n)",
}


class Timeout(Exception):
    """First response took longer than the configured ceiling."""


class ItemSetMismatch(Exception):
    """Two reports cover different item sets and cannot be compared."""


class AllItemsFailed(Exception):
    """Every item in the run errored; there is nothing to report."""


@dataclass(frozen=True)
class QAItem:
    """One open-domain question with its acceptable answer strings."""

    id: str
    question: str
    gold_answers: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.gold_answers or any(not g.strip() for g in self.gold_answers):
            raise ValueError(f"item {self.id}: gold answers must be non-empty")


def read_qa_items(path: str | Path) -> list[QAItem]:
    """Load line-delimited records {id, question, answers: [...]}."""
    items = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            items.append(
                QAItem(
                    id=str(data["id"]),
                    question=str(data["question"]),
                    gold_answers=tuple(str(a) for a in data["answers"]),
                )
            )
    return items


def bundled_qa_items() -> list[QAItem]:
    """The 20-item fixture shipped with the package for offline runs."""
    text = resources.files("turnfill").joinpath("data/qa_fixture.ndjson").read_text("utf-8")
    items = []
    for line in text.splitlines():
        if line.strip():
            data = json.loads(line)
            items.append(
                QAItem(
                    id=str(data["id"]),
                    question=str(data["question"]),
                    gold_answers=tuple(str(a) for a in data["answers"]),
                )
            )
    return items


# --- answer scoring -----------------------------------------------------------

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = re.compile(r"[^\w\s]")
_SPACES = re.compile(r"\s+")


def normalize_answer_text(text: str) -> str:
    """Lowercase, strip punctuation and articles, collapse whitespace."""
    text = text.lower()
    text = _PUNCT.sub(" ", text)
    text = _ARTICLES.sub(" ", text)
    return _SPACES.sub(" ", text).strip()


def score_answer(response: str, gold_answers: Sequence[str]) -> bool:
    """True iff any normalized gold answer is a substring of the response.

    Strict containment: no stemming and no spelling folding, so "theatre"
    does not match gold "theater".
    """
    haystack = normalize_answer_text(response)
    needles = (normalize_answer_text(gold) for gold in gold_answers)
    return any(needle and needle in haystack for needle in needles)


# --- systems under test ----------------------------------------------------------


@dataclass(frozen=True)
class AskOutcome:
    """One question answered by a system under test."""

    ttft: float | None
    response: str
    transcript: TurnTranscript | None = None


class SystemUnderTest(Protocol):
    name: str

    def ask(self, question: str) -> AskOutcome: ...


ClockFactory = Callable[[], Clock]
BackendFactory = Callable[[Clock], BackendHandle]
InfillFactory = Callable[[Clock], InfillHandle]


@dataclass
class RuntimeSystem:
    """The full runtime: silence cadence + backend stream + infill generator.

    Factories build a fresh clock and adapters per question so items are
    independent and may run in parallel.
    """

    backend_factory: BackendFactory
    infill_factory: InfillFactory
    policy: SilencePolicy = field(default_factory=SilencePolicy)
    clock_factory: ClockFactory = VirtualClock
    name: str = "runtime"

    def ask(self, question: str) -> AskOutcome:
        clock = self.clock_factory()
        transcript = run_turn(
            question,
            self.backend_factory(clock),
            self.infill_factory(clock),
            clock,
            self.policy,
        )
        return AskOutcome(
            ttft=transcript.ttft,
            response=transcript.joined_phrase_text(),
            transcript=transcript,
        )


@dataclass
class BackendOnlySystem:
    """A bare backend: latency is the first chunk's arrival time."""

    backend_factory: BackendFactory
    clock_factory: ClockFactory = VirtualClock
    name: str = "backend-only"

    def ask(self, question: str) -> AskOutcome:
        clock = self.clock_factory()
        queue = KnowledgeQueue(clock)
        self.backend_factory(clock).start_turn((), question, queue)
        chunks: list[str] = []
        first_arrival: float | None = None
        while True:
            item = queue.take_nowait()
            if item is not None:
                if first_arrival is None:
                    first_arrival = item.timestamp
                chunks.append(item.text)
                continue
            if queue.error is not None:
                raise BackendFailure(queue.error)
            if queue.closed:
                break
            queue.wait_ready(None)
        return AskOutcome(ttft=first_arrival, response=" ".join(chunks))


@dataclass
class ModelOnlySystem:
    """A bare small model prompted directly, with a fixed response latency."""

    answer_fn: Callable[[str], str]
    latency: float = 0.0
    clock_factory: ClockFactory = VirtualClock
    name: str = "model-only"

    def ask(self, question: str) -> AskOutcome:
        clock = self.clock_factory()
        start = clock.now()
        clock.sleep(self.latency)
        response = self.answer_fn(question)
        return AskOutcome(ttft=clock.now() - start, response=response)


def gold_backend_factory(
    items: Iterable[QAItem],
    first_chunk_delay: float = 0.2,
    close_delay: float = 0.0,
) -> BackendFactory:
    """Backend factory that answers each known question with its gold answer.

    The scripted double for "the backend knows the answer": one chunk,
    ``The answer is <gold>.``, after a fixed delay.
    """
    by_question = {item.question: item for item in items}

    def factory(clock: Clock) -> BackendHandle:
        def lookup(utterance: str) -> ScriptedSchedule:
            item = by_question.get(utterance)
            if item is None:
                raise KeyError(f"no scripted answer for {utterance!r}")
            return ScriptedSchedule.of(
                (first_chunk_delay, f"The answer is {item.gold_answers[0]}."),
                close_delay=close_delay,
            )

        return KeyedScriptedBackend(lookup, clock)

    return factory


def measure_ttft(
    run: SystemUnderTest, question: str, ceiling_seconds: float = 60.0
) -> float:
    """First-response latency for one question, bounded by a ceiling.

    Raises:
        Timeout: the system produced nothing, or nothing before the ceiling.
    """
    outcome = run.ask(question)
    if outcome.ttft is None or outcome.ttft > ceiling_seconds:
        raise Timeout(
            f"no first response within {ceiling_seconds}s "
            f"(got {outcome.ttft if outcome.ttft is not None else 'nothing'})"
        )
    return outcome.ttft


# --- aggregate run ----------------------------------------------------------------


@dataclass(frozen=True)
class EvalRecord:
    item_id: str
    ttft: float | None = None
    full_response: str = ""
    correct: bool | None = None
    entailment: TurnEntailmentReport | None = None
    error: str | None = None

    def __post_init__(self) -> None:
        if (self.correct is None) == (self.error is None):
            raise ValueError("exactly one of correct/error must be set")

    def to_dict(self) -> dict:
        data: dict = {"item_id": self.item_id}
        if self.error is not None:
            data["error"] = self.error
            return data
        data["ttft"] = self.ttft
        data["correct"] = self.correct
        data["full_response"] = self.full_response
        if self.entailment is not None:
            data["entailment"] = {
                "judged": self.entailment.judged,
                "skipped": self.entailment.skipped,
                "counts": {
                    label.value: self.entailment.counts[label]
                    for label in EntailmentLabel
                },
            }
        return data


@dataclass(frozen=True)
class EvalReport:
    system: str
    n: int
    correct_count: int
    incorrect_count: int
    error_count: int
    accuracy: float
    ttft_mean: float | None
    ttft_std: float | None
    entailment_counts: dict[str, int]
    entailment_percentages: dict[str, float]
    records: tuple[EvalRecord, ...]
    conventions: dict[str, str] = field(default_factory=lambda: dict(REPORT_CONVENTIONS))

    @property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(r.item_id for r in self.records)

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "conventions": self.conventions,
            "n": self.n,
            "correct_count": self.correct_count,
            "incorrect_count": self.incorrect_count,
            "error_count": self.error_count,
            "accuracy": self.accuracy,
            "ttft_mean": self.ttft_mean,
            "ttft_std": self.ttft_std,
            "entailment_counts": self.entailment_counts,
            "entailment_percentages": self.entailment_percentages,
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)


def _aggregate(system: str, records: Sequence[EvalRecord]) -> EvalReport:
    correct = sum(1 for r in records if r.correct is True)
    incorrect = sum(1 for r in records if r.correct is False)
    errors = sum(1 for r in records if r.error is not None)
    scored = correct + incorrect
    ttfts = [r.ttft for r in records if r.ttft is not None and r.error is None]
    counts = {label: 0 for label in EntailmentLabel}
    for record in records:
        if record.entailment is not None:
            for label in EntailmentLabel:
                counts[label] += record.entailment.counts[label]
    judged = sum(counts.values())
    return EvalReport(
        system=system,
        n=len(records),
        correct_count=correct,
        incorrect_count=incorrect,
        error_count=errors,
        accuracy=(correct / scored) if scored else 0.0,
        ttft_mean=statistics.fmean(ttfts) if ttfts else None,
        ttft_std=statistics.pstdev(ttfts) if ttfts else None,
        entailment_counts={label.value: counts[label] for label in EntailmentLabel},
        entailment_percentages={
            label.value: (100.0 * counts[label] / judged if judged else 0.0)
            for label in EntailmentLabel
        },
        records=tuple(records),
    )


def _run_one(
    system: SystemUnderTest,
    item: QAItem,
    classifier: EntailmentClassifier | None,
) -> EvalRecord:
    try:
        outcome = system.ask(item.question)
    except (BackendFailure, InfillFailure, Timeout, ClassifierUnavailable) as exc:
        return EvalRecord(item_id=item.id, error=f"{type(exc).__name__}: {exc}")
    entailment = None
    if classifier is not None and outcome.transcript is not None:
        try:
            entailment = verify_turn(outcome.transcript, classifier)
        except ClassifierUnavailable as exc:
            entailment = exc.partial_report
            logger.warning("classifier unavailable for item %s: %s", item.id, exc)
    return EvalRecord(
        item_id=item.id,
        ttft=outcome.ttft,
        full_response=outcome.response,
        correct=score_answer(outcome.response, item.gold_answers),
        entailment=entailment,
    )


def run_eval(
    system: SystemUnderTest,
    items: Sequence[QAItem],
    *,
    classifier: EntailmentClassifier | None = None,
    sample_size: int | None = None,
    sample_seed: int = 0,
    parallelism: int = 1,
) -> EvalReport:
    """Run every item through the system and aggregate a report.

    Item order is deterministic under a fixed sampling seed.  Per-item
    failures are recorded and the run continues; only a run in which every
    item fails aborts.  Keep ``parallelism`` at 1 for wall-clock systems:
    latency measurements under contention are worthless.

    Raises:
        AllItemsFailed, ValueError (empty item list)
    """
    items = list(items)
    if not items:
        raise ValueError("run_eval requires at least one item")
    if sample_size is not None and sample_size < len(items):
        rng = random.Random(sample_seed)
        items = rng.sample(items, sample_size)
    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            records = list(
                pool.map(lambda item: _run_one(system, item, classifier), items)
            )
    else:
        records = [_run_one(system, item, classifier) for item in items]
    if all(r.error is not None for r in records):
        raise AllItemsFailed(
            f"all {len(records)} items failed; first: {records[0].error}"
        )
    return _aggregate(getattr(system, "name", "system"), records)


# --- report comparison --------------------------------------------------------------


@dataclass(frozen=True)
class ReportDelta:
    """Per-metric differences between two reports on the same item set."""

    baseline: str
    candidate: str
    deltas: dict[str, float | None]

    def to_dict(self) -> dict:
        return {
            "baseline": self.baseline,
            "candidate": self.candidate,
            "deltas": self.deltas,
        }


def compare_report(a: EvalReport, b: EvalReport) -> ReportDelta:
    """Signed metric deltas (b minus a) for reports over one item set."""
    if sorted(a.item_ids) != sorted(b.item_ids):
        raise ItemSetMismatch(
            f"reports cover different items ({len(a.item_ids)} vs {len(b.item_ids)})"
        )

    def diff(x: float | None, y: float | None) -> float | None:
        if x is None or y is None:
            return None
        return y - x

    deltas: dict[str, float | None] = {
        "accuracy": diff(a.accuracy, b.accuracy),
        "ttft_mean": diff(a.ttft_mean, b.ttft_mean),
        "ttft_std": diff(a.ttft_std, b.ttft_std),
    }
    for label in EntailmentLabel:
        deltas[f"entailment_{label.value}_pct"] = diff(
            a.entailment_percentages[label.value],
            b.entailment_percentages[label.value],
        )
    return ReportDelta(baseline=a.system, candidate=b.system, deltas=deltas)


def render_report_table(report: EvalReport) -> str:
    """Flat terminal rendering of the headline metrics."""
    lines = [
        f"system            {report.system}",
        f"items             {report.n} "
        f"(correct {report.correct_count}, incorrect {report.incorrect_count}, "
        f"errors {report.error_count})",
        f"accuracy          {report.accuracy:.3f}",
    ]
    if report.ttft_mean is not None:
        lines.append(
            f"ttft              {report.ttft_mean:.3f}s +/- {report.ttft_std:.3f}s"
        )
    judged = sum(report.entailment_counts.values())
    if judged:
        pct = report.entailment_percentages
        lines.append(
            "entailment        "
            f"E {pct['entailment']:.1f}%  N {pct['neutral']:.1f}%  "
            f"C {pct['contradiction']:.1f}%  ({judged} pairs)"
        )
    return "\n".join(lines)


def render_delta_table(delta: ReportDelta) -> str:
    lines = [f"{'baseline':<30}{delta.baseline}", f"{'candidate':<30}{delta.candidate}"]
    for metric, value in delta.deltas.items():
        rendered = "n/a" if value is None else f"{value:+.3f}"
        lines.append(f"{metric:<30}{rendered}")
    return "\n".join(lines)
