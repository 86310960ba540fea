"""Entailment gating: premise/hypothesis classification and turn reports.

Chunk-conditioned phrases must only restate what their knowledge chunk (and
the turn's earlier phrases) already guarantees; silence-conditioned phrases
are free-form filler and are exempt.  Two classifier implementations exist
behind one protocol: an HTTP client for any MNLI-style model served over a
simple label+scores endpoint, and a deterministic lexical oracle used by the
offline test suite.  The oracle is a frozen word-overlap rule, not a claim
of NLI fidelity.
"""

from __future__ import annotations

import logging
import string
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol, Sequence

import httpx

from .prompting import SILENCE_TOKEN, AlignmentError
from .protocol import EventKind, TurnTranscript

logger = logging.getLogger(__name__)


class ClassifierUnavailable(Exception):
    """The configured classifier cannot be reached or answered garbage.

    When raised mid-report, the work completed so far rides along on
    ``partial_report``.
    """

    def __init__(self, message: str, partial_report: "TurnEntailmentReport | None" = None):
        super().__init__(message)
        self.partial_report = partial_report


class EntailmentLabel(Enum):
    ENTAILMENT = "entailment"
    NEUTRAL = "neutral"
    CONTRADICTION = "contradiction"


@dataclass(frozen=True)
class EntailmentVerdict:
    """Argmax label plus the classifier's confidence for that label."""

    label: EntailmentLabel
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


class EntailmentClassifier(Protocol):
    def classify(self, premise: str, hypothesis: str) -> EntailmentVerdict: ...


def classify(premise: str, hypothesis: str, classifier: EntailmentClassifier) -> EntailmentVerdict:
    """Classify one premise/hypothesis pair through the given classifier."""
    if not premise.strip() or not hypothesis.strip():
        raise ValueError("premise and hypothesis must both be non-empty")
    return classifier.classify(premise, hypothesis)


# --- lexical oracle ----------------------------------------------------------

# Frozen normalization tables.  Stopwords are glue words ignored by the
# overlap rule; they deliberately exclude every negation word below.
STOPWORDS = frozenset(
    """
    a an the and or but if then than as at by for with from of to in on
    into onto over under after before between during about around
    is are was were be been being am do does did done doing
    have has had having will would can could may might shall should must
    it its this that these those there here
    i you he she we they me him them my your his her their our us
    what which who whom whose when where why how
    so such just very really too also well now okay yes please
    """.split()
)

# Words whose presence flips polarity.  "false" is included so bare
# truth-value flips ("X is true" vs "X is false") register as contradiction.
NEGATION_WORDS = frozenset(
    """
    not no never none nothing nobody nowhere neither nor cannot cant
    dont doesnt didnt isnt arent wasnt werent wont wouldnt couldnt
    shouldnt without false
    """.split()
)

OVERLAP_THRESHOLD = 0.7

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def _content_tokens(text: str) -> list[str]:
    tokens = text.lower().translate(_PUNCT_TABLE).split()
    return [t for t in tokens if t not in STOPWORDS]


class LexicalOracle:
    """Deterministic word-overlap stand-in for an NLI classifier.

    Rule table (applied to lowercased, punctuation-stripped,
    stopword-filtered tokens):

    1. If premise and hypothesis differ in negation-word parity
       (:data:`NEGATION_WORDS`), the verdict is contradiction.
    2. Else if at least :data:`OVERLAP_THRESHOLD` of the hypothesis content
       words occur in the premise, the verdict is entailment.  A hypothesis
       with no content words is vacuously entailed.
    3. Otherwise neutral.

    The score is always the overlap fraction, so identical inputs always
    give identical verdicts and growing the premise never shrinks the score.
    """

    name = "lexical-oracle"

    def __init__(self, threshold: float = OVERLAP_THRESHOLD):
        self.threshold = threshold

    def classify(self, premise: str, hypothesis: str) -> EntailmentVerdict:
        premise_tokens = _content_tokens(premise)
        hypothesis_tokens = _content_tokens(hypothesis)

        premise_parity = sum(t in NEGATION_WORDS for t in premise_tokens) % 2
        hypothesis_parity = sum(t in NEGATION_WORDS for t in hypothesis_tokens) % 2

        unique_hypothesis = set(hypothesis_tokens)
        if unique_hypothesis:
            premise_set = set(premise_tokens)
            overlap = sum(1 for t in unique_hypothesis if t in premise_set) / len(
                unique_hypothesis
            )
        else:
            overlap = 1.0

        if premise_parity != hypothesis_parity:
            return EntailmentVerdict(EntailmentLabel.CONTRADICTION, overlap)
        if overlap >= self.threshold:
            return EntailmentVerdict(EntailmentLabel.ENTAILMENT, overlap)
        return EntailmentVerdict(EntailmentLabel.NEUTRAL, overlap)


# --- HTTP classifier ---------------------------------------------------------


@dataclass(frozen=True)
class ClassifierEndpointConfig:
    url: str
    timeout_seconds: float = 30.0
    max_in_flight: int = 4


class HttpClassifier:
    """Client for a generic NLI classification endpoint.

    Contract: request ``{"premise": ..., "hypothesis": ...}``; response
    ``{"label": <entailment|neutral|contradiction>, "scores": {...}}`` with
    the three scores summing to 1 within 1e-6.  In-flight requests are
    bounded by a semaphore so turn-level fan-out cannot stampede the model.
    """

    name = "http-classifier"

    def __init__(
        self,
        config: ClassifierEndpointConfig,
        transport: httpx.BaseTransport | None = None,
    ):
        self.config = config
        self._client = httpx.Client(transport=transport, timeout=config.timeout_seconds)
        self._slots = threading.Semaphore(config.max_in_flight)

    def classify(self, premise: str, hypothesis: str) -> EntailmentVerdict:
        with self._slots:
            try:
                response = self._client.post(
                    self.config.url,
                    json={"premise": premise, "hypothesis": hypothesis},
                )
            except httpx.HTTPError as exc:
                raise ClassifierUnavailable(f"classifier unreachable: {exc}") from exc
        if response.status_code != 200:
            raise ClassifierUnavailable(
                f"classifier HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            data = response.json()
            label = EntailmentLabel(str(data["label"]).lower())
            scores = {
                EntailmentLabel(k.lower()): float(v) for k, v in data["scores"].items()
            }
        except (KeyError, ValueError, TypeError) as exc:
            raise ClassifierUnavailable(f"malformed classifier response: {exc}") from exc
        if set(scores) != set(EntailmentLabel):
            raise ClassifierUnavailable("classifier response missing a label score")
        total = sum(scores.values())
        if abs(total - 1.0) > 1e-6:
            raise ClassifierUnavailable(f"classifier scores sum to {total}, not 1")
        return EntailmentVerdict(label, scores[label])


# --- turn-level verification -------------------------------------------------


@dataclass(frozen=True)
class PhraseVerdict:
    phrase_seq: int
    verdict: EntailmentVerdict


@dataclass(frozen=True)
class TurnEntailmentReport:
    """Per-turn entailment accounting over chunk-conditioned phrases.

    ``judged + skipped == n`` for complete reports; silence-conditioned
    phrases are counted as skipped, never judged.  Percentages are over
    judged pairs and all-zero when nothing was judged.
    """

    verdicts: tuple[PhraseVerdict, ...]
    skipped: int
    n: int
    complete: bool = True
    counts: dict[EntailmentLabel, int] = field(default_factory=dict)
    percentages: dict[EntailmentLabel, float] = field(default_factory=dict)

    @property
    def judged(self) -> int:
        return len(self.verdicts)

    @staticmethod
    def build(
        verdicts: Sequence[PhraseVerdict], skipped: int, n: int, complete: bool = True
    ) -> "TurnEntailmentReport":
        counts = {label: 0 for label in EntailmentLabel}
        for item in verdicts:
            counts[item.verdict.label] += 1
        judged = len(verdicts)
        percentages = {
            label: (100.0 * counts[label] / judged if judged else 0.0)
            for label in EntailmentLabel
        }
        return TurnEntailmentReport(
            verdicts=tuple(verdicts),
            skipped=skipped,
            n=n,
            complete=complete,
            counts=counts,
            percentages=percentages,
        )


def turn_premise(transcript: TurnTranscript, index: int) -> str:
    """Premise for phrase ``index``: its chunk first, then all prior phrases."""
    event = transcript.events[index]
    parts = [event.text or ""]
    parts.extend(p.text for p in transcript.phrases[:index])
    return " ".join(parts)


def verify_turn(
    transcript: TurnTranscript, classifier: EntailmentClassifier
) -> TurnEntailmentReport:
    """Judge every chunk-conditioned phrase of a balanced transcript.

    The premise for phrase ``i`` combines chunk ``i`` with phrases
    ``0..i-1`` (chunk first, phrases in order); the hypothesis is phrase
    ``i`` itself.  Silence-conditioned phrases are skipped, not judged.

    Raises:
        ClassifierUnavailable: carries the partial report accumulated so far.
    """
    verdicts: list[PhraseVerdict] = []
    skipped = 0
    for i, event in enumerate(transcript.events):
        if event.kind is not EventKind.CHUNK:
            skipped += 1
            continue
        hypothesis = transcript.phrases[i].text
        try:
            verdict = classify(turn_premise(transcript, i), hypothesis, classifier)
        except ClassifierUnavailable as exc:
            exc.partial_report = TurnEntailmentReport.build(
                verdicts, skipped, len(transcript), complete=False
            )
            raise
        verdicts.append(PhraseVerdict(phrase_seq=i, verdict=verdict))
    return TurnEntailmentReport.build(verdicts, skipped, len(transcript))


# --- dataset-side verification -------------------------------------------------


@dataclass(frozen=True)
class PairDecision:
    index: int
    accepted: bool
    exempt: bool
    verdict: EntailmentVerdict | None


@dataclass(frozen=True)
class DatasetTurnVerdict:
    user: str
    pairs: tuple[PairDecision, ...]
    accepted: bool


def verify_dataset_turn(
    user: str,
    chunks: Sequence[str],
    phrases: Sequence[str],
    classifier: EntailmentClassifier,
) -> DatasetTurnVerdict:
    """Accept or reject each (chunk, phrase) pair of one dataset turn.

    A pair whose chunk is the silence literal is exempt and accepted; any
    other pair must classify as entailment.  The turn is accepted iff every
    pair is.

    Raises:
        AlignmentError: chunk and phrase lists differ in length.
    """
    if len(chunks) != len(phrases):
        raise AlignmentError(
            f"{len(chunks)} chunks vs {len(phrases)} phrases for turn {user!r}"
        )
    decisions: list[PairDecision] = []
    for i, (chunk, phrase) in enumerate(zip(chunks, phrases)):
        if chunk == SILENCE_TOKEN:
            decisions.append(PairDecision(i, accepted=True, exempt=True, verdict=None))
            continue
        verdict = classify(chunk, phrase, classifier)
        decisions.append(
            PairDecision(
                i,
                accepted=verdict.label is EntailmentLabel.ENTAILMENT,
                exempt=False,
                verdict=verdict,
            )
        )
    return DatasetTurnVerdict(
        user=user,
        pairs=tuple(decisions),
        accepted=all(d.accepted for d in decisions),
    )
