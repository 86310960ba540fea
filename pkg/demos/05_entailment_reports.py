"""Judge whether phrases stay grounded in their knowledge chunks.

The lexical oracle is a deterministic stand-in for an MNLI classifier:
content-word overlap with a negation-parity rule.  It catches exact
restatements (entailment), flat mismatches (neutral), and polarity flips
(contradiction); genuinely conversational embellishment lands in neutral,
same as strict NLI models tend to score it.
"""

from turnfill import EventKind, LexicalOracle, append_event, append_phrase, classify
from turnfill.entailment import verify_turn
from turnfill.protocol import close_turn, open_turn

oracle = LexicalOracle()

PAIRS = [
    ("the capital of France is Paris", "Paris is the capital of France"),
    ("it is raining", "it is not raining"),
    ("Everest is tallest", "the lake is deep"),
    (
        "His wins were between 1963 and 1986",
        "a string of amazing wins, from 1963 to 1986, which are impressive",
    ),
]

print("== pairwise verdicts")
for premise, hypothesis in PAIRS:
    verdict = classify(premise, hypothesis, oracle)
    print(f"  {verdict.label.value:<13} overlap={verdict.score:.2f}  "
          f"premise={premise!r}  hypothesis={hypothesis!r}")

print("\n== a whole turn, phrase by phrase")
state = open_turn("Tell me about the scanning appointment.")
append_event(state, EventKind.SILENCE, None, 0.0)
append_phrase(state, "One moment while I check.", 0.15)
append_event(state, EventKind.CHUNK, "The scan takes twenty minutes.", 1.4)
append_phrase(state, "The scan takes twenty minutes.", 1.55)
append_event(state, EventKind.CHUNK, "Results arrive in two days.", 2.2)
append_phrase(state, "Results arrive fast, in two days or so.", 2.35)
transcript = close_turn(state)

report = verify_turn(transcript, oracle)
print(f"judged {report.judged}, skipped {report.skipped} (silence-conditioned)")
for item in report.verdicts:
    phrase = transcript.phrases[item.phrase_seq]
    print(f"  phrase {item.phrase_seq}: {item.verdict.label.value:<13} {phrase.text!r}")
for label, pct in report.percentages.items():
    print(f"  {label.value:<13} {pct:5.1f}%")
