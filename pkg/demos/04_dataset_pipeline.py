"""Run the synthetic dataset pipeline at desk scale.

Template-generate a small corpus across all six domains, validate every
document, explode turns into training examples (one per phrase, each with
the interleaved context rendered up to its target), and gate them through
the lexical entailment filter.  Template output is entailed by
construction, so the reject rate is zero here; LLM-generated corpora are
the ones the filter actually prunes.
"""

from collections import Counter

from turnfill.dataset import (
    DOMAINS,
    corpus_stats,
    default_seed_bank,
    filter_entailed,
    split_turns,
    template_generate,
    validate_document,
)
from turnfill.entailment import LexicalOracle

bank = default_seed_bank()
docs = []
for domain in DOMAINS:
    for i in range(5):
        docs.append(template_generate(domain, bank.for_domain(domain)[i], rng_seed=i))

stats = corpus_stats(docs)
print(f"generated {stats.conversations} conversations, {stats.turns} turns, "
      f"{stats.examples} phrases ({stats.to_dict()['turns_per_conversation']} turns/conv)")

violations = [v for doc in docs for v in validate_document(doc)]
print(f"validation violations: {len(violations)}")

examples = [example for doc in docs for example in split_turns(doc)]
print(f"split into {len(examples)} training examples")

one = examples[3]
print("\nsample example context:")
print(one.rendered_context)
print(f"target -> {one.target_phrase!r}")

kept, rejected = filter_entailed(examples, LexicalOracle())
print(f"\nentailment filter: kept {len(kept)}, rejected {len(rejected)}")

lane = Counter(e.provenance.conversation_id[:4] for e in kept)
print(f"examples spread over {len(lane)} conversations")
