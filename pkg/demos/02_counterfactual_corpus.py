#!/usr/bin/env python3
"""Build a gender-balanced counterfactual corpus from raw sentences.

Shows the eligibility filter (gendered term AND occupation word), the
involutive swap, the per-name replication for the names experiment, and the
balance accounting.
"""

from biasaudit import (
    Experiment,
    SwapLexicon,
    build_names_dataset,
    build_pronoun_dataset,
    dataset_stats,
    filter_sentences,
    load_assets,
    swap_gendered_terms,
)

assets = load_assets()
lexicon = SwapLexicon.default(assets.name_pairs)

corpus = [
    "So the president's position is clear and she will not back down.",
    "The manager was taken aback by her directness.",
    "the guy programmed at his computer",
    "He dreams of being a good engineer at the firm.",
    "The sky is blue.",                      # no gendered term, no occupation
    "She is taking a walk in the park.",     # gendered term, no occupation
    "The nurse thanked her for the visit.",
]

print("=== The swap is a word-level involution ===")
for s in corpus[:3]:
    swapped = swap_gendered_terms(s, lexicon)
    back = swap_gendered_terms(swapped, lexicon)
    print(f"  {s}\n    -> {swapped}\n    -> {back}  (round-trip: {back == s})")
print()

print("=== Eligibility filter per experiment ===")
for experiment in (Experiment.HE_SHE, Experiment.HIS_HER):
    kept = filter_sentences(corpus, experiment, assets.occupation_words(), assets.name_pairs)
    print(f"{experiment.value}: kept {len(kept)} of {len(corpus)}")
    for s in kept:
        print(f"  - {s}")
print()

print("=== Pronoun dataset: original + counterfactual pairs ===")
kept = filter_sentences(corpus, Experiment.HE_SHE, assets.occupation_words())
dataset = build_pronoun_dataset(kept, Experiment.HE_SHE, lexicon, assets.occupation_words())
stats = dataset_stats(dataset, lexicon)
print(f"pairs={stats.n_pairs}  sentences={stats.n_sentences}  "
      f"male-female token balance={stats.male_female_token_balance}")
print(f"occupation coverage: {stats.per_occupation_counts}\n")

print("=== Names dataset: one seed fans out to all 29 pairs ===")
seed = "He pointed to his treasury secretary, Timothy Geithner, and told me about the plan."
names_dataset = build_names_dataset([seed], assets.name_pairs, assets.occupation_words(), lexicon)
print(f"1 seed -> {len(names_dataset.pairs)} pairs ({names_dataset.n_sentences} sentences)")
for pair in names_dataset.pairs[:2]:
    print(f"  original: {pair.original}")
    print(f"  swapped:  {pair.swapped}")
balance = dataset_stats(names_dataset, lexicon).male_female_token_balance
print(f"balance over the whole names dataset: {balance}")
