#!/usr/bin/env python3
"""Prepare masked pretraining batches and a linear LR schedule.

Everything is a pure function of (inputs, seed): run this twice and the
batch files come out byte-identical.
"""

import tempfile
from pathlib import Path

import numpy as np

from biasaudit import (
    MaskDecision,
    MaskingPolicy,
    TokenVocab,
    TokenizedSequence,
    TrainSchedule,
    lr_at,
    make_batches,
    pad_length,
    read_batches,
    write_batches,
)

print("=== Padding policy: smallest power of two that fits ===")
for n in (1, 2, 37, 64, 65, 130):
    print(f"  longest sentence {n:>3} tokens -> padded length {pad_length(n)}")
print()

# synthetic "tokenized" corpus: start marker 1, end marker 2, body ids >= 5
rng = np.random.default_rng(12)
seqs = []
for _ in range(96):
    body = rng.integers(5, 500, size=rng.integers(8, 38)).tolist()
    ids = [1, *body, 2]
    seqs.append(TokenizedSequence(ids=ids, special_positions={0, len(ids) - 1}))

vocab = TokenVocab(vocab_size=500, pad_id=0, mask_id=4, special_ids=frozenset({1, 2, 3}))
policy = MaskingPolicy()  # select 15%, then 80% mask / 10% random / 10% keep

batches = make_batches(seqs, seed=7, vocab=vocab, policy=policy, batch_size=32)
print(f"=== {len(batches)} batches of 32, padded to {batches[0].input_ids.shape[1]} ===")

batch = batches[0]
eligible = batch.attention.sum() - 2 * batch.input_ids.shape[0]  # minus the two markers
selected = (batch.decisions != MaskDecision.KEEP).sum()
print(f"batch 0: {selected} of {eligible} eligible tokens selected "
      f"({selected / eligible:.3f}; policy asks for {policy.select})")
for decision in (MaskDecision.MASKED, MaskDecision.RANDOM, MaskDecision.UNCHANGED):
    count = (batch.decisions == decision).sum()
    print(f"  {decision.name:<10} {count:>4}  ({count / selected:.3f} of selected)")
print("labels always keep the pre-corruption ids; corrupted cells differ:")
differs = (batch.input_ids != batch.labels).sum()
print(f"  {differs} corrupted positions in batch 0\n")

print("=== Round-trip through the batch-file format ===")
with tempfile.TemporaryDirectory() as tmp:
    manifest_path = write_batches(Path(tmp), batches, seed=7, vocab=vocab, policy=policy)
    manifest, loaded = read_batches(Path(tmp))
    same = all(
        np.array_equal(a.input_ids, b.input_ids) and np.array_equal(a.decisions, b.decisions)
        for a, b in zip(batches, loaded)
    )
    print(f"wrote {len(manifest['batches'])} batch files + {manifest_path.name}; "
          f"round-trip identical: {same}\n")

print("=== Linear LR decay over the full run ===")
schedule = TrainSchedule.for_dataset(n_sequences=len(seqs), epochs=200, batch_size=32)
print(f"epochs={schedule.epochs}  base_lr={schedule.base_lr}  total_steps={schedule.total_steps}")
for fraction in (0.0, 0.25, 0.5, 0.75, 1.0):
    step = int(fraction * schedule.total_steps)
    print(f"  step {step:>4} ({fraction:>4.0%}) -> lr {lr_at(step, schedule):.2e}")
