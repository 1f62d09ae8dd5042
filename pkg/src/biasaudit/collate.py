"""Continued-pretraining input preparation as pure functions.

Covers the padding policy (smallest power of two that fits the longest
sequence), the mask/replace/keep corruption (select 15% of eligible tokens
i.i.d., then 80% mask / 10% random word / 10% unchanged), and the linear
learning-rate decay. The actual optimizer loop lives in the service package;
everything here is deterministic given (inputs, seed).

Randomness comes from numpy's PCG64 generator seeded per batch with
``SeedSequence([seed, batch_index])``, so batches can be prepared in
parallel and still reproduce bit-identically across platforms. For one
batch, draws happen in a fixed order: selection uniforms, corruption-fate
uniforms, then random replacement indices, each of shape [B, L].

Batch files are a manifest JSON plus row-major int32 matrices (input ids,
labels, attention, decisions) concatenated per batch in one ``.bin`` file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, EmptyBatch, StepOutOfRange

DEFAULT_BATCH_SIZE = 32


def pad_length(max_sentence_len: int) -> int:
    """Smallest power of two >= the longest sequence length (>= 1)."""
    if max_sentence_len < 1:
        raise ConfigError(f"max_sentence_len must be >= 1, got {max_sentence_len}")
    return 1 << (max_sentence_len - 1).bit_length()


@dataclass(frozen=True)
class TokenizedSequence:
    """Token ids with the positions of start/end markers flagged."""

    ids: tuple[int, ...]
    special_positions: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        object.__setattr__(self, "special_positions", frozenset(self.special_positions))
        bad = [p for p in self.special_positions if not 0 <= p < len(self.ids)]
        if bad:
            raise ConfigError(f"special positions out of bounds: {sorted(bad)}")

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class MaskingPolicy:
    """Selection fraction plus the corruption split over selected tokens."""

    select: float = 0.15
    mask: float = 0.8
    random: float = 0.1
    keep: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.select <= 1.0:
            raise ConfigError(f"select fraction must be in [0, 1], got {self.select}")
        total = self.mask + self.random + self.keep
        if abs(total - 1.0) > 1e-9 or min(self.mask, self.random, self.keep) < 0:
            raise ConfigError(f"mask/random/keep must be >= 0 and sum to 1, got {total}")

    def to_json_dict(self) -> dict:
        return {"select": self.select, "mask": self.mask, "random": self.random, "keep": self.keep}


@dataclass(frozen=True)
class TokenVocab:
    """What the collator needs to know about the tokenizer's id space."""

    vocab_size: int
    pad_id: int
    mask_id: int
    special_ids: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(
            self, "special_ids", frozenset(self.special_ids) | {self.pad_id, self.mask_id}
        )
        if self.vocab_size <= len(self.special_ids):
            raise ConfigError("vocab_size must exceed the number of special tokens")
        bad = [i for i in self.special_ids if not 0 <= i < self.vocab_size]
        if bad:
            raise ConfigError(f"special ids outside the vocabulary: {sorted(bad)}")

    def non_special_ids(self) -> np.ndarray:
        ids = np.setdiff1d(np.arange(self.vocab_size, dtype=np.int32),
                           np.fromiter(self.special_ids, dtype=np.int32))
        return ids

    def to_json_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "pad_id": self.pad_id,
            "mask_id": self.mask_id,
            "special_ids": sorted(self.special_ids),
        }


class MaskDecision(IntEnum):
    KEEP = 0              # not selected
    MASKED = 1            # selected, replaced by the mask token
    RANDOM = 2            # selected, replaced by a random non-special token
    UNCHANGED = 3         # selected, deliberately left as-is


@dataclass
class MaskedBatch:
    """Corrupted inputs plus everything needed to train or audit on them.

    ``labels`` is the pre-corruption clone of the inputs (padding included);
    ``decisions`` records what happened at each position.
    """

    input_ids: np.ndarray    # int32 [B, L]
    labels: np.ndarray       # int32 [B, L]
    attention: np.ndarray    # bool  [B, L]
    decisions: np.ndarray    # int8  [B, L], MaskDecision values

    @property
    def selected(self) -> np.ndarray:
        return self.decisions != MaskDecision.KEEP


def mask_batch(
    seqs: Sequence[TokenizedSequence],
    rng_seed: int | np.random.SeedSequence,
    vocab: TokenVocab,
    policy: MaskingPolicy = MaskingPolicy(),
    padded_length: int | None = None,
) -> MaskedBatch:
    """Pad, select, and corrupt one batch of sequences.

    Selection is i.i.d. Bernoulli(policy.select) per non-special, non-pad
    token; per-sequence selected counts therefore vary. Sequences longer
    than ``padded_length`` are truncated to it.
    """
    if not seqs:
        raise EmptyBatch("mask_batch needs at least one sequence")
    length = padded_length or pad_length(max(len(s) for s in seqs))
    batch = len(seqs)

    input_ids = np.full((batch, length), vocab.pad_id, dtype=np.int32)
    attention = np.zeros((batch, length), dtype=bool)
    eligible = np.zeros((batch, length), dtype=bool)
    for i, seq in enumerate(seqs):
        ids = seq.ids[:length]
        input_ids[i, : len(ids)] = ids
        attention[i, : len(ids)] = True
        eligible[i, : len(ids)] = True
        for pos in seq.special_positions:
            if pos < length:
                eligible[i, pos] = False

    labels = input_ids.copy()

    seed_seq = (
        rng_seed
        if isinstance(rng_seed, np.random.SeedSequence)
        else np.random.SeedSequence([int(rng_seed)])
    )
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    select_u = rng.random((batch, length))
    fate_u = rng.random((batch, length))
    non_special = vocab.non_special_ids()
    random_pick = rng.integers(0, len(non_special), size=(batch, length))

    selected = eligible & (select_u < policy.select)
    masked = selected & (fate_u < policy.mask)
    randomed = selected & ~masked & (fate_u < policy.mask + policy.random)
    unchanged = selected & ~masked & ~randomed

    decisions = np.full((batch, length), MaskDecision.KEEP, dtype=np.int8)
    decisions[masked] = MaskDecision.MASKED
    decisions[randomed] = MaskDecision.RANDOM
    decisions[unchanged] = MaskDecision.UNCHANGED

    input_ids[masked] = vocab.mask_id
    input_ids[randomed] = non_special[random_pick[randomed]]

    return MaskedBatch(input_ids=input_ids, labels=labels, attention=attention, decisions=decisions)


def batch_seed(seed: int, batch_index: int) -> np.random.SeedSequence:
    """Derived per-batch seed so parallel preparation stays deterministic."""
    return np.random.SeedSequence([int(seed), int(batch_index)])


def make_batches(
    seqs: Sequence[TokenizedSequence],
    seed: int,
    vocab: TokenVocab,
    policy: MaskingPolicy = MaskingPolicy(),
    batch_size: int = DEFAULT_BATCH_SIZE,
    padded_length: int | None = None,
) -> list[MaskedBatch]:
    """Slice into batches of ``batch_size`` and corrupt each independently.

    The padded length is computed over the whole dataset (not per batch) so
    every batch shares one shape, matching the fixed-length padding recipe.
    """
    if not seqs:
        raise EmptyBatch("make_batches needs at least one sequence")
    length = padded_length or pad_length(max(len(s) for s in seqs))
    return [
        mask_batch(
            seqs[start : start + batch_size],
            batch_seed(seed, index),
            vocab,
            policy,
            padded_length=length,
        )
        for index, start in enumerate(range(0, len(seqs), batch_size))
    ]


@dataclass(frozen=True)
class TrainSchedule:
    """Continued-pretraining hyperparameters with linear LR decay to zero."""

    total_steps: int
    epochs: int = 200
    base_lr: float = 2e-5
    batch_size: int = DEFAULT_BATCH_SIZE

    def __post_init__(self):
        for name in ("total_steps", "epochs", "batch_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be positive")

    @classmethod
    def for_dataset(
        cls,
        n_sequences: int,
        epochs: int = 200,
        base_lr: float = 2e-5,
        batch_size: int = DEFAULT_BATCH_SIZE,
    ) -> "TrainSchedule":
        steps_per_epoch = -(-n_sequences // batch_size)
        return cls(
            total_steps=epochs * steps_per_epoch,
            epochs=epochs,
            base_lr=base_lr,
            batch_size=batch_size,
        )


def lr_at(step: int, schedule: TrainSchedule) -> float:
    """Learning rate after ``step`` optimizer steps: linear from base_lr to 0."""
    if not 0 <= step <= schedule.total_steps:
        raise StepOutOfRange(f"step {step} outside [0, {schedule.total_steps}]")
    return schedule.base_lr * (1.0 - step / schedule.total_steps)


# -- batch files: manifest JSON + row-major int32 matrices --------------------

_ARRAYS = ("input_ids", "labels", "attention", "decisions")


def write_batches(
    out_dir: Path | str,
    batches: Sequence[MaskedBatch],
    seed: int,
    vocab: TokenVocab,
    policy: MaskingPolicy,
    extra_manifest: dict | None = None,
) -> Path:
    """Serialize batches for the training runner; byte-stable given inputs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for index, batch in enumerate(batches):
        name = f"batch_{index:05d}.bin"
        blob = b"".join(
            np.ascontiguousarray(getattr(batch, arr), dtype=np.int32).tobytes()
            for arr in _ARRAYS
        )
        (out_dir / name).write_bytes(blob)
        entries.append({"file": name, "rows": int(batch.input_ids.shape[0])})
    manifest = {
        "format": "biasaudit-batches-v1",
        "dtype": "int32",
        "layout": "row-major",
        "arrays_per_batch": list(_ARRAYS),
        "padded_length": int(batches[0].input_ids.shape[1]) if batches else 0,
        "seed": seed,
        "policy": policy.to_json_dict(),
        "vocab": vocab.to_json_dict(),
        "batches": entries,
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def read_batches(in_dir: Path | str) -> tuple[dict, list[MaskedBatch]]:
    """Load a batch directory written by write_batches."""
    in_dir = Path(in_dir)
    manifest = json.loads((in_dir / "manifest.json").read_text())
    if manifest.get("format") != "biasaudit-batches-v1":
        raise ConfigError(f"not a batch directory: {in_dir}")
    length = manifest["padded_length"]
    batches = []
    for entry in manifest["batches"]:
        raw = np.frombuffer((in_dir / entry["file"]).read_bytes(), dtype=np.int32)
        rows = entry["rows"]
        arrays = raw.reshape(len(_ARRAYS), rows, length)
        batches.append(
            MaskedBatch(
                input_ids=arrays[0].copy(),
                labels=arrays[1].copy(),
                attention=arrays[2].astype(bool),
                decisions=arrays[3].astype(np.int8),
            )
        )
    return manifest, batches


def load_sequences_jsonl(path: Path | str) -> list[TokenizedSequence]:
    """Read pre-tokenized sequences: one {"ids": [...], "special_positions": [...]} per line."""
    seqs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "ids" not in obj:
                raise ConfigError(f"{path}:{lineno}: missing 'ids'")
            seqs.append(
                TokenizedSequence(
                    ids=tuple(obj["ids"]),
                    special_positions=frozenset(obj.get("special_positions", ())),
                )
            )
    return seqs
