"""Continued-pretraining runner over counterfactual pair files.

Consumes the audit toolkit's pairs.jsonl (one {original, swapped, ...}
object per line; both sides train), prepares batches with the toolkit's
collator (pad to the smallest power of two that fits, select 15% of
non-special tokens, corrupt 80/10/10), and optimizes with AdamW under a
linear learning-rate decay to zero. Defaults follow the recipe the probe
targets: batch 32, base LR 2e-5, 200 epochs.

Cross-entropy is computed on the selected positions (the masked-token
objective); labels come from the pre-corruption clone the collator keeps.
Bias is monitored during training by running the audit's he-she (or chosen)
experiment against the in-process model every ``eval_every`` epochs; the
per-epoch loss and score land in ``curve.csv`` next to the checkpoint.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch.optim import AdamW

from biasaudit import audit_experiment, load_assets
from biasaudit.collate import (
    MaskDecision,
    MaskingPolicy,
    TokenVocab,
    TokenizedSequence,
    TrainSchedule,
    batch_seed,
    lr_at,
    mask_batch,
    pad_length,
)
from biasaudit.templates import Experiment

from .bridge import InProcessScorer
from .models import LoadedModel

logger = logging.getLogger(__name__)

IGNORE_INDEX = -100


@dataclass
class TrainConfig:
    pairs_path: Path | None
    model_path: Path
    out_dir: Path
    epochs: int = 200
    batch_size: int = 32
    base_lr: float = 2e-5
    seed: int = 0
    eval_every: int = 0          # 0 disables the bias monitor
    eval_experiment: Experiment = Experiment.HE_SHE
    assets_path: Path | None = None
    max_steps: int | None = None
    device: str = "cpu"
    # pre-collated batch files (collate output); mutually exclusive with
    # pairs_path, and the corruption is then static across epochs
    batches_dir: Path | None = None


def read_pair_sentences(pairs_path: Path) -> list[str]:
    """Two training sentences per pair, original first, file order kept."""
    sentences: list[str] = []
    with open(pairs_path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            sentences.append(obj["original"])
            sentences.append(obj["swapped"])
    return sentences


def tokenize_corpus(loaded: LoadedModel, sentences: list[str]) -> list[TokenizedSequence]:
    tokenizer = loaded.tokenizer
    limit = getattr(loaded.model.config, "max_position_embeddings", 512)
    seqs = []
    for sentence in sentences:
        ids = tokenizer(loaded.normalize(sentence), truncation=True, max_length=limit)["input_ids"]
        seqs.append(TokenizedSequence(ids=tuple(ids), special_positions={0, len(ids) - 1}))
    return seqs


def collator_vocab(loaded: LoadedModel) -> TokenVocab:
    tokenizer = loaded.tokenizer
    return TokenVocab(
        vocab_size=len(tokenizer),
        pad_id=tokenizer.pad_token_id,
        mask_id=tokenizer.mask_token_id,
        special_ids=frozenset(tokenizer.all_special_ids),
    )


def _loss_on_selected(model, batch, device) -> torch.Tensor:
    input_ids = torch.from_numpy(batch.input_ids.astype(np.int64)).to(device)
    attention = torch.from_numpy(batch.attention.astype(np.int64)).to(device)
    labels = torch.from_numpy(batch.labels.astype(np.int64)).to(device)
    selected = torch.from_numpy((batch.decisions != MaskDecision.KEEP).copy()).to(device)
    labels = torch.where(selected, labels, torch.full_like(labels, IGNORE_INDEX))
    output = model(input_ids=input_ids, attention_mask=attention, labels=labels)
    return output.loss


def evaluate_bias(loaded: LoadedModel, experiment: Experiment, assets) -> float | None:
    """Audit the in-training model; None when the experiment is N/A."""
    loaded.model.eval()
    outcome = audit_experiment(InProcessScorer(loaded), assets, experiment, loaded.name)
    return outcome.report.malor if outcome.ok else None


def _make_epoch_batches(config, seqs, vocab, policy, padded, order_rng, step_offset):
    """Fresh shuffled, freshly corrupted batches for one epoch."""
    order = order_rng.permutation(len(seqs))
    batches = []
    for offset, start in enumerate(range(0, len(seqs), config.batch_size)):
        batch_seqs = [seqs[i] for i in order[start : start + config.batch_size]]
        batches.append(
            mask_batch(
                batch_seqs,
                batch_seed(config.seed, step_offset + offset),
                vocab,
                policy,
                padded_length=padded,
            )
        )
    return batches


def train(config: TrainConfig) -> Path:
    if (config.pairs_path is None) == (config.batches_dir is None):
        raise ValueError("exactly one of pairs_path / batches_dir must be given")
    torch.manual_seed(config.seed)
    loaded = LoadedModel(config.model_path.name, config.model_path, device=config.device)
    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    static_batches = None
    seqs = []
    if config.batches_dir is not None:
        from biasaudit.collate import read_batches

        _, static_batches = read_batches(config.batches_dir)
        n_sentences = sum(b.input_ids.shape[0] for b in static_batches)
        steps_per_epoch = len(static_batches)
    else:
        sentences = read_pair_sentences(config.pairs_path)
        n_sentences = len(sentences)
        seqs = tokenize_corpus(loaded, sentences)
        steps_per_epoch = -(-len(seqs) // config.batch_size) if seqs else 0

    curve_path = out_dir / "curve.csv"
    checkpoint_dir = out_dir / "checkpoint"

    manifest = {
        "command": "train",
        "model": loaded.name,
        "experiment": config.eval_experiment.value,
        "pairs": str(config.pairs_path) if config.pairs_path else None,
        "batches": str(config.batches_dir) if config.batches_dir else None,
        "n_sentences": n_sentences,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "base_lr": config.base_lr,
        "seed": config.seed,
        "eval_every": config.eval_every,
        "max_steps": config.max_steps,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    curve_file = open(curve_path, "w", newline="")
    curve = csv.writer(curve_file)
    curve.writerow(["epoch", "loss", "malor"])

    if config.epochs == 0 or n_sentences == 0:
        # checkpoint identical to the input weights
        loaded.model.save_pretrained(checkpoint_dir)
        loaded.tokenizer.save_pretrained(checkpoint_dir)
        curve_file.close()
        return checkpoint_dir

    assets = load_assets(config.assets_path) if config.eval_every else None
    vocab = collator_vocab(loaded) if seqs else None
    policy = MaskingPolicy()
    padded = pad_length(max(len(s) for s in seqs)) if seqs else None
    schedule = TrainSchedule(
        total_steps=config.epochs * steps_per_epoch,
        epochs=config.epochs,
        base_lr=config.base_lr,
        batch_size=config.batch_size,
    )
    optimizer = AdamW(loaded.model.parameters(), lr=config.base_lr)
    order_rng = np.random.default_rng(config.seed)

    step = 0
    stop = False
    for epoch in range(1, config.epochs + 1):
        loaded.model.train()
        if static_batches is not None:
            epoch_batches = static_batches
        else:
            epoch_batches = _make_epoch_batches(
                config, seqs, vocab, policy, padded, order_rng, step
            )
        epoch_losses = []
        for batch in epoch_batches:
            for group in optimizer.param_groups:
                group["lr"] = lr_at(step, schedule)
            loss = _loss_on_selected(loaded.model, batch, config.device)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_losses.append(float(loss.detach()))
            step += 1
            if config.max_steps is not None and step >= config.max_steps:
                stop = True
                break
        mean_loss = sum(epoch_losses) / len(epoch_losses)
        run_eval = config.eval_every and (
            epoch % config.eval_every == 0 or epoch == config.epochs or stop
        )
        score = evaluate_bias(loaded, config.eval_experiment, assets) if run_eval else None
        curve.writerow([epoch, f"{mean_loss:.6f}", "" if score is None else f"{score:.6f}"])
        curve_file.flush()
        logger.info("epoch %d: loss %.4f%s", epoch, mean_loss,
                    f" malor {score:.4f}" if score is not None else "")
        if stop:
            break

    curve_file.close()
    loaded.model.save_pretrained(checkpoint_dir)
    loaded.tokenizer.save_pretrained(checkpoint_dir)
    return checkpoint_dir
