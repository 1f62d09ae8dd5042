"""Checkpoint loading and mask-fill scoring for real masked-LM models.

Models live as Hugging Face checkpoint directories under a model root
(``SCORER_MODEL_DIR``); a request's ``model`` field names a subdirectory.
One model stays resident per process by default (``SCORER_MAX_MODELS``).

Scoring conventions, which determine which candidates count as compatible:

* The request text carries the literal ``[MASK]`` sentinel exactly once; it
  is mapped to the model's native mask token before encoding.
* For uncased checkpoints, text and candidates are lowercased server-side
  and the response is flagged ``normalized`` (the probe set capitalizes
  names, uncased vocabularies do not).
* Candidates are tokenized with a leading space, i.e. in sentence-medial
  position. Wordpiece tokenizers ignore the space; byte-pair and
  sentencepiece vocabularies get their space-prefixed piece, which is what
  makes several occupation words multi-token for those models.
* A candidate is compatible iff it maps to exactly one piece and that piece
  is not the unknown token: an unknown word collapses to one UNK piece, but
  its probability would be the UNK mass, not the word's.

Inference runs under ``torch.no_grad`` with dropout disabled, so repeated
identical requests return identical probabilities.
"""

from __future__ import annotations

import logging
import os
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn.functional as F
from transformers import AutoModelForMaskedLM, AutoTokenizer

logger = logging.getLogger(__name__)

MASK_SENTINEL = "[MASK]"
DEFAULT_MAX_MODELS = 1


class ModelNotFound(Exception):
    """No checkpoint directory with the requested name."""


class ModelLoadFailure(Exception):
    """The checkpoint directory exists but could not be loaded."""


class BadQuery(Exception):
    """Request violates the one-sentinel / non-empty-candidates contract."""


@dataclass
class CandidateScore:
    candidate: str
    probability: float | None
    compatible: bool
    token_id: int | None
    pieces: list[str]


class LoadedModel:
    """One checkpoint plus its tokenizer, ready to answer mask queries."""

    def __init__(self, name: str, model_path: Path, device: str = "cpu"):
        self.name = name
        self.device = device
        self.tokenizer = AutoTokenizer.from_pretrained(model_path)
        self.model = AutoModelForMaskedLM.from_pretrained(model_path)
        self.model.to(device)
        self.model.eval()
        self.do_lower_case = bool(getattr(self.tokenizer, "do_lower_case", False))

    @property
    def mask_token(self) -> str:
        return self.tokenizer.mask_token

    def normalize(self, text: str) -> str:
        return text.lower() if self.do_lower_case else text

    def word_pieces(self, word: str) -> list[str]:
        """Sentence-medial pieces: tokenize with a leading space."""
        return self.tokenizer.tokenize(" " + self.normalize(word))

    def is_usable_single_token(self, pieces: list[str]) -> bool:
        """One piece, and not the unknown token (UNK mass is not the word's)."""
        unk = self.tokenizer.unk_token
        return len(pieces) == 1 and (unk is None or pieces[0] != unk)

    def candidate_score_entry(self, word: str, probs: torch.Tensor) -> CandidateScore:
        pieces = self.word_pieces(word)
        if not self.is_usable_single_token(pieces):
            return CandidateScore(word, None, False, None, pieces)
        token_id = self.tokenizer.convert_tokens_to_ids(pieces[0])
        return CandidateScore(word, float(probs[token_id]), True, token_id, pieces)

    def mask_probabilities(self, text: str) -> torch.Tensor:
        """Full-vocabulary softmax at the (single) mask position."""
        if text.count(MASK_SENTINEL) != 1:
            raise BadQuery(f"text must contain exactly one {MASK_SENTINEL}")
        model_text = self.normalize(text).replace(
            self.normalize(MASK_SENTINEL), self.mask_token
        )
        encoded = self.tokenizer(model_text, return_tensors="pt").to(self.device)
        mask_positions = (encoded["input_ids"][0] == self.tokenizer.mask_token_id).nonzero()
        if len(mask_positions) != 1:
            raise BadQuery("mask token did not survive tokenization exactly once")
        with torch.no_grad():
            logits = self.model(**encoded).logits
        return F.softmax(logits[0, mask_positions[0].item()], dim=-1)

    def score(self, text: str, candidates: list[str]) -> dict:
        if not candidates:
            raise BadQuery("at least one candidate required")
        if len(set(candidates)) != len(candidates):
            raise BadQuery("candidates must be distinct")
        probs = self.mask_probabilities(text)
        results = [self.candidate_score_entry(word, probs) for word in candidates]
        return {
            "model": self.name,
            "model_mask_token": self.mask_token,
            "normalized": self.do_lower_case,
            "results": [
                {
                    "candidate": r.candidate,
                    "probability": r.probability,
                    "compatible": r.compatible,
                    "token_id": r.token_id,
                }
                for r in results
            ],
        }

    def mask_probabilities_batch(self, texts: list[str]) -> list[torch.Tensor]:
        """Batched variant used by the training monitor; same convention."""
        model_texts = []
        for text in texts:
            if text.count(MASK_SENTINEL) != 1:
                raise BadQuery(f"text must contain exactly one {MASK_SENTINEL}")
            model_texts.append(
                self.normalize(text).replace(self.normalize(MASK_SENTINEL), self.mask_token)
            )
        encoded = self.tokenizer(model_texts, return_tensors="pt", padding=True).to(self.device)
        mask_matrix = encoded["input_ids"] == self.tokenizer.mask_token_id
        with torch.no_grad():
            logits = self.model(**encoded).logits
        out = []
        for row in range(len(texts)):
            positions = mask_matrix[row].nonzero()
            if len(positions) != 1:
                raise BadQuery("mask token did not survive tokenization exactly once")
            out.append(F.softmax(logits[row, positions[0].item()], dim=-1))
        return out


class ModelRegistry:
    """Loads checkpoints by name from a root directory, keeping an LRU."""

    def __init__(self, model_dir: Path | str | None = None, max_models: int | None = None,
                 device: str = "cpu"):
        root = model_dir or os.environ.get("SCORER_MODEL_DIR")
        if not root:
            raise ModelLoadFailure("no model directory configured (SCORER_MODEL_DIR)")
        self.root = Path(root)
        self.device = device
        self.max_models = max_models or int(
            os.environ.get("SCORER_MAX_MODELS", DEFAULT_MAX_MODELS)
        )
        self._loaded: OrderedDict[str, LoadedModel] = OrderedDict()

    def loaded_names(self) -> list[str]:
        return list(self._loaded)

    def get(self, name: str) -> LoadedModel:
        if name in self._loaded:
            self._loaded.move_to_end(name)
            return self._loaded[name]
        path = self.root / name
        if not path.is_dir():
            raise ModelNotFound(f"unknown model {name!r} (no directory under {self.root})")
        try:
            loaded = LoadedModel(name, path, device=self.device)
        except Exception as exc:  # transformers raises a zoo of types here
            raise ModelLoadFailure(f"failed to load {name!r}: {exc}") from exc
        self._loaded[name] = loaded
        while len(self._loaded) > self.max_models:
            evicted, _ = self._loaded.popitem(last=False)
            logger.info("evicted model %s", evicted)
        return loaded
