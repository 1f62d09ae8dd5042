"""Adapt an in-process checkpoint to the audit toolkit's scorer interface.

This is what lets the training runner monitor bias with the same audit code
path the CLI uses, without going over HTTP: the model answers score /
vocab_check through the gateway protocol, batched for throughput.
"""

from __future__ import annotations

from typing import Sequence

from biasaudit.scoring import BatchItem, CandidateProbability, MaskedQuery, ScorerBase, VocabCheck

from .models import LoadedModel


class InProcessScorer(ScorerBase):
    def __init__(self, loaded: LoadedModel, eval_batch_size: int = 64):
        self.loaded = loaded
        self.eval_batch_size = eval_batch_size

    def _results_for(self, probs, candidates) -> list[CandidateProbability]:
        out = []
        for word in candidates:
            entry = self.loaded.candidate_score_entry(word, probs)
            out.append(
                CandidateProbability(
                    candidate=word, probability=entry.probability, compatible=entry.compatible
                )
            )
        return out

    def score(self, query: MaskedQuery) -> list[CandidateProbability]:
        probs = self.loaded.mask_probabilities(query.text)
        return self._results_for(probs, query.candidates)

    def vocab_check(self, word: str) -> VocabCheck:
        pieces = self.loaded.word_pieces(word)
        return VocabCheck(
            word, tuple(pieces), single_token=self.loaded.is_usable_single_token(pieces)
        )

    def score_batch(
        self, queries: Sequence[MaskedQuery], concurrency: int | None = None
    ) -> list[BatchItem]:
        queries = list(queries)
        items: list[BatchItem] = []
        for start in range(0, len(queries), self.eval_batch_size):
            chunk = queries[start : start + self.eval_batch_size]
            probs_list = self.loaded.mask_probabilities_batch([q.text for q in chunk])
            for query, probs in zip(chunk, probs_list):
                items.append(
                    BatchItem(query=query, results=self._results_for(probs, query.candidates))
                )
        return items
