"""Scorer gateway: one interface over mock, fixture, and remote backends.

A scorer answers two questions about a masked sentence: the model's
full-vocabulary softmax mass on each candidate filler (``score``), and
whether a word maps to a single vocabulary id (``vocab_check``).
Probabilities are raw softmax slices at the mask position and are never
renormalized over the candidate set; renormalized shares exist only in the
analysis layer.

Backends:

* MockScorer     deterministic synthetic probabilities, bit-reproducible
                 across runs and platforms (sha256-derived noise, no RNG
                 state); configurable per-occupation and per-candidate bias.
* FixtureScorer  replays recorded responses; any unrecorded query raises
                 FixtureMiss rather than fabricating a value.
* RemoteScorer   talks to the HTTP scoring service with bounded concurrency
                 and per-query retries.

A multi-token candidate is not an error at this layer: it comes back with
``compatible=False`` and no probability. Downstream metrics decide whether
that excludes the word or invalidates the experiment.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import httpx

from .errors import BackendError, BackendUnreachable, ConfigError, DataError, FixtureMiss

DEFAULT_CONCURRENCY = 8
_MASK = "[MASK]"


@dataclass(frozen=True)
class MaskedQuery:
    """One sentence with a single mask and the candidates to score there."""

    text: str
    candidates: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if self.text.count(_MASK) != 1:
            raise DataError(f"query text must contain exactly one {_MASK}: {self.text!r}")
        if not self.candidates:
            raise DataError("query needs at least one candidate")
        if len(set(self.candidates)) != len(self.candidates):
            raise DataError(f"candidates must be distinct: {self.candidates}")


@dataclass(frozen=True)
class CandidateProbability:
    candidate: str
    probability: float | None
    compatible: bool

    def __post_init__(self):
        if self.compatible and self.probability is None:
            raise DataError(f"compatible candidate {self.candidate!r} lacks a probability")
        if not self.compatible and self.probability is not None:
            raise DataError(f"incompatible candidate {self.candidate!r} must carry no probability")


@dataclass(frozen=True)
class VocabCheck:
    word: str
    pieces: tuple[str, ...]
    # backends may override when piece count is not the whole story, e.g. an
    # unknown word collapsing to a single UNK piece is not scoreable
    single_token: bool | None = None

    @property
    def is_single_token(self) -> bool:
        if self.single_token is not None:
            return self.single_token
        return len(self.pieces) == 1


@dataclass
class BatchItem:
    """Per-query outcome of score_batch; either results or an error message."""

    query: MaskedQuery
    results: list[CandidateProbability] | None
    error: str | None = None
    retries: int = 0

    @property
    def ok(self) -> bool:
        return self.results is not None


def fixture_key(text: str, candidates: Sequence[str]) -> str:
    """Stable key over the exact query text + candidate list.

    Hashing the verbatim text means any template edit invalidates fixtures
    loudly instead of replaying stale probabilities.
    """
    payload = json.dumps({"text": text, "candidates": list(candidates)}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ScorerBase:
    """Shared batch plumbing; subclasses implement score and vocab_check."""

    max_retries: int = 0

    def score(self, query: MaskedQuery) -> list[CandidateProbability]:
        raise NotImplementedError

    def vocab_check(self, word: str) -> VocabCheck:
        raise NotImplementedError

    def score_batch(
        self, queries: Sequence[MaskedQuery], concurrency: int | None = None
    ) -> list[BatchItem]:
        """Score many queries; externally order-preserving regardless of the
        internal completion order. Failures are reported per item."""

        def run_one(query: MaskedQuery) -> BatchItem:
            attempts = 0
            while True:
                try:
                    return BatchItem(query=query, results=self.score(query), retries=attempts)
                except BackendUnreachable as exc:
                    if attempts >= self.max_retries:
                        return BatchItem(query=query, results=None, error=str(exc), retries=attempts)
                    attempts += 1
                    time.sleep(0.05 * attempts)
                except FixtureMiss as exc:
                    return BatchItem(query=query, results=None, error=str(exc), retries=attempts)

        queries = list(queries)
        if concurrency is not None and concurrency > 1 and len(queries) > 1:
            with ThreadPoolExecutor(max_workers=concurrency) as pool:
                return list(pool.map(run_one, queries))
        return [run_one(q) for q in queries]


def _stable_unit(*parts: object) -> float:
    """Deterministic uniform in [0, 1) from a sha256 of the parts."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


_word_re = re.compile(r"[A-Za-z]+")


@dataclass
class MockScorer(ScorerBase):
    """Deterministic synthetic scorer for tests and dry runs.

    Candidate probability is ``base_probability * 2**(w + noise)`` where
    ``w`` sums a global per-candidate weight and a per-(context word,
    candidate) weight for any configured word found in the query text, and
    ``noise`` is a seed-keyed uniform in [-noise_scale, +noise_scale] derived
    from (seed, text, candidate). Context weights keyed by occupation words
    bias the gendered-term direction; keyed by pronouns they bias the
    reversed (occupation-prediction) direction. With all weights and noise
    at zero every candidate scores exactly ``base_probability``, so the
    uniform mock yields a log-ratio of exactly 0.
    """

    seed: int = 0
    base_probability: float = 0.5
    candidate_weights: Mapping[str, float] = field(default_factory=dict)
    context_weights: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    noise_scale: float = 0.0
    multi_token_words: frozenset[str] = frozenset()
    pieces_overrides: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.base_probability < 1.0:
            raise ConfigError("base_probability must lie in (0, 1)")
        self.multi_token_words = frozenset(w.lower() for w in self.multi_token_words)

    @classmethod
    def from_config(cls, config: Mapping, seed: int = 0) -> "MockScorer":
        known = {
            "base_probability", "candidate_weights", "context_weights",
            "noise_scale", "multi_token_words",
        }
        unknown = set(config) - known
        if unknown:
            raise ConfigError(f"unknown mock scorer options: {sorted(unknown)}")
        kwargs = dict(config)
        if "multi_token_words" in kwargs:
            kwargs["multi_token_words"] = frozenset(kwargs["multi_token_words"])
        return cls(seed=seed, **kwargs)

    def _weight(self, text: str, candidate: str) -> float:
        w = float(self.candidate_weights.get(candidate, 0.0))
        if self.context_weights:
            words = {m.group(0).lower() for m in _word_re.finditer(text)}
            for occ, per_candidate in self.context_weights.items():
                if occ.lower() in words:
                    w += float(per_candidate.get(candidate, 0.0))
        return w

    def score(self, query: MaskedQuery) -> list[CandidateProbability]:
        out = []
        for candidate in query.candidates:
            if candidate.lower() in self.multi_token_words:
                out.append(CandidateProbability(candidate, None, compatible=False))
                continue
            w = self._weight(query.text, candidate)
            if self.noise_scale:
                w += self.noise_scale * (2.0 * _stable_unit(self.seed, query.text, candidate) - 1.0)
            p = self.base_probability * 2.0**w
            p = min(max(p, 1e-9), 1.0 - 1e-9)
            out.append(CandidateProbability(candidate, p, compatible=True))
        return out

    def vocab_check(self, word: str) -> VocabCheck:
        if word in self.pieces_overrides:
            return VocabCheck(word, tuple(self.pieces_overrides[word]))
        if word.lower() in self.multi_token_words:
            half = max(1, len(word) // 2)
            return VocabCheck(word, (word[:half], "##" + word[half:]))
        return VocabCheck(word, (word,))


FIXTURE_VERSION = 1


class FixtureScorer(ScorerBase):
    """Replays recorded scores; misses are loud (FixtureMiss), never invented."""

    def __init__(self, path: Path | str, model_name: str | None = None):
        self.path = Path(path)
        try:
            raw = json.loads(self.path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise BackendUnreachable(f"fixture file not found: {self.path}")
        except json.JSONDecodeError as exc:
            raise BackendUnreachable(f"fixture file {self.path} is not valid JSON: {exc}")
        if raw.get("version") != FIXTURE_VERSION:
            raise ConfigError(f"unsupported fixture version {raw.get('version')!r} in {self.path}")
        self.model_name = model_name or raw.get("model_name", "fixture")
        self._queries: dict = raw.get("queries", {})
        self._vocab: dict = raw.get("vocab", {})

    def score(self, query: MaskedQuery) -> list[CandidateProbability]:
        key = fixture_key(query.text, query.candidates)
        entry = self._queries.get(key)
        if entry is None:
            raise FixtureMiss(
                f"no recording for query {query.text!r} with candidates {list(query.candidates)}"
            )
        return [
            CandidateProbability(
                candidate=r["candidate"],
                probability=r.get("probability"),
                compatible=bool(r["compatible"]),
            )
            for r in entry["results"]
        ]

    def vocab_check(self, word: str) -> VocabCheck:
        pieces = self._vocab.get(word)
        if pieces is None:
            raise FixtureMiss(f"no recorded vocab check for {word!r}")
        return VocabCheck(word, tuple(pieces))


class FixtureRecorder(ScorerBase):
    """Wraps another scorer and records everything it answers.

    ``save`` writes a deterministic (sorted-keys) fixture file that
    FixtureScorer can replay bit-identically.
    """

    def __init__(self, inner: ScorerBase, model_name: str = "recorded"):
        self.inner = inner
        self.model_name = model_name
        self._queries: dict = {}
        self._vocab: dict = {}

    def score(self, query: MaskedQuery) -> list[CandidateProbability]:
        results = self.inner.score(query)
        self._queries[fixture_key(query.text, query.candidates)] = {
            "text": query.text,
            "candidates": list(query.candidates),
            "results": [
                {"candidate": r.candidate, "probability": r.probability, "compatible": r.compatible}
                for r in results
            ],
        }
        return results

    def vocab_check(self, word: str) -> VocabCheck:
        check = self.inner.vocab_check(word)
        self._vocab[word] = list(check.pieces)
        return check

    def save(self, path: Path | str) -> Path:
        path = Path(path)
        payload = {
            "version": FIXTURE_VERSION,
            "model_name": self.model_name,
            "queries": self._queries,
            "vocab": self._vocab,
        }
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


class RemoteScorer(ScorerBase):
    """HTTP client for the scoring service (see the service package).

    Wire format: POST {base_url}/v1/score with {model, text, candidates},
    GET {base_url}/v1/tokenize?model=&word=. Connection failures and 5xx
    responses surface as BackendUnreachable (retried in score_batch).
    """

    max_retries = 2

    def __init__(
        self,
        base_url: str,
        model_name: str,
        timeout: float = 60.0,
        concurrency: int = DEFAULT_CONCURRENCY,
    ):
        if not base_url:
            raise ConfigError("remote scorer needs a base URL (flag --url or BIASAUDIT_SCORER_URL)")
        self.base_url = base_url.rstrip("/")
        self.model_name = model_name
        self.concurrency = concurrency
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout)

    def _request(self, method: str, url: str, **kwargs) -> httpx.Response:
        try:
            response = self._client.request(method, url, **kwargs)
        except httpx.HTTPError as exc:
            raise BackendUnreachable(f"{self.base_url}{url}: {exc}")
        if response.status_code >= 500:
            raise BackendUnreachable(f"{self.base_url}{url}: HTTP {response.status_code}")
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail", "")
            except Exception:
                detail = response.text[:200]
            raise BackendError(f"{self.base_url}{url}: HTTP {response.status_code} {detail}".strip())
        return response

    def score(self, query: MaskedQuery) -> list[CandidateProbability]:
        response = self._request(
            "POST",
            "/v1/score",
            json={"model": self.model_name, "text": query.text, "candidates": list(query.candidates)},
        )
        body = response.json()
        return [
            CandidateProbability(
                candidate=r["candidate"],
                probability=r.get("probability"),
                compatible=bool(r["compatible"]),
            )
            for r in body["results"]
        ]

    def vocab_check(self, word: str) -> VocabCheck:
        response = self._request(
            "GET", "/v1/tokenize", params={"model": self.model_name, "word": word}
        )
        body = response.json()
        return VocabCheck(word, tuple(body["pieces"]), single_token=body.get("single_token"))

    def score_batch(
        self, queries: Sequence[MaskedQuery], concurrency: int | None = None
    ) -> list[BatchItem]:
        return super().score_batch(queries, concurrency=concurrency or self.concurrency)


@dataclass(frozen=True)
class ScorerDescriptor:
    """Backend selection plus the one backend's config; validated on build."""

    backend: str  # mock | fixture | remote
    model_name: str = "mock"
    seed: int = 0
    fixture_path: str | None = None
    endpoint: str | None = None
    concurrency: int = DEFAULT_CONCURRENCY
    mock_config_path: str | None = None

    def validate(self) -> None:
        if self.backend not in ("mock", "fixture", "remote"):
            raise ConfigError(f"unknown scorer backend {self.backend!r}")
        if self.backend == "fixture" and not self.fixture_path:
            raise ConfigError("fixture backend needs --fixture PATH")
        if self.backend == "remote" and not self.endpoint:
            raise ConfigError("remote backend needs --url or BIASAUDIT_SCORER_URL")
        if self.backend != "fixture" and self.fixture_path:
            raise ConfigError("--fixture only applies to the fixture backend")
        if self.backend != "remote" and self.endpoint:
            raise ConfigError("--url only applies to the remote backend")
        if self.backend != "mock" and self.mock_config_path:
            raise ConfigError("--mock-config only applies to the mock backend")

    def to_manifest(self) -> dict:
        return {
            "backend": self.backend,
            "model_name": self.model_name,
            "seed": self.seed,
            "fixture_path": self.fixture_path,
            "endpoint": self.endpoint,
            "concurrency": self.concurrency,
            "mock_config_path": self.mock_config_path,
        }


def make_scorer(descriptor: ScorerDescriptor) -> ScorerBase:
    descriptor.validate()
    if descriptor.backend == "mock":
        config = {}
        if descriptor.mock_config_path:
            config = json.loads(Path(descriptor.mock_config_path).read_text(encoding="utf-8"))
        return MockScorer.from_config(config, seed=descriptor.seed)
    if descriptor.backend == "fixture":
        return FixtureScorer(descriptor.fixture_path, model_name=descriptor.model_name)
    endpoint = descriptor.endpoint or os.environ.get("BIASAUDIT_SCORER_URL")
    return RemoteScorer(
        endpoint, model_name=descriptor.model_name, concurrency=descriptor.concurrency
    )
