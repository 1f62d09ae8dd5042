import json

import pytest

from biasaudit import (
    FixtureRecorder,
    FixtureScorer,
    MaskedQuery,
    MockScorer,
    ScorerDescriptor,
    make_scorer,
)
from biasaudit.errors import BackendUnreachable, ConfigError, DataError, FixtureMiss


def query(text="[MASK] dreams of being a good engineer.", candidates=("he", "she")):
    return MaskedQuery(text=text, candidates=tuple(candidates))


class TestMaskedQuery:
    def test_requires_exactly_one_mask(self):
        with pytest.raises(DataError):
            MaskedQuery(text="no mask here", candidates=("he",))
        with pytest.raises(DataError):
            MaskedQuery(text="[MASK] and [MASK]", candidates=("he",))

    def test_requires_distinct_candidates(self):
        with pytest.raises(DataError):
            MaskedQuery(text="[MASK] x", candidates=("he", "he"))

    def test_requires_nonempty_candidates(self):
        with pytest.raises(DataError):
            MaskedQuery(text="[MASK] x", candidates=())


class TestMockScorer:
    def test_uniform_probabilities(self):
        results = MockScorer().score(query())
        assert [r.candidate for r in results] == ["he", "she"]
        assert all(r.compatible and r.probability == 0.5 for r in results)

    def test_bit_reproducible_across_instances(self):
        a = MockScorer(seed=3, noise_scale=0.5, base_probability=0.3)
        b = MockScorer(seed=3, noise_scale=0.5, base_probability=0.3)
        q = query()
        assert a.score(q) == b.score(q)

    def test_seed_changes_noise(self):
        q = query()
        a = MockScorer(seed=1, noise_scale=0.5).score(q)
        b = MockScorer(seed=2, noise_scale=0.5).score(q)
        assert a != b

    def test_context_weights_apply_by_text_match(self):
        scorer = MockScorer(
            base_probability=0.25,
            context_weights={"engineer": {"he": 1.0}, "nurse": {"she": 1.0}},
        )
        eng = scorer.score(query("[MASK] dreams of being a good engineer."))
        nur = scorer.score(query("[MASK] dreams of being a good nurse."))
        assert eng[0].probability > eng[1].probability  # he favored
        assert nur[1].probability > nur[0].probability  # she favored

    def test_multi_token_candidates_flagged(self):
        scorer = MockScorer(multi_token_words=frozenset({"engineer"}))
        results = scorer.score(query(candidates=("he", "engineer")))
        assert results[0].compatible and results[0].probability is not None
        assert not results[1].compatible and results[1].probability is None

    def test_vocab_check(self):
        scorer = MockScorer(multi_token_words=frozenset({"engineer"}))
        assert scorer.vocab_check("nurse").is_single_token
        check = scorer.vocab_check("engineer")
        assert not check.is_single_token and len(check.pieces) == 2

    def test_probabilities_in_open_interval(self):
        scorer = MockScorer(base_probability=0.9, candidate_weights={"he": 50.0, "she": -50.0})
        results = scorer.score(query())
        assert 0.0 < results[1].probability < results[0].probability < 1.0


class TestScoreBatch:
    def test_singleton_batch_equals_score(self):
        scorer = MockScorer(seed=4, noise_scale=0.2)
        q = query()
        [item] = scorer.score_batch([q])
        assert item.ok and item.results == scorer.score(q) and item.retries == 0

    def test_permuted_batch_gives_permuted_results(self):
        scorer = MockScorer(seed=4, noise_scale=0.2)
        queries = [query(f"[MASK] is a great worker number {i}.") for i in range(20)]
        forward = scorer.score_batch(queries)
        backward = scorer.score_batch(list(reversed(queries)))
        assert [i.results for i in forward] == [i.results for i in reversed(backward)]

    def test_concurrent_equals_sequential(self):
        scorer = MockScorer(seed=4, noise_scale=0.2)
        queries = [query(f"[MASK] is a great worker number {i}.") for i in range(50)]
        sequential = scorer.score_batch(queries)
        threaded = scorer.score_batch(queries, concurrency=8)
        assert [i.results for i in sequential] == [i.results for i in threaded]


class TestFixtureScorer:
    def record(self, tmp_path, queries, vocab_words=("he", "she")):
        recorder = FixtureRecorder(MockScorer(seed=11, noise_scale=0.3), model_name="rec")
        for q in queries:
            recorder.score(q)
        for w in vocab_words:
            recorder.vocab_check(w)
        return recorder.save(tmp_path / "fixture.json")

    def test_replay_is_bit_identical(self, tmp_path):
        q = query()
        path = self.record(tmp_path, [q])
        source = MockScorer(seed=11, noise_scale=0.3)
        replay = FixtureScorer(path)
        assert replay.score(q) == source.score(q)

    def test_miss_raises(self, tmp_path):
        path = self.record(tmp_path, [query()])
        replay = FixtureScorer(path)
        with pytest.raises(FixtureMiss):
            replay.score(query("[MASK] is an edited template with a nurse."))

    def test_edited_candidates_also_miss(self, tmp_path):
        path = self.record(tmp_path, [query()])
        with pytest.raises(FixtureMiss):
            FixtureScorer(path).score(query(candidates=("he", "she", "they")))

    def test_vocab_miss_raises(self, tmp_path):
        path = self.record(tmp_path, [query()])
        with pytest.raises(FixtureMiss):
            FixtureScorer(path).vocab_check("unrecorded")

    def test_missing_file_is_backend_error(self, tmp_path):
        with pytest.raises(BackendUnreachable):
            FixtureScorer(tmp_path / "nope.json")

    def test_fixture_records_exact_text(self, tmp_path):
        q = query()
        path = self.record(tmp_path, [q])
        raw = json.loads(path.read_text())
        texts = [entry["text"] for entry in raw["queries"].values()]
        assert texts == [q.text]

    def test_batch_miss_reported_per_item(self, tmp_path):
        path = self.record(tmp_path, [query()])
        replay = FixtureScorer(path)
        items = replay.score_batch([query(), query("[MASK] met a new nurse.")])
        assert items[0].ok
        assert not items[1].ok and "no recording" in items[1].error


class TestDescriptor:
    def test_unknown_backend_rejected(self):
        with pytest.raises(ConfigError):
            make_scorer(ScorerDescriptor(backend="quantum"))

    def test_fixture_needs_path(self):
        with pytest.raises(ConfigError):
            make_scorer(ScorerDescriptor(backend="fixture"))

    def test_remote_needs_endpoint(self, monkeypatch):
        monkeypatch.delenv("BIASAUDIT_SCORER_URL", raising=False)
        with pytest.raises(ConfigError):
            make_scorer(ScorerDescriptor(backend="remote", model_name="bert"))

    def test_exactly_one_backend_config(self):
        with pytest.raises(ConfigError):
            ScorerDescriptor(backend="mock", fixture_path="x.json").validate()

    def test_mock_from_config_rejects_unknown_keys(self):
        with pytest.raises(ConfigError):
            MockScorer.from_config({"bias": 1.0})

    def test_mock_descriptor_builds(self):
        scorer = make_scorer(ScorerDescriptor(backend="mock", seed=5))
        assert isinstance(scorer, MockScorer) and scorer.seed == 5
