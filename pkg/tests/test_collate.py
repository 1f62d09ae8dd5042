import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from biasaudit import (
    MaskDecision,
    MaskingPolicy,
    TokenVocab,
    TokenizedSequence,
    TrainSchedule,
    lr_at,
    make_batches,
    mask_batch,
    pad_length,
    read_batches,
    write_batches,
)
from biasaudit.collate import batch_seed, load_sequences_jsonl
from biasaudit.errors import ConfigError, EmptyBatch, StepOutOfRange

VOCAB = TokenVocab(vocab_size=1000, pad_id=0, mask_id=4, special_ids=frozenset({1, 2, 3}))


def make_seqs(rng, n, min_len=8, max_len=40):
    """BERT-shaped sequences: start/end markers plus body tokens."""
    seqs = []
    for _ in range(n):
        length = rng.integers(min_len, max_len + 1)
        body = rng.integers(5, VOCAB.vocab_size, size=length - 2)
        ids = (1, *body.tolist(), 2)
        seqs.append(TokenizedSequence(ids=ids, special_positions={0, length - 1}))
    return seqs


class TestPadLength:
    @pytest.mark.parametrize("n,expected", [(37, 64), (64, 64), (1, 1), (2, 2), (3, 4), (65, 128)])
    def test_examples(self, n, expected):
        assert pad_length(n) == expected

    def test_full_range_property(self):
        # result is a power of two, >= n, and result/2 < n, for all n in [1, 2**20]
        for n in range(1, 2**20 + 1):
            r = pad_length(n)
            assert r & (r - 1) == 0
            assert r >= n
            assert r // 2 < n

    def test_rejects_non_positive(self):
        with pytest.raises(ConfigError):
            pad_length(0)


class TestMaskBatch:
    def test_zero_select_is_identity(self):
        rng = np.random.default_rng(0)
        seqs = make_seqs(rng, 8)
        batch = mask_batch(seqs, 7, VOCAB, MaskingPolicy(select=0.0))
        assert np.array_equal(batch.input_ids, batch.labels)
        assert np.all(batch.decisions == MaskDecision.KEEP)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(1)
        seqs = make_seqs(rng, 16)
        a = mask_batch(seqs, 99, VOCAB)
        b = mask_batch(seqs, 99, VOCAB)
        for name in ("input_ids", "labels", "attention", "decisions"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_different_seed_differs(self):
        rng = np.random.default_rng(1)
        seqs = make_seqs(rng, 16)
        a = mask_batch(seqs, 99, VOCAB)
        b = mask_batch(seqs, 100, VOCAB)
        assert not np.array_equal(a.decisions, b.decisions)

    def test_labels_preserve_originals(self):
        rng = np.random.default_rng(2)
        seqs = make_seqs(rng, 16)
        batch = mask_batch(seqs, 5, VOCAB)
        for i, seq in enumerate(seqs):
            assert tuple(batch.labels[i, : len(seq)]) == seq.ids
            assert np.all(batch.labels[i, len(seq):] == VOCAB.pad_id)

    def test_corruption_only_on_selected(self):
        rng = np.random.default_rng(3)
        seqs = make_seqs(rng, 32)
        batch = mask_batch(seqs, 11, VOCAB)
        differs = batch.input_ids != batch.labels
        corrupted = (batch.decisions == MaskDecision.MASKED) | (
            batch.decisions == MaskDecision.RANDOM
        )
        assert np.all(differs <= corrupted)  # differs implies corrupted
        assert np.all(batch.input_ids[batch.decisions == MaskDecision.MASKED] == VOCAB.mask_id)
        unchanged = batch.decisions == MaskDecision.UNCHANGED
        assert np.array_equal(batch.input_ids[unchanged], batch.labels[unchanged])

    def test_special_and_pad_never_selected(self):
        rng = np.random.default_rng(4)
        seqs = make_seqs(rng, 32)
        batch = mask_batch(seqs, 13, VOCAB, MaskingPolicy(select=1.0))
        for i, seq in enumerate(seqs):
            for pos in seq.special_positions:
                assert batch.decisions[i, pos] == MaskDecision.KEEP
            assert np.all(batch.decisions[i, len(seq):] == MaskDecision.KEEP)
            assert not batch.attention[i, len(seq):].any()
            assert batch.attention[i, : len(seq)].all()

    def test_random_replacements_avoid_special_ids(self):
        rng = np.random.default_rng(5)
        seqs = make_seqs(rng, 64)
        batch = mask_batch(seqs, 17, VOCAB, MaskingPolicy(select=1.0, mask=0.0, random=1.0, keep=0.0))
        replaced = batch.input_ids[batch.decisions == MaskDecision.RANDOM]
        assert len(replaced) > 0
        assert not set(replaced.tolist()) & set(VOCAB.special_ids)

    def test_batch_shape_is_power_of_two(self):
        rng = np.random.default_rng(6)
        seqs = make_seqs(rng, 8, min_len=30, max_len=37)
        batch = mask_batch(seqs, 3, VOCAB)
        length = batch.input_ids.shape[1]
        assert length == 64 or length == 32  # pad_length of the longest (30..37 -> 32 or 64)
        assert length == pad_length(max(len(s) for s in seqs))

    def test_empty_batch_rejected(self):
        with pytest.raises(EmptyBatch):
            mask_batch([], 0, VOCAB)

    def test_policy_validation(self):
        with pytest.raises(ConfigError):
            MaskingPolicy(select=0.15, mask=0.8, random=0.3, keep=0.1)
        with pytest.raises(ConfigError):
            MaskingPolicy(select=1.5)

    def test_monte_carlo_statistics(self):
        # ~128k eligible tokens; binomial sigma for the 0.15 selection is
        # ~0.001, so the +-0.005 band is ~5 sigma; conditional 80/10/10
        # fractions get ~0.003 sigma against a +-0.01 band.
        rng = np.random.default_rng(7)
        seqs = make_seqs(rng, 1000, min_len=120, max_len=130)
        batch = mask_batch(seqs, 2025, VOCAB)
        eligible = batch.attention.copy()
        for i, seq in enumerate(seqs):
            for pos in seq.special_positions:
                eligible[i, pos] = False
        n_eligible = int(eligible.sum())
        assert n_eligible > 100_000
        selected = batch.decisions != MaskDecision.KEEP
        frac = selected.sum() / n_eligible
        assert 0.145 <= frac <= 0.155
        n_sel = int(selected.sum())
        for decision, target in [
            (MaskDecision.MASKED, 0.8),
            (MaskDecision.RANDOM, 0.1),
            (MaskDecision.UNCHANGED, 0.1),
        ]:
            share = (batch.decisions == decision).sum() / n_sel
            assert abs(share - target) <= 0.01


class TestMakeBatches:
    def test_batch_sizes_and_shared_length(self):
        rng = np.random.default_rng(8)
        seqs = make_seqs(rng, 70)
        batches = make_batches(seqs, seed=1, vocab=VOCAB, batch_size=32)
        assert [b.input_ids.shape[0] for b in batches] == [32, 32, 6]
        lengths = {b.input_ids.shape[1] for b in batches}
        assert lengths == {pad_length(max(len(s) for s in seqs))}

    def test_per_batch_seeds_are_stable(self):
        a = batch_seed(7, 3).generate_state(4)
        b = batch_seed(7, 3).generate_state(4)
        assert np.array_equal(a, b)
        c = batch_seed(7, 4).generate_state(4)
        assert not np.array_equal(a, c)

    def test_roundtrip_through_files(self, tmp_path):
        rng = np.random.default_rng(9)
        seqs = make_seqs(rng, 40)
        policy = MaskingPolicy()
        batches = make_batches(seqs, seed=3, vocab=VOCAB, policy=policy)
        write_batches(tmp_path, batches, seed=3, vocab=VOCAB, policy=policy)
        manifest, loaded = read_batches(tmp_path)
        assert manifest["seed"] == 3
        assert len(loaded) == len(batches)
        for orig, back in zip(batches, loaded):
            assert np.array_equal(orig.input_ids, back.input_ids)
            assert np.array_equal(orig.labels, back.labels)
            assert np.array_equal(orig.attention, back.attention)
            assert np.array_equal(orig.decisions, back.decisions)

    def test_written_bytes_are_stable(self, tmp_path):
        rng = np.random.default_rng(10)
        seqs = make_seqs(rng, 40)
        policy = MaskingPolicy()
        for sub in ("a", "b"):
            batches = make_batches(seqs, seed=3, vocab=VOCAB, policy=policy)
            write_batches(tmp_path / sub, batches, seed=3, vocab=VOCAB, policy=policy)
        for name in sorted(p.name for p in (tmp_path / "a").iterdir()):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_load_sequences_jsonl(self, tmp_path):
        path = tmp_path / "seqs.jsonl"
        path.write_text('{"ids": [1, 5, 6, 2], "special_positions": [0, 3]}\n{"ids": [1, 7, 2]}\n')
        seqs = load_sequences_jsonl(path)
        assert seqs[0].special_positions == frozenset({0, 3})
        assert seqs[1].ids == (1, 7, 2)


class TestSchedule:
    def test_endpoints_and_midpoint(self):
        schedule = TrainSchedule(total_steps=1000)
        assert lr_at(0, schedule) == 2e-5
        assert lr_at(1000, schedule) == 0.0
        assert lr_at(500, schedule) == pytest.approx(1e-5)

    def test_monotone_non_increasing(self):
        schedule = TrainSchedule(total_steps=333, base_lr=3e-4)
        values = [lr_at(s, schedule) for s in range(334)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    @given(st.integers(min_value=1, max_value=10**6))
    def test_linearity(self, total):
        schedule = TrainSchedule(total_steps=total)
        assert lr_at(total, schedule) == 0.0
        assert lr_at(0, schedule) == schedule.base_lr

    def test_out_of_range(self):
        schedule = TrainSchedule(total_steps=10)
        with pytest.raises(StepOutOfRange):
            lr_at(11, schedule)
        with pytest.raises(StepOutOfRange):
            lr_at(-1, schedule)

    def test_for_dataset(self):
        schedule = TrainSchedule.for_dataset(100, epochs=200, batch_size=32)
        assert schedule.total_steps == 200 * 4

    def test_paper_defaults(self):
        schedule = TrainSchedule.for_dataset(6848)
        assert schedule.epochs == 200
        assert schedule.base_lr == 2e-5
        assert schedule.batch_size == 32
