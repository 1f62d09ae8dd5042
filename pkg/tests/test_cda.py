import pytest

from biasaudit import (
    Experiment,
    build_names_dataset,
    build_pronoun_dataset,
    dataset_stats,
    filter_sentences,
    sample_dataset,
    swap_gendered_terms,
)
from biasaudit.errors import CorpusUnreadable, DataError, UnrecognizedName


class TestSwap:
    def test_reference_example(self, lexicon):
        assert (
            swap_gendered_terms("the guy programmed at his computer", lexicon)
            == "the woman programmed at her computer"
        )

    def test_reference_example_round_trips(self, lexicon):
        s = "the guy programmed at his computer"
        assert swap_gendered_terms(swap_gendered_terms(s, lexicon), lexicon) == s

    def test_identity_on_lexicon_free_text(self, lexicon):
        assert swap_gendered_terms("The sky is blue.", lexicon) == "The sky is blue."

    def test_word_by_word_map(self, lexicon):
        assert swap_gendered_terms("She said he left.", lexicon) == "He said she left."

    def test_case_preserved(self, lexicon):
        assert swap_gendered_terms("HE yelled; She whispered.", lexicon) == "SHE yelled; He whispered."

    def test_word_boundaries_respected(self, lexicon):
        # "she" inside "shelf", "he" inside "the" must not match
        assert swap_gendered_terms("The shelf held theory books.", lexicon) == "The shelf held theory books."

    def test_her_determiner_vs_object(self, lexicon):
        assert (
            swap_gendered_terms("The manager was taken aback by her directness.", lexicon)
            == "The manager was taken aback by his directness."
        )
        assert swap_gendered_terms("The nurse thanked her.", lexicon) == "The nurse thanked him."
        assert swap_gendered_terms("We told her about it.", lexicon) == "We told him about it."

    def test_names_swap_both_ways(self, lexicon):
        assert (
            swap_gendered_terms("Timothy praised Cynthia.", lexicon)
            == "Cynthia praised Timothy."
        )

    def test_involution_on_fuzz_corpus(self, lexicon, fuzz_sentences):
        for s in fuzz_sentences:
            assert swap_gendered_terms(swap_gendered_terms(s, lexicon), lexicon) == s

    def test_swap_always_changes_gendered_sentences(self, lexicon, fuzz_sentences):
        for s in fuzz_sentences:
            assert swap_gendered_terms(s, lexicon) != s


class TestFilter:
    def test_paper_like_examples(self, assets, lexicon):
        kept = filter_sentences(
            [
                "So the president's position is clear and she will not back down.",
                "The sky is blue.",
                "He has nothing relevant in this sentence at all.",
            ],
            Experiment.HE_SHE,
            assets.occupation_words(),
        )
        assert kept == ["So the president's position is clear and she will not back down."]

    def test_his_her_example(self, assets):
        kept = filter_sentences(
            ["The manager was taken aback by her directness."],
            Experiment.HIS_HER,
            assets.occupation_words(),
        )
        assert len(kept) == 1

    def test_he_she_does_not_match_his(self, assets):
        kept = filter_sentences(
            ["The manager was impressed by his directness."],
            Experiment.HE_SHE,
            assets.occupation_words(),
        )
        assert kept == []

    def test_names_experiment_filters_on_names(self, assets):
        kept = filter_sentences(
            [
                "Timothy wants to be an engineer.",
                "Tim wants to be an engineer.",
            ],
            Experiment.MALE_FEMALE_NAMES,
            assets.occupation_words(),
            assets.name_pairs,
        )
        assert kept == ["Timothy wants to be an engineer."]

    def test_order_preserved(self, assets, fuzz_sentences):
        kept = filter_sentences(fuzz_sentences, Experiment.HE_SHE, assets.occupation_words())
        kept_set = set(kept)
        assert kept == [s for s in fuzz_sentences if s in kept_set]

    def test_bruteforce_regex_oracle_agrees(self, assets, fuzz_sentences):
        import re

        occ = [re.compile(rf"\b{w}\b", re.IGNORECASE) for w in assets.occupation_words()]
        terms = [re.compile(r"\bhe\b", re.IGNORECASE), re.compile(r"\bshe\b", re.IGNORECASE)]
        expected = [
            s
            for s in fuzz_sentences
            if any(t.search(s) for t in terms) and any(o.search(s) for o in occ)
        ]
        kept = filter_sentences(fuzz_sentences, Experiment.HE_SHE, assets.occupation_words())
        assert kept == expected

    def test_unreadable_corpus(self, tmp_path, assets):
        with pytest.raises(CorpusUnreadable):
            filter_sentences(tmp_path / "missing.txt", Experiment.HE_SHE, assets.occupation_words())


class TestPronounDataset:
    def test_pairs_and_balance(self, assets, lexicon, fuzz_sentences):
        kept = filter_sentences(fuzz_sentences, Experiment.HE_SHE, assets.occupation_words())
        dataset = build_pronoun_dataset(kept, Experiment.HE_SHE, lexicon, assets.occupation_words())
        assert dataset.n_sentences == 2 * len(dataset.pairs) == 2 * len(kept)
        stats = dataset_stats(dataset, lexicon)
        assert stats.male_female_token_balance == 0
        assert stats.n_pairs == len(kept)
        for pair in dataset.pairs:
            assert pair.swapped != pair.original
            assert swap_gendered_terms(pair.swapped, lexicon) == pair.original
            assert pair.matched_occupation in assets.occupation_words()

    def test_empty_input_gives_empty_dataset(self, assets, lexicon):
        dataset = build_pronoun_dataset([], Experiment.HE_SHE, lexicon, assets.occupation_words())
        stats = dataset_stats(dataset, lexicon)
        assert (stats.n_pairs, stats.n_sentences, stats.male_female_token_balance) == (0, 0, 0)
        assert stats.per_occupation_counts == {}


class TestNamesDataset:
    SEED = "He pointed to his treasury secretary, Timothy Geithner, and told me about the plan."

    def test_replication_count(self, assets):
        dataset = build_names_dataset([self.SEED], assets.name_pairs, assets.occupation_words())
        assert len(dataset.pairs) == 29
        assert dataset.n_sentences == 58

    def test_counterfactual_contains_mapped_name(self, assets):
        dataset = build_names_dataset([self.SEED], assets.name_pairs, assets.occupation_words())
        own_pair = [p for p in dataset.pairs if "Timothy Geithner" in p.original]
        assert len(own_pair) == 1
        assert "Cynthia Geithner" in own_pair[0].swapped
        assert own_pair[0].swapped.startswith("She pointed to her treasury secretary")

    def test_gender_aligned_rewrites(self, assets):
        dataset = build_names_dataset([self.SEED], assets.name_pairs, assets.occupation_words())
        michael = [p for p in dataset.pairs if "Michael Geithner" in p.original]
        assert len(michael) == 1
        assert "Jennifer Geithner" in michael[0].swapped

    def test_zero_seeds(self, assets):
        dataset = build_names_dataset([], assets.name_pairs, assets.occupation_words())
        assert dataset.pairs == ()

    def test_unrecognized_name(self, assets):
        with pytest.raises(UnrecognizedName):
            build_names_dataset(
                ["Zebulon wants to be an engineer."], assets.name_pairs, assets.occupation_words()
            )

    def test_seed_without_occupation(self, assets):
        with pytest.raises(DataError):
            build_names_dataset(
                ["Timothy went home early."], assets.name_pairs, assets.occupation_words()
            )

    def test_dedup_exact_repeats(self, assets):
        # the same seed twice must not double the dataset
        dataset = build_names_dataset(
            [self.SEED, self.SEED], assets.name_pairs, assets.occupation_words()
        )
        assert len(dataset.pairs) == 29

    def test_balance_holds(self, assets, lexicon):
        dataset = build_names_dataset([self.SEED], assets.name_pairs, assets.occupation_words())
        assert dataset_stats(dataset, lexicon).male_female_token_balance == 0


class TestSampling:
    def test_sample_is_deterministic_and_bounded(self, assets, lexicon, fuzz_sentences):
        kept = filter_sentences(fuzz_sentences, Experiment.HE_SHE, assets.occupation_words())
        dataset = build_pronoun_dataset(kept, Experiment.HE_SHE, lexicon, assets.occupation_words())
        a = sample_dataset(dataset, 5, seed=42)
        b = sample_dataset(dataset, 5, seed=42)
        assert a.pairs == b.pairs
        assert len(a.pairs) == 5
        assert sample_dataset(dataset, 10**6, seed=1).pairs == dataset.pairs
