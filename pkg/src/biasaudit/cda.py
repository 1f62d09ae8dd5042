"""Counterfactual corpus construction.

From a line-delimited corpus this module keeps sentences that pair a
gendered term with an occupation word, swaps every gendered term for its
counterpart ("the guy programmed at his computer" -> "the woman programmed
at her computer"), and pairs each original with its counterfactual so the
resulting training corpus is gender balanced by construction.

The swap lexicon is a word-level involution: applying it twice returns the
original sentence, with one documented exception. English "her" covers both
"his" (determiner) and "him" (object), so the reverse direction is resolved
by a lookahead heuristic: "her" maps to "him" when the next token is
punctuation, end of sentence, or a closed-class word that cannot head a noun
phrase (verbs, auxiliaries, determiners, prepositions, conjunctions,
pronouns), and to "his" otherwise. The heuristic is logged per incident and
can mis-resolve pathological adjacencies (e.g. a bare noun right after an
object "her"); grammatical text round-trips.

Matching is whitespace/punctuation word-boundary based and case-insensitive;
no model tokenizer is involved at this stage. Case patterns are preserved
(He -> She, HIS -> HER).
"""

from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import CorpusUnreadable, DataError, UnrecognizedName
from .templates import Experiment, NamePair

logger = logging.getLogger(__name__)

_WORD_RE = re.compile(r"[A-Za-z]+(?:'[A-Za-z]+)*")

# Word pairs beyond the pronouns. "guy"<->"woman" is fixed by the reference
# swap example, which forces "man" to pair elsewhere to keep the involution.
_NOUN_PAIRS = (
    ("guy", "woman"),
    ("guys", "women"),
    ("man", "lady"),
    ("men", "ladies"),
    ("boy", "girl"),
    ("boys", "girls"),
    ("father", "mother"),
    ("fathers", "mothers"),
    ("son", "daughter"),
    ("sons", "daughters"),
    ("brother", "sister"),
    ("brothers", "sisters"),
    ("husband", "wife"),
    ("husbands", "wives"),
    ("uncle", "aunt"),
    ("uncles", "aunts"),
    ("king", "queen"),
    ("kings", "queens"),
)

# Lookahead cues for the object reading of "her": tokens that cannot start
# the noun phrase a determiner "her" would introduce.
_OBJECT_CUES = frozenset(
    """
    a an the this that these those
    is are was were be been being am
    has have had having do does did done
    will would shall should can could may might must
    say says said tell tells told ask asks asked give gives gave
    went goes go gone came come comes left leaves
    and or but nor so yet because although though while when whenever
    if unless until since before after as than then
    to of in on at by for with from into onto over under about
    against between through during above below up down out off
    he she it they we you i him them us me himself herself itself
    not too also there here now again very just only even still
    """.split()
)


@dataclass(frozen=True)
class SwapLexicon:
    """Bidirectional gendered-word map plus the name table.

    ``forward`` maps every unambiguous lexicon word (lowercase) to its
    counterpart; "her" is absent from it and handled by lookahead. The
    male/female word sets drive the balance accounting in dataset_stats.
    """

    forward: Mapping[str, str]
    male_words: frozenset[str]
    female_words: frozenset[str]

    @classmethod
    def default(cls, name_pairs: Sequence[NamePair] = ()) -> "SwapLexicon":
        forward: dict[str, str] = {
            "he": "she",
            "she": "he",
            "his": "her",
            "him": "her",
            "himself": "herself",
            "herself": "himself",
        }
        male = {"he", "his", "him", "himself"}
        female = {"she", "her", "herself"}
        for m, f in _NOUN_PAIRS:
            forward[m] = f
            forward[f] = m
            male.add(m)
            female.add(f)
        for pair in name_pairs:
            m, f = pair.male.lower(), pair.female.lower()
            forward[m] = f
            forward[f] = m
            male.add(m)
            female.add(f)
        return cls(
            forward=forward,
            male_words=frozenset(male),
            female_words=frozenset(female),
        )

    def is_gendered(self, word: str) -> bool:
        w = word.lower()
        return w in self.forward or w == "her"


def _match_case(source: str, replacement: str) -> str:
    if source.isupper() and len(source) > 1:
        return replacement.upper()
    if source[:1].isupper():
        return replacement[:1].upper() + replacement[1:]
    return replacement


def _resolve_her(sentence: str, match_end: int) -> str:
    """Pick 'him' or 'her'->'his' by looking at the next token."""
    rest = sentence[match_end:]
    next_match = _WORD_RE.search(rest)
    if next_match is None:
        return "him"
    between = rest[: next_match.start()]
    if any(ch not in " \t" for ch in between):
        # punctuation or a line break before the next word: clause ended
        return "him"
    return "him" if next_match.group(0).lower() in _OBJECT_CUES else "his"


def swap_gendered_terms(sentence: str, lexicon: SwapLexicon) -> str:
    """Replace every word-boundary lexicon occurrence with its counterpart.

    All other bytes are left untouched; a sentence with no lexicon tokens is
    returned unchanged.
    """
    out: list[str] = []
    last = 0
    for match in _WORD_RE.finditer(sentence):
        word = match.group(0)
        lower = word.lower()
        if lower == "her":
            target = _resolve_her(sentence, match.end())
            logger.debug("ambiguous 'her' resolved to %r in: %s", target, sentence)
        elif lower in lexicon.forward:
            target = lexicon.forward[lower]
        else:
            continue
        out.append(sentence[last : match.start()])
        out.append(_match_case(word, target))
        last = match.end()
    out.append(sentence[last:])
    return "".join(out)


@dataclass(frozen=True)
class CdaPair:
    original: str
    swapped: str
    matched_occupation: str
    matched_terms: tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {
            "original": self.original,
            "swapped": self.swapped,
            "matched_occupation": self.matched_occupation,
            "matched_terms": list(self.matched_terms),
        }


@dataclass(frozen=True)
class CdaDataset:
    experiment: Experiment
    pairs: tuple[CdaPair, ...]
    provenance: tuple[str, ...] = ()

    @property
    def n_sentences(self) -> int:
        return 2 * len(self.pairs)

    def sentences(self) -> Iterator[str]:
        for pair in self.pairs:
            yield pair.original
            yield pair.swapped


def _compile_any(words: Iterable[str]) -> re.Pattern:
    alternation = "|".join(sorted((re.escape(w) for w in words), key=len, reverse=True))
    return re.compile(rf"\b(?:{alternation})\b", re.IGNORECASE)


def _experiment_terms(
    experiment: Experiment, name_pairs: Sequence[NamePair]
) -> tuple[str, ...]:
    if experiment is Experiment.HE_SHE:
        return ("he", "she")
    if experiment is Experiment.HIS_HER:
        return ("his", "her")
    return tuple(n for p in name_pairs for n in (p.male, p.female))


def _iter_lines(corpus: Path | str | Iterable[str]) -> Iterator[str]:
    if isinstance(corpus, (str, Path)):
        path = Path(corpus)
        try:
            with open(path, encoding="utf-8") as f:
                for line in f:
                    yield line.rstrip("\n")
        except (OSError, UnicodeDecodeError) as exc:
            raise CorpusUnreadable(f"cannot read corpus {path}: {exc}")
    else:
        yield from corpus


def filter_sentences(
    corpus: Path | str | Iterable[str],
    experiment: Experiment,
    occupations: Sequence[str],
    name_pairs: Sequence[NamePair] = (),
) -> list[str]:
    """Keep sentences holding a target gendered term AND an occupation word.

    Matching is case-insensitive on word boundaries. The output preserves
    input order, so the pipeline is deterministic.
    """
    if experiment is Experiment.MALE_FEMALE_NAMES and not name_pairs:
        raise DataError("the names experiment needs the name-pair table to filter")
    term_re = _compile_any(_experiment_terms(experiment, name_pairs))
    occ_re = _compile_any(occupations)
    return [
        line
        for line in _iter_lines(corpus)
        if line.strip() and term_re.search(line) and occ_re.search(line)
    ]


def _first_occupation(sentence: str, occ_re: re.Pattern) -> str:
    match = occ_re.search(sentence)
    return match.group(0).lower() if match else ""


def _matched_terms(sentence: str, lexicon: SwapLexicon) -> tuple[str, ...]:
    return tuple(
        m.group(0) for m in _WORD_RE.finditer(sentence) if lexicon.is_gendered(m.group(0))
    )


def build_pronoun_dataset(
    sentences: Sequence[str],
    experiment: Experiment,
    lexicon: SwapLexicon,
    occupations: Sequence[str],
    provenance: Sequence[str] = (),
) -> CdaDataset:
    """Pair each eligible sentence with its gender-swapped counterfactual."""
    occ_re = _compile_any(occupations)
    pairs = []
    for sentence in sentences:
        swapped = swap_gendered_terms(sentence, lexicon)
        pairs.append(
            CdaPair(
                original=sentence,
                swapped=swapped,
                matched_occupation=_first_occupation(sentence, occ_re),
                matched_terms=_matched_terms(sentence, lexicon),
            )
        )
    return CdaDataset(experiment=experiment, pairs=tuple(pairs), provenance=tuple(provenance))


def build_names_dataset(
    seeds: Sequence[str],
    pairs: Sequence[NamePair],
    occupations: Sequence[str],
    lexicon: SwapLexicon | None = None,
    provenance: Sequence[str] = (),
) -> CdaDataset:
    """Replicate each seed across all name pairs, then swap.

    Every seed must contain at least one name from the table; its male names
    are rewritten to the target pair's male name and female names to the
    female name, so one seed yields one CdaPair per name pair (29 by default,
    58 sentences) before exact-string dedup.
    """
    lexicon = lexicon or SwapLexicon.default(pairs)
    occ_re = _compile_any(occupations)
    male_res = {p.male: re.compile(rf"\b{re.escape(p.male)}\b", re.IGNORECASE) for p in pairs}
    female_res = {p.female: re.compile(rf"\b{re.escape(p.female)}\b", re.IGNORECASE) for p in pairs}

    out: list[CdaPair] = []
    seen: set[tuple[str, str]] = set()
    for seed in seeds:
        hit_males = [p.male for p in pairs if male_res[p.male].search(seed)]
        hit_females = [p.female for p in pairs if female_res[p.female].search(seed)]
        if not hit_males and not hit_females:
            raise UnrecognizedName(f"seed contains no name from the table: {seed!r}")
        if not occ_re.search(seed):
            raise DataError(f"seed contains no occupation word: {seed!r}")
        for pair in pairs:
            rewritten = seed
            for name in hit_males:
                rewritten = male_res[name].sub(pair.male, rewritten)
            for name in hit_females:
                rewritten = female_res[name].sub(pair.female, rewritten)
            candidate = CdaPair(
                original=rewritten,
                swapped=swap_gendered_terms(rewritten, lexicon),
                matched_occupation=_first_occupation(rewritten, occ_re),
                matched_terms=_matched_terms(rewritten, lexicon),
            )
            key = (candidate.original, candidate.swapped)
            if key not in seen:
                seen.add(key)
                out.append(candidate)
    return CdaDataset(
        experiment=Experiment.MALE_FEMALE_NAMES, pairs=tuple(out), provenance=tuple(provenance)
    )


@dataclass(frozen=True)
class DatasetStats:
    n_pairs: int
    n_sentences: int
    per_occupation_counts: dict[str, int]
    male_female_token_balance: int

    def to_json_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "n_sentences": self.n_sentences,
            "per_occupation_counts": dict(sorted(self.per_occupation_counts.items())),
            "male_female_token_balance": self.male_female_token_balance,
        }


def dataset_stats(dataset: CdaDataset, lexicon: SwapLexicon) -> DatasetStats:
    """Counts plus the male-minus-female lexicon token balance.

    A completed original+swapped dataset balances exactly because every
    swapped male token faces one female token in the counterfactual.
    """
    male = female = 0
    per_occ: dict[str, int] = {}
    for sentence in dataset.sentences():
        for match in _WORD_RE.finditer(sentence):
            w = match.group(0).lower()
            if w in lexicon.male_words:
                male += 1
            elif w in lexicon.female_words:
                female += 1
    for pair in dataset.pairs:
        if pair.matched_occupation:
            # both sides of the pair contain the occupation word
            per_occ[pair.matched_occupation] = per_occ.get(pair.matched_occupation, 0) + 2
    return DatasetStats(
        n_pairs=len(dataset.pairs),
        n_sentences=dataset.n_sentences,
        per_occupation_counts=per_occ,
        male_female_token_balance=male - female,
    )


def sample_dataset(dataset: CdaDataset, n: int, seed: int) -> CdaDataset:
    """Deterministically down-select to n pairs (order-preserving)."""
    if n >= len(dataset.pairs):
        return dataset
    indices = sorted(random.Random(seed).sample(range(len(dataset.pairs)), n))
    return CdaDataset(
        experiment=dataset.experiment,
        pairs=tuple(dataset.pairs[i] for i in indices),
        provenance=dataset.provenance,
    )
