"""Gendered log-ratio bias metrics over masked-LM probabilities.

The headline score for one model and experiment is the mean over occupations
of the absolute per-occupation mean (over probe sentences) of
``log2(P(male term) / P(female term))``:

* 0 means the two terms are equally probable everywhere,
* a negative per-occupation mean leans female, a positive one male,
* the absolute value before the outer mean keeps opposite leanings from
  canceling, so the score is always >= 0.

For the name-set experiment, P(male term) / P(female term) are the
arithmetic means of the per-name probabilities over the 29 male / 29 female
names, computed by :func:`name_set_probabilities` before records are built.

Probabilities are floored at ``PROBABILITY_FLOOR`` before the ratio so float
underflow cannot produce infinities; floored cells are counted and surfaced
on the report. All computation is double precision; serialization rounds to
4 decimals.

Everything here is pure over immutable inputs and deterministic regardless
of record order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import IncompatibleName, IncompleteGrid, NonPositiveProbability
from .scoring import MaskedQuery, ScorerBase
from .templates import Experiment, NamePair

PROBABILITY_FLOOR = 1e-12
SERIALIZE_DECIMALS = 4


@dataclass(frozen=True)
class ProbabilityRecord:
    """Masked-term probabilities for one (template, occupation) grid cell."""

    template_id: str
    occupation: str
    p_male_term: float
    p_female_term: float


@dataclass(frozen=True)
class NameSetProbabilities:
    p_male_names: float
    p_female_names: float
    n_names: int


@dataclass(frozen=True)
class OccupationProfile:
    """Reversed-direction result: occupation probabilities in a gendered context."""

    probabilities: dict[str, float]
    excluded: tuple[str, ...]


@dataclass(frozen=True)
class MalorReport:
    model_name: str
    experiment: Experiment
    per_occupation_mean_log_ratio: dict[str, float]
    malor: float
    n_sentences: int
    n_occupations: int
    floored_cells: int

    CSV_HEADER = ("model", "experiment", "malor", "n", "m", "floored_cells")

    def to_json_dict(self, decimals: int = SERIALIZE_DECIMALS) -> dict:
        return {
            "model": self.model_name,
            "experiment": self.experiment.value,
            "malor": round(self.malor, decimals),
            "n_sentences": self.n_sentences,
            "n_occupations": self.n_occupations,
            "floored_cells": self.floored_cells,
            "per_occupation_mean_log_ratio": {
                occ: round(v, decimals)
                for occ, v in sorted(self.per_occupation_mean_log_ratio.items())
            },
        }

    def to_csv_row(self, decimals: int = SERIALIZE_DECIMALS) -> tuple:
        return (
            self.model_name,
            self.experiment.value,
            f"{self.malor:.{decimals}f}",
            self.n_sentences,
            self.n_occupations,
            self.floored_cells,
        )


def _check_positive(value: float, what: str) -> None:
    if not math.isfinite(value) or value <= 0.0:
        raise NonPositiveProbability(f"{what} must be finite and > 0, got {value!r}")


def log_ratio(p_male: float, p_female: float) -> float:
    """log2 of the male/female probability ratio; negative leans female.

    Antisymmetric in its arguments and invariant under joint rescaling, so
    raw and candidate-renormalized probabilities give the same value.
    """
    _check_positive(p_male, "p_male")
    _check_positive(p_female, "p_female")
    return math.log2(p_male) - math.log2(p_female)


def malor(
    records: Iterable[ProbabilityRecord],
    experiment: Experiment,
    model_name: str = "",
    expected_template_ids: Sequence[str] | None = None,
    expected_occupations: Sequence[str] | None = None,
) -> MalorReport:
    """Aggregate a complete template x occupation grid into one report.

    The grid must contain every (template, occupation) cell exactly once;
    missing or duplicated cells raise IncompleteGrid. Probabilities below
    PROBABILITY_FLOOR are floored (and counted); negative, zero-by-
    construction or non-finite values raise NonPositiveProbability.
    """
    records = list(records)
    if not records:
        raise IncompleteGrid("no records")

    template_ids = sorted({r.template_id for r in records})
    occupations = sorted({r.occupation for r in records})
    if expected_template_ids is not None and set(template_ids) != set(expected_template_ids):
        raise IncompleteGrid(
            f"template ids differ from the expected set "
            f"(got {len(template_ids)}, expected {len(set(expected_template_ids))})"
        )
    if expected_occupations is not None and set(occupations) != set(expected_occupations):
        raise IncompleteGrid(
            f"occupations differ from the expected set "
            f"(got {len(occupations)}, expected {len(set(expected_occupations))})"
        )

    n, m = len(template_ids), len(occupations)
    seen = {(r.template_id, r.occupation) for r in records}
    if len(seen) != len(records):
        raise IncompleteGrid(f"{len(records) - len(seen)} duplicate grid cells")
    if len(records) != n * m:
        raise IncompleteGrid(f"grid is {n} templates x {m} occupations but has {len(records)} cells")

    p_male = np.empty(len(records), dtype=np.float64)
    p_female = np.empty(len(records), dtype=np.float64)
    occ_index = {occ: j for j, occ in enumerate(occupations)}
    cell_occ = np.empty(len(records), dtype=np.int64)
    for i, r in enumerate(records):
        for value, what in ((r.p_male_term, "p_male_term"), (r.p_female_term, "p_female_term")):
            if not math.isfinite(value) or value < 0.0:
                raise NonPositiveProbability(
                    f"cell ({r.template_id}, {r.occupation}): {what}={value!r}"
                )
        p_male[i] = r.p_male_term
        p_female[i] = r.p_female_term
        cell_occ[i] = occ_index[r.occupation]

    floored = int(np.count_nonzero(p_male < PROBABILITY_FLOOR)) + int(
        np.count_nonzero(p_female < PROBABILITY_FLOOR)
    )
    ratios = np.log2(np.maximum(p_male, PROBABILITY_FLOOR)) - np.log2(
        np.maximum(p_female, PROBABILITY_FLOOR)
    )

    # fsum is exactly rounded, so the result is bit-identical under any
    # permutation of the records or relabeling of template ids
    per_occ = np.array(
        [math.fsum(ratios[cell_occ == j]) / n for j in range(m)], dtype=np.float64
    )
    score = math.fsum(np.abs(per_occ)) / m

    return MalorReport(
        model_name=model_name,
        experiment=experiment,
        per_occupation_mean_log_ratio={occ: float(per_occ[j]) for occ, j in occ_index.items()},
        malor=score,
        n_sentences=n,
        n_occupations=m,
        floored_cells=floored,
    )


def name_set_probabilities(
    per_name: Mapping[str, float], pairs: Sequence[NamePair]
) -> NameSetProbabilities:
    """Average the per-name mask probabilities over the male and female sets.

    Any missing name raises IncompatibleName: a single multi-token name makes
    the whole names experiment unsupported for that model.
    """
    missing = [
        name for p in pairs for name in (p.male, p.female) if per_name.get(name) is None
    ]
    if missing:
        raise IncompatibleName(f"names without probabilities: {sorted(missing)}")
    males = [float(per_name[p.male]) for p in pairs]
    females = [float(per_name[p.female]) for p in pairs]
    return NameSetProbabilities(
        p_male_names=sum(males) / len(males),
        p_female_names=sum(females) / len(females),
        n_names=len(pairs),
    )


def occupation_profile(
    scorer: ScorerBase, gendered_text: str, occupations: Sequence[str]
) -> OccupationProfile:
    """Score every occupation at the masked slot of a gendered sentence.

    Multi-token occupations are excluded (and listed) rather than fatal,
    unlike pronoun candidates in the forward direction.
    """
    results = scorer.score(MaskedQuery(text=gendered_text, candidates=tuple(occupations)))
    probabilities: dict[str, float] = {}
    excluded: list[str] = []
    for r in results:
        if r.compatible:
            probabilities[r.candidate] = r.probability
        else:
            excluded.append(r.candidate)
    return OccupationProfile(probabilities=probabilities, excluded=tuple(excluded))
