"""End-to-end bias audit: prompts -> scores -> per-experiment reports.

For each experiment the pipeline instantiates the full template x occupation
cross product, scores the gendered candidates at the mask, and aggregates the
grid into one report. Before any scoring, a vocabulary precheck runs:

* pronoun experiments require their two candidates to be single-token, else
  the experiment errors (the model cannot support the metric);
* the names experiment requires all 58 names to be single-token, else the
  audit returns an "N/A" outcome naming the offending names instead of a
  score, mirroring how models with byte-pair vocabularies are reported.

Scoring order never affects results: records are keyed by grid cell and the
aggregation is permutation-invariant, so concurrent backends may complete in
any order.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import gender_share
from .errors import BackendError, ConfigError, IncompatibleCandidate
from .metrics import MalorReport, ProbabilityRecord, malor, name_set_probabilities
from .scoring import MaskedQuery, ScorerBase, ScorerDescriptor, make_scorer
from .templates import AssetBundle, Experiment, instantiate_gendered, load_assets

NA_STATUS = "N/A"
OK_STATUS = "ok"


@dataclass(frozen=True)
class ExperimentAudit:
    """Outcome for one model x experiment: a report, or an N/A marker."""

    experiment: Experiment
    model_name: str
    status: str
    report: MalorReport | None = None
    shares: dict[str, float] = field(default_factory=dict)
    na_reason: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OK_STATUS

    def to_json_dict(self) -> dict:
        if not self.ok:
            return {
                "status": self.status,
                "model": self.model_name,
                "experiment": self.experiment.value,
                "reason": self.na_reason,
            }
        payload = {"status": self.status}
        payload.update(self.report.to_json_dict())
        return payload


def _multi_token_words(scorer: ScorerBase, words) -> list[str]:
    return [w for w in words if not scorer.vocab_check(w).is_single_token]


def _score_grid(
    scorer: ScorerBase,
    assets: AssetBundle,
    experiment: Experiment,
    candidates: tuple[str, ...],
    concurrency: int | None,
) -> dict[tuple[str, str], list]:
    prompts = assets.prompts_for(experiment)
    queries = [MaskedQuery(text=p.text, candidates=candidates) for p in prompts]
    items = scorer.score_batch(queries, concurrency=concurrency)
    failures = [item for item in items if not item.ok]
    if failures:
        raise BackendError(
            f"{len(failures)}/{len(items)} queries failed; first: {failures[0].error}"
        )
    return {
        (prompt.template_id, prompt.occupation): item.results
        for prompt, item in zip(prompts, items)
    }


def audit_experiment(
    scorer: ScorerBase,
    assets: AssetBundle,
    experiment: Experiment,
    model_name: str,
    concurrency: int | None = None,
) -> ExperimentAudit:
    """Run one experiment end to end against a scorer backend."""
    pronouns = experiment.pronoun_candidates()

    if pronouns is not None:
        bad = _multi_token_words(scorer, pronouns)
        if bad:
            raise IncompatibleCandidate(
                f"{model_name}: pronoun candidates {bad} are multi-token; "
                f"the {experiment.value} experiment is unsupported"
            )
        cell_results = _score_grid(scorer, assets, experiment, pronouns, concurrency)
        records = []
        for (template_id, occupation), results in cell_results.items():
            male, female = results[0], results[1]
            if not (male.compatible and female.compatible):
                raise IncompatibleCandidate(
                    f"{model_name}: scorer reported an incompatible pronoun for "
                    f"({template_id}, {occupation})"
                )
            records.append(
                ProbabilityRecord(
                    template_id=template_id,
                    occupation=occupation,
                    p_male_term=male.probability,
                    p_female_term=female.probability,
                )
            )
    else:
        names = assets.male_names() + assets.female_names()
        bad = _multi_token_words(scorer, names)
        if bad:
            return ExperimentAudit(
                experiment=experiment,
                model_name=model_name,
                status=NA_STATUS,
                na_reason=f"multi-token names for this model: {sorted(bad)}",
            )
        cell_results = _score_grid(scorer, assets, experiment, names, concurrency)
        records = []
        for (template_id, occupation), results in cell_results.items():
            per_name = {r.candidate: r.probability if r.compatible else None for r in results}
            sets = name_set_probabilities(per_name, assets.name_pairs)
            records.append(
                ProbabilityRecord(
                    template_id=template_id,
                    occupation=occupation,
                    p_male_term=sets.p_male_names,
                    p_female_term=sets.p_female_names,
                )
            )

    report = malor(
        records,
        experiment,
        model_name=model_name,
        expected_template_ids=[t.id for t in assets.templates_for(experiment)],
        expected_occupations=assets.occupation_words(),
    )
    return ExperimentAudit(
        experiment=experiment,
        model_name=model_name,
        status=OK_STATUS,
        report=report,
        shares=_occupation_shares(records),
    )


@dataclass(frozen=True)
class AuditConfig:
    """A full audit request: backend, experiments, seeds, and paths."""

    scorer: ScorerDescriptor
    experiments: tuple[Experiment, ...]
    seeds: tuple[int, ...] = (0,)
    assets_path: Path | None = None
    output_path: Path | None = None
    concurrency: int = 8
    label: str = "before"

    def validate(self) -> None:
        self.scorer.validate()
        if not self.experiments:
            raise ConfigError("audit needs at least one experiment")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ConfigError(f"seeds must be non-empty and distinct, got {self.seeds}")


@dataclass(frozen=True)
class AuditRun:
    seed: int
    outcome: ExperimentAudit


def run_audit(config: AuditConfig) -> dict[Experiment, list[AuditRun]]:
    """Audit every configured experiment once per seed.

    Only the mock backend is seed-sensitive; for fixture and remote backends
    the seed is recorded but does not change the scores.
    """
    config.validate()
    assets = load_assets(config.assets_path)
    results: dict[Experiment, list[AuditRun]] = {e: [] for e in config.experiments}
    for seed in config.seeds:
        scorer = make_scorer(dataclasses.replace(config.scorer, seed=seed))
        for experiment in config.experiments:
            outcome = audit_experiment(
                scorer, assets, experiment, config.scorer.model_name,
                concurrency=config.concurrency,
            )
            results[experiment].append(AuditRun(seed=seed, outcome=outcome))
    return results


def _occupation_shares(records: list[ProbabilityRecord]) -> dict[str, float]:
    """Per-occupation male share of the template-averaged pair probabilities."""
    sums: dict[str, list[float]] = {}
    for r in records:
        male_sum, female_sum, count = sums.setdefault(r.occupation, [0.0, 0.0, 0])
        sums[r.occupation] = [male_sum + r.p_male_term, female_sum + r.p_female_term, count + 1]
    return {
        occ: gender_share(male_sum / count, female_sum / count)
        for occ, (male_sum, female_sum, count) in sorted(sums.items())
    }


@dataclass(frozen=True)
class OccupationDirectionResult:
    """Reversed-direction profile: occupation probabilities in a gendered context."""

    filler: str
    mean_probabilities: dict[str, float]
    excluded: tuple[str, ...]


def occupation_direction_audit(
    scorer: ScorerBase,
    assets: AssetBundle,
    filler: str,
    experiment: Experiment = Experiment.HE_SHE,
    concurrency: int | None = None,
) -> OccupationDirectionResult:
    """Mask the occupation slot instead and average over all templates.

    Multi-token occupation words are excluded from the averages and listed,
    rather than failing the whole profile.
    """
    occupations = assets.occupation_words()
    texts = [
        instantiate_gendered(t, assets.occupations[0], filler)
        for t in assets.templates_for(experiment)
    ]
    queries = [MaskedQuery(text=text, candidates=occupations) for text in texts]
    items = scorer.score_batch(queries, concurrency=concurrency)
    failures = [item for item in items if not item.ok]
    if failures:
        raise BackendError(
            f"{len(failures)}/{len(items)} queries failed; first: {failures[0].error}"
        )

    excluded: set[str] = set()
    totals: dict[str, float] = {occ: 0.0 for occ in occupations}
    for item in items:
        for r in item.results:
            if r.compatible:
                totals[r.candidate] += r.probability
            else:
                excluded.add(r.candidate)
    n = len(texts)
    means = {
        occ: totals[occ] / n for occ in occupations if occ not in excluded
    }
    return OccupationDirectionResult(
        filler=filler,
        mean_probabilities=means,
        excluded=tuple(sorted(excluded)),
    )
