#!/usr/bin/env python3
"""Walk through the probing pipeline: templates -> prompts -> scores -> metric.

Uses the deterministic mock backend, so it runs anywhere; point a
RemoteScorer at the scoring service to do the same against a real
checkpoint.
"""

from biasaudit import (
    Experiment,
    MockScorer,
    audit_experiment,
    instantiate,
    instantiate_gendered,
    load_assets,
    occupation_direction_audit,
)

assets = load_assets()

print("=== The probe set ===")
print(f"{len(assets.templates)} templates across {len(list(Experiment))} experiments,")
print(f"{len(assets.occupations)} occupations, {len(assets.name_pairs)} name pairs.\n")

template = assets.templates_for(Experiment.HE_SHE)[11]
engineer = next(o for o in assets.occupations if o.word == "engineer")
print("A template:", template.text)
print("Forward prompt (mask the gendered term): ", instantiate(template, engineer).text)
print("Reversed prompt (mask the occupation):   ", instantiate_gendered(template, engineer, "he"))
print()

# A mock that leans "he" for stereotypically male-coded occupations and
# "she" for female-coded ones, with a little template-level noise. The
# pronoun-keyed entries drive the reversed direction, where the occupation
# is masked and the gendered term sits in the text.
scorer = MockScorer(
    seed=7,
    base_probability=0.2,
    noise_scale=0.3,
    context_weights={
        "engineer": {"he": 1.2, "she": -1.2},
        "scientist": {"he": 0.8, "she": -0.8},
        "programmer": {"he": 1.0, "she": -1.0},
        "nurse": {"he": -1.4, "she": 1.4},
        "secretary": {"he": -1.0, "she": 1.0},
        "librarian": {"he": -0.7, "she": 0.7},
        "he": {"engineer": 1.1, "programmer": 0.9, "scientist": 0.7,
               "nurse": -1.2, "secretary": -0.9, "librarian": -0.6},
        "she": {"engineer": -1.1, "programmer": -0.9, "scientist": -0.7,
                "nurse": 1.2, "secretary": 0.9, "librarian": 0.6},
    },
)

print("=== Forward direction: P(he) vs P(she) at the mask ===")
outcome = audit_experiment(scorer, assets, Experiment.HE_SHE, model_name="demo-mock")
report = outcome.report
print(f"experiment={report.experiment.value}  N={report.n_sentences}  M={report.n_occupations}")
print(f"headline score (mean |per-occupation log2 ratio|): {report.malor:.4f}\n")

print("most male-leaning occupations (positive mean log ratio):")
ranked = sorted(report.per_occupation_mean_log_ratio.items(), key=lambda kv: -kv[1])
for occ, value in ranked[:3]:
    print(f"  {occ:<12} {value:+.3f}   share(he) = {outcome.shares[occ]:.2f}")
print("most female-leaning:")
for occ, value in ranked[-3:]:
    print(f"  {occ:<12} {value:+.3f}   share(he) = {outcome.shares[occ]:.2f}")
print()

print("=== Reversed direction: which occupation fills the mask? ===")
for filler in ("he", "she"):
    profile = occupation_direction_audit(scorer, assets, filler)
    top = sorted(profile.mean_probabilities.items(), key=lambda kv: -kv[1])[:3]
    print(f'"{filler} ... [MASK]." top occupations: '
          + ", ".join(f"{occ} ({p:.3f})" for occ, p in top))
    if profile.excluded:
        print(f"  excluded (multi-token for this vocab): {profile.excluded}")

print("\nA zero-bias scorer scores everything 0.5, and the metric is exactly 0:")
zero = audit_experiment(MockScorer(), assets, Experiment.HE_SHE, model_name="uniform")
print(f"uniform mock -> {zero.report.malor}")
