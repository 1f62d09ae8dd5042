#!/usr/bin/env python3
"""Aggregate multi-seed runs, detect convergence, and test significance.

Ends by writing a report tree (JSON + CSV + plot-data files) to a temp
directory, the same shapes `biasaudit report` produces.
"""

import tempfile
from pathlib import Path

from biasaudit import (
    LearningCurve,
    PairedSamples,
    ReportRow,
    SeedRun,
    aggregate_seeds,
    convergence,
    emit_report,
    gender_share,
    paired_t_test,
)

print("=== Multi-seed aggregation (mean +- sample std) ===")
runs = [SeedRun(seed, value) for seed, value in
        [(11, 0.071), (12, 0.095), (13, 0.080), (14, 0.066), (15, 0.089)]]
mean, std = aggregate_seeds(runs)
print(f"5 debiasing runs -> {mean:.4f} +- {std:.4f}\n")

print("=== Convergence: tail within 10% of the minimum ===")
curve = LearningCurve(tuple(
    (epoch, 0.08 + 1.2 * 0.82**epoch) for epoch in range(1, 61)
))
result = convergence(curve, window=10)
print(f"converged={result.converged}  "
      f"first epoch within 1.1*min: {result.first_epoch_within_10pct}  "
      f"(threshold {result.threshold:.4f})")
flat = LearningCurve(((1, 0.4), (2, 0.2), (3, 0.4)))
print(f"curve ending at 2x its minimum: converged={convergence(flat, window=1).converged}\n")

print("=== Paired t-test on downstream accuracies (alpha = 0.01) ===")
before = (0.9232, 0.9219, 0.9241, 0.9227, 0.9238, 0.9230, 0.9225, 0.9236, 0.9229, 0.9234)
after = (0.9239, 0.9222, 0.9235, 0.9231, 0.9242, 0.9228, 0.9231, 0.9240, 0.9226, 0.9238)
test = paired_t_test(PairedSamples(before, after))
print(f"t={test.t:.4f}  df={test.df}  p={test.p_two_sided:.4f}  "
      f"significant at 0.01: {test.significant()}")
print("(fail to reject: debiasing did not change downstream accuracy)\n")

print("=== Probability shares for the plots ===")
for occ, p_he, p_she in (("engineer", 0.31, 0.08), ("nurse", 0.05, 0.27), ("teacher", 0.12, 0.13)):
    print(f"  {occ:<9} share(he) = {gender_share(p_he, p_she):.2f}")
print()

rows = [
    ReportRow(model="demo-model", experiment="he-she",
              before=1.2725, after_mean=mean, after_std=std, n_after_runs=len(runs)),
    ReportRow(model="demo-model", experiment="male-female-names", status="n/a"),
]
shares = {"demo-model_he-she_before": {"engineer": 0.795, "nurse": 0.156, "teacher": 0.48},
          "demo-model_he-she_after": {"engineer": 0.53, "nurse": 0.47, "teacher": 0.50}}
with tempfile.TemporaryDirectory() as tmp:
    written = emit_report(Path(tmp), rows,
                          curves={"demo-model_he-she": curve},
                          t_tests={"demo-model_he-she_sst2": test},
                          shares=shares)
    print("=== Report tree ===")
    for path in written:
        print(f"  {path.relative_to(tmp)}")
    print()
    print((Path(tmp) / "report.csv").read_text().strip())
