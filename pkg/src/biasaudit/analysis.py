"""Multi-seed aggregation, convergence detection, paired testing, reports.

The paired t-test computes its two-sided p-value from the Student-t CDF via
an in-house continued-fraction regularized incomplete beta (tolerance 1e-10),
so nothing here depends on a statistics library at runtime. Differences are
taken as before - after. Significance is declared iff p < 0.01.

A learning curve counts as converged when the mean of its last ``window``
points lies within 10% of the curve's minimum (i.e. <= 1.1 * min).

Report emission writes deterministic, stable-ordered CSV/JSON; rendering is
left to the user's plotting tools.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import (
    ConfigError,
    DataError,
    DegenerateVariance,
    NonPositiveProbability,
    TooFewRuns,
    ZeroMass,
)

ALPHA = 0.01
DEFAULT_CONVERGENCE_WINDOW = 10
_BETA_TOL = 1e-10
_BETA_MAX_ITER = 500


@dataclass(frozen=True)
class SeedRun:
    """One debiasing (or fine-tuning) run's headline number for a seed."""

    seed: int
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise DataError(f"seed {self.seed}: value must be finite, got {self.value!r}")


def aggregate_seeds(runs: Sequence[SeedRun]) -> tuple[float, float]:
    """Arithmetic mean and sample standard deviation (n-1) over seed runs."""
    if len(runs) < 2:
        raise TooFewRuns(f"need at least 2 runs, got {len(runs)}")
    values = [r.value for r in runs]
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


@dataclass(frozen=True)
class LearningCurve:
    """Per-epoch metric values with strictly increasing epochs."""

    points: tuple[tuple[int, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple((int(e), float(v)) for e, v in self.points))
        epochs = [e for e, _ in self.points]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise DataError("curve epochs must be strictly increasing")
        if any(v < 0 for _, v in self.points):
            raise DataError("curve values must be >= 0")

    def values(self) -> list[float]:
        return [v for _, v in self.points]


@dataclass(frozen=True)
class ConvergenceResult:
    converged: bool
    first_epoch_within_10pct: int
    threshold: float


def convergence(curve: LearningCurve, window: int = DEFAULT_CONVERGENCE_WINDOW) -> ConvergenceResult:
    """Tail-within-10%-of-minimum convergence check.

    Converged iff the mean of the last ``window`` points (clamped to the
    curve length) is <= 1.1 * min(curve). Also reports the first epoch whose
    value is already inside that band.
    """
    if not curve.points:
        raise DataError("curve is empty")
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    values = curve.values()
    threshold = 1.1 * min(values)
    tail = values[-min(window, len(values)):]
    first_epoch = next(e for e, v in curve.points if v <= threshold)
    return ConvergenceResult(
        converged=sum(tail) / len(tail) <= threshold,
        first_epoch_within_10pct=first_epoch,
        threshold=threshold,
    )


# -- paired t-test -------------------------------------------------------------


@dataclass(frozen=True)
class PairedSamples:
    before: tuple[float, ...]
    after: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "before", tuple(float(v) for v in self.before))
        object.__setattr__(self, "after", tuple(float(v) for v in self.after))
        if len(self.before) != len(self.after):
            raise DataError(
                f"paired samples differ in length: {len(self.before)} vs {len(self.after)}"
            )
        if len(self.before) < 2:
            raise DataError("paired test needs at least 2 pairs")


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p_two_sided: float

    def significant(self, alpha: float = ALPHA) -> bool:
        return self.p_two_sided < alpha


def is_significant(p: float, alpha: float = ALPHA) -> bool:
    return p < alpha


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Lentz's method for the incomplete-beta continued fraction."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_TOL:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) to ~1e-10, via the symmetric continued-fraction split."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x in (0.0, 1.0):
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: int) -> float:
    """P(|T| >= |t|) for T ~ Student-t(df), via I_x(df/2, 1/2)."""
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def paired_t_test(samples: PairedSamples) -> TTestResult:
    """Classic paired t on before - after differences.

    All-zero differences give (t=0, p=1); zero variance around a nonzero
    mean raises DegenerateVariance instead of reporting an infinite t.
    """
    diffs = [b - a for b, a in zip(samples.before, samples.after)]
    n = len(diffs)
    mean_d = sum(diffs) / n
    var = sum((d - mean_d) ** 2 for d in diffs) / (n - 1)
    sd = math.sqrt(var)
    if sd == 0.0:
        if mean_d == 0.0:
            return TTestResult(t=0.0, df=n - 1, p_two_sided=1.0)
        raise DegenerateVariance(
            f"all differences equal {mean_d!r}; the t statistic is unbounded"
        )
    t = mean_d / (sd / math.sqrt(n))
    return TTestResult(t=t, df=n - 1, p_two_sided=student_t_two_sided_p(t, n - 1))


def gender_share(p_male: float, p_female: float) -> float:
    """Male share of the pair mass, p_male / (p_male + p_female); 0.5 is neutral.

    The only place probabilities are renormalized over the candidate pair;
    it exists for the probability-share plots.
    """
    for value, what in ((p_male, "p_male"), (p_female, "p_female")):
        if not math.isfinite(value) or value < 0.0:
            raise NonPositiveProbability(f"{what} must be finite and >= 0, got {value!r}")
    total = p_male + p_female
    if total <= 0.0:
        raise ZeroMass("p_male + p_female must be > 0")
    return p_male / total


# -- report emission -----------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    """One model x experiment line of the before/after summary table."""

    model: str
    experiment: str
    before: float | None = None
    after_mean: float | None = None
    after_std: float | None = None
    n_after_runs: int = 0
    status: str = "ok"  # "ok" or "n/a"

    def to_json_dict(self) -> dict:
        return {
            "model": self.model,
            "experiment": self.experiment,
            "status": self.status,
            "before": _round4(self.before),
            "after_mean": _round4(self.after_mean),
            "after_std": _round4(self.after_std),
            "n_after_runs": self.n_after_runs,
        }


def _round4(value: float | None) -> float | None:
    return None if value is None else round(value, 4)


def _fmt(value: float | None, status: str) -> str:
    if status != "ok":
        return "N/A"
    return "" if value is None else f"{value:.4f}"


def emit_report(
    out_dir: Path | str,
    rows: Sequence[ReportRow] = (),
    curves: Mapping[str, LearningCurve] | None = None,
    t_tests: Mapping[str, TTestResult] | None = None,
    shares: Mapping[str, Mapping[str, float]] | None = None,
    fmt: str = "both",
) -> list[Path]:
    """Write report.json/report.csv plus per-figure plot-data CSVs.

    ``curves`` and ``shares`` are keyed by the output file stem (e.g.
    "bert-base_he-she" or "bert-base_he-she_before"). Outputs are sorted and
    timestamp-free, so identical inputs give byte-identical files.
    """
    if fmt not in ("json", "csv", "both"):
        raise ConfigError(f"format must be json, csv, or both, got {fmt!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    rows = sorted(rows, key=lambda r: (r.model, r.experiment))
    curves = dict(curves or {})
    t_tests = dict(t_tests or {})
    shares = dict(shares or {})

    if fmt in ("json", "both"):
        payload = {
            "malor": [r.to_json_dict() for r in rows],
            "t_tests": {
                name: {
                    "t": round(res.t, 6),
                    "df": res.df,
                    "p_two_sided": round(res.p_two_sided, 6),
                    "significant_at_0.01": res.significant(),
                }
                for name, res in sorted(t_tests.items())
            },
            "curves": sorted(curves),
            "shares": sorted(shares),
        }
        path = out_dir / "report.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        written.append(path)

    if fmt in ("csv", "both"):
        path = out_dir / "report.csv"
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(
                ["model", "experiment", "status", "before", "after_mean", "after_std", "n_after_runs"]
            )
            for r in rows:
                writer.writerow(
                    [
                        r.model,
                        r.experiment,
                        r.status,
                        _fmt(r.before, r.status),
                        _fmt(r.after_mean, r.status),
                        _fmt(r.after_std, r.status),
                        r.n_after_runs,
                    ]
                )
        written.append(path)

    if curves:
        curve_dir = out_dir / "curves"
        curve_dir.mkdir(exist_ok=True)
        for name, curve in sorted(curves.items()):
            path = curve_dir / f"{name}.csv"
            with open(path, "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(["epoch", "value"])
                for epoch, value in curve.points:
                    writer.writerow([epoch, repr(value)])
            written.append(path)

    if shares:
        share_dir = out_dir / "shares"
        share_dir.mkdir(exist_ok=True)
        for name, mapping in sorted(shares.items()):
            path = share_dir / f"{name}.csv"
            with open(path, "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(["occupation", "male_share"])
                for occ, share in sorted(mapping.items()):
                    writer.writerow([occ, repr(float(share))])
            written.append(path)

    return written
