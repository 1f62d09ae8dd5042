"""biasaudit command line.

Subcommands: audit, cda build, collate, report, vocab-check. Every command
that writes files also writes a manifest capturing the full config, the
asset fingerprint, and the seed, so a run can be reproduced exactly;
with mock or fixture backends a re-run is byte-identical.

Exit codes: 0 success, 2 configuration error, 3 backend error, 4 data error.
Failures print a machine-readable error JSON to stderr.
"""

from __future__ import annotations

import csv
import functools
import json
import sys
from pathlib import Path

import click

from . import __version__
from .analysis import (
    LearningCurve,
    PairedSamples,
    ReportRow,
    SeedRun,
    aggregate_seeds,
    emit_report,
    paired_t_test,
)
from .audit import NA_STATUS, OK_STATUS, AuditConfig, run_audit
from .cda import (
    SwapLexicon,
    build_names_dataset,
    build_pronoun_dataset,
    dataset_stats,
    filter_sentences,
    sample_dataset,
)
from .collate import (
    MaskingPolicy,
    TokenVocab,
    load_sequences_jsonl,
    make_batches,
    write_batches,
)
from .errors import BackendError, BiasAuditError, ConfigError, DataError
from .scoring import ScorerDescriptor, make_scorer
from .templates import Experiment, asset_fingerprint, load_assets

EXPERIMENT_CHOICES = [e.value for e in Experiment]


def _fail(exc: BiasAuditError) -> None:
    if isinstance(exc, ConfigError):
        code = 2
    elif isinstance(exc, BackendError):
        code = 3
    elif isinstance(exc, DataError):
        code = 4
    else:
        code = 1
    payload = {"error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}}
    click.echo(json.dumps(payload), err=True)
    sys.exit(code)


def handled(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except BiasAuditError as exc:
            _fail(exc)

    return wrapper


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _assets_manifest(assets_path: Path | None) -> dict:
    return {
        "path": str(assets_path) if assets_path else "builtin",
        "sha256": asset_fingerprint(assets_path),
    }


@click.group()
@click.version_option(__version__)
@click.option("--assets", "assets_path", type=click.Path(path_type=Path), default=None,
              help="Directory with templates.jsonl / occupations.txt / names.csv (default: shipped).")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None,
              help="Default output location for subcommands.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--concurrency", type=int, default=8, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default=None,
              help="Restrict report emission to one format (default: both).")
@click.pass_context
def main(ctx, assets_path, out_path, seed, concurrency, fmt):
    ctx.obj = {
        "assets_path": assets_path,
        "out_path": out_path,
        "seed": seed,
        "concurrency": concurrency,
        "fmt": fmt or "both",
    }


def _resolve_out(ctx, out_override: Path | None, what: str) -> Path:
    out = out_override or ctx.obj["out_path"]
    if out is None:
        raise ConfigError(f"{what} needs an output path (--out)")
    return Path(out)


def _descriptor(ctx, backend, model, fixture_path, url, mock_config, seed=None) -> ScorerDescriptor:
    return ScorerDescriptor(
        backend=backend,
        model_name=model or {"mock": "mock", "fixture": "fixture", "remote": ""}[backend] or "remote",
        seed=ctx.obj["seed"] if seed is None else seed,
        fixture_path=str(fixture_path) if fixture_path else None,
        endpoint=url,
        concurrency=ctx.obj["concurrency"],
        mock_config_path=str(mock_config) if mock_config else None,
    )


def _scorer_options(func):
    for option in reversed([
        click.option("--scorer", "backend", type=click.Choice(["mock", "fixture", "remote"]),
                     default="mock", show_default=True),
        click.option("--model", default=None, help="Model name (labels reports; selects the remote model)."),
        click.option("--fixture", "fixture_path", type=click.Path(path_type=Path), default=None),
        click.option("--url", envvar="BIASAUDIT_SCORER_URL", default=None,
                     help="Scoring service base URL [env: BIASAUDIT_SCORER_URL]."),
        click.option("--mock-config", type=click.Path(path_type=Path), default=None,
                     help="JSON file with mock bias weights / noise / multi-token words."),
    ]):
        func = option(func)
    return func


@main.command()
@_scorer_options
@click.option("--experiment", "experiments", multiple=True,
              type=click.Choice(EXPERIMENT_CHOICES),
              help="Repeatable; default: all three.")
@click.option("--label", default="before", show_default=True,
              help="Run label used by `report` to build before/after columns.")
@click.option("--out", "out_override", type=click.Path(path_type=Path), default=None)
@click.pass_context
@handled
def audit(ctx, backend, model, fixture_path, url, mock_config, experiments, label, out_override):
    """Score the probe grid and write one bias report per experiment."""
    out = _resolve_out(ctx, out_override, "audit")
    descriptor = _descriptor(ctx, backend, model, fixture_path, url, mock_config)
    chosen = tuple(Experiment(e) for e in experiments) or tuple(Experiment)
    fmt = ctx.obj["fmt"]
    config = AuditConfig(
        scorer=descriptor,
        experiments=chosen,
        seeds=(ctx.obj["seed"],),
        assets_path=ctx.obj["assets_path"],
        output_path=out,
        concurrency=ctx.obj["concurrency"],
        label=label,
    )
    results = run_audit(config)

    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "manifest.json", {
        "command": "audit",
        "label": label,
        "scorer": descriptor.to_manifest(),
        "experiments": [e.value for e in chosen],
        "seed": ctx.obj["seed"],
        "concurrency": ctx.obj["concurrency"],
        "format": fmt,
        "assets": _assets_manifest(ctx.obj["assets_path"]),
        "version": __version__,
    })

    for experiment in chosen:
        [run] = results[experiment]
        outcome = run.outcome
        exp_dir = out / experiment.value
        exp_dir.mkdir(parents=True, exist_ok=True)
        if fmt in ("json", "both"):
            _write_json(exp_dir / "report.json", outcome.to_json_dict())
        if fmt in ("csv", "both"):
            with open(exp_dir / "report.csv", "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(("model", "experiment", "status", "malor", "n", "m", "floored_cells"))
                if outcome.ok:
                    row = outcome.report.to_csv_row()
                    writer.writerow((row[0], row[1], OK_STATUS, *row[2:]))
                else:
                    writer.writerow((outcome.model_name, experiment.value, NA_STATUS, "", "", ""))
        if outcome.ok:
            with open(exp_dir / "shares.csv", "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(("occupation", "male_share"))
                for occ, share in sorted(outcome.shares.items()):
                    writer.writerow((occ, repr(share)))
            click.echo(f"{experiment.value}: malor={outcome.report.malor:.4f} -> {exp_dir}")
        else:
            click.echo(f"{experiment.value}: {NA_STATUS} ({outcome.na_reason}) -> {exp_dir}")


@main.group()
def cda():
    """Counterfactual corpus commands."""


@cda.command("build")
@click.option("--experiment", required=True, type=click.Choice(EXPERIMENT_CHOICES))
@click.option("--in", "in_path", required=True, type=click.Path(path_type=Path, exists=True))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--train-out", type=click.Path(path_type=Path), default=None,
              help="Two-lines-per-pair training text (default: OUT with .txt).")
@click.option("--stats-out", type=click.Path(path_type=Path), default=None,
              help="Dataset stats JSON (default: OUT with .stats.json).")
@click.option("--sample", "sample_n", type=int, default=None,
              help="Down-select to N pairs after building (seeded).")
@click.pass_context
@handled
def cda_build(ctx, experiment, in_path, out_path, train_out, stats_out, sample_n):
    """Filter a line-delimited corpus and emit counterfactual pairs."""
    experiment = Experiment(experiment)
    assets = load_assets(ctx.obj["assets_path"])
    lexicon = SwapLexicon.default(assets.name_pairs)
    occ_words = assets.occupation_words()
    seed = ctx.obj["seed"]

    kept = filter_sentences(in_path, experiment, occ_words, assets.name_pairs)
    if experiment is Experiment.MALE_FEMALE_NAMES:
        dataset = build_names_dataset(
            kept, assets.name_pairs, occ_words, lexicon, provenance=(str(in_path),)
        )
    else:
        dataset = build_pronoun_dataset(
            kept, experiment, lexicon, occ_words, provenance=(str(in_path),)
        )
    if sample_n is not None:
        dataset = sample_dataset(dataset, sample_n, seed)

    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as f:
        for pair in dataset.pairs:
            f.write(json.dumps(pair.to_json_dict()) + "\n")

    train_out = train_out or out_path.with_suffix(".txt")
    with open(train_out, "w", encoding="utf-8") as f:
        for sentence in dataset.sentences():
            f.write(sentence + "\n")

    stats = dataset_stats(dataset, lexicon)
    stats_out = stats_out or out_path.with_suffix(".stats.json")
    _write_json(Path(stats_out), stats.to_json_dict())

    _write_json(out_path.parent / (out_path.stem + ".manifest.json"), {
        "command": "cda build",
        "experiment": experiment.value,
        "in": str(in_path),
        "out": str(out_path),
        "train_out": str(train_out),
        "stats_out": str(stats_out),
        "sample": sample_n,
        "seed": seed,
        "kept_sentences": len(kept),
        "assets": _assets_manifest(ctx.obj["assets_path"]),
        "version": __version__,
    })
    click.echo(f"{experiment.value}: {len(kept)} kept -> {stats.n_pairs} pairs "
               f"({stats.n_sentences} sentences), balance={stats.male_female_token_balance}")


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(path_type=Path, exists=True),
              help='Pre-tokenized JSONL: {"ids": [...], "special_positions": [...]}.')
@click.option("--out", "out_override", type=click.Path(path_type=Path), default=None)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--vocab-size", required=True, type=int)
@click.option("--pad-id", default=0, show_default=True)
@click.option("--mask-id", required=True, type=int)
@click.option("--special-ids", default="", help="Comma-separated extra special token ids.")
@click.option("--select", default=0.15, show_default=True)
@click.option("--mask-frac", default=0.8, show_default=True)
@click.option("--random-frac", default=0.1, show_default=True)
@click.option("--keep-frac", default=0.1, show_default=True)
@click.pass_context
@handled
def collate(ctx, in_path, out_override, batch_size, vocab_size, pad_id, mask_id,
            special_ids, select, mask_frac, random_frac, keep_frac):
    """Build deterministic masked pretraining batches from tokenized text."""
    out = _resolve_out(ctx, out_override, "collate")
    extra = frozenset(int(s) for s in special_ids.split(",") if s.strip())
    vocab = TokenVocab(vocab_size=vocab_size, pad_id=pad_id, mask_id=mask_id, special_ids=extra)
    policy = MaskingPolicy(select=select, mask=mask_frac, random=random_frac, keep=keep_frac)
    seqs = load_sequences_jsonl(in_path)
    batches = make_batches(seqs, ctx.obj["seed"], vocab, policy, batch_size=batch_size)
    manifest_path = write_batches(
        out, batches, ctx.obj["seed"], vocab, policy,
        extra_manifest={
            "command": "collate",
            "in": str(in_path),
            "batch_size": batch_size,
            "n_sequences": len(seqs),
            "version": __version__,
        },
    )
    click.echo(f"{len(batches)} batches -> {manifest_path.parent}")


def _read_csv_map(path: Path, key: str, value: str) -> dict[str, float]:
    out = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out[row[key]] = float(row[value])
    return out


def _scan_runs(runs_dir: Path):
    """Collect audit outcomes, training curves, and accuracy files from a runs tree."""
    audits = []   # (run_name, label, model, experiment, status, malor, shares_path)
    curves = {}
    accuracy_tests = {}
    if not runs_dir.exists():
        return audits, curves, accuracy_tests
    for run_dir in sorted(p for p in runs_dir.iterdir() if p.is_dir()):
        manifest_path = run_dir / "manifest.json"
        if not manifest_path.is_file():
            continue
        manifest = json.loads(manifest_path.read_text())
        command = manifest.get("command")
        if command == "audit":
            model = manifest.get("scorer", {}).get("model_name", "unknown")
            label = manifest.get("label", "before")
            for exp_dir in sorted(p for p in run_dir.iterdir() if p.is_dir()):
                report_path = exp_dir / "report.json"
                if not report_path.is_file():
                    continue
                data = json.loads(report_path.read_text())
                shares_path = exp_dir / "shares.csv"
                audits.append((
                    run_dir.name, label, model, exp_dir.name,
                    data.get("status", OK_STATUS), data.get("malor"),
                    shares_path if shares_path.is_file() else None,
                ))
        elif command == "train":
            curve_path = run_dir / "curve.csv"
            if curve_path.is_file():
                model = manifest.get("model", run_dir.name)
                experiment = manifest.get("experiment", "unknown")
                points = []
                with open(curve_path, newline="") as f:
                    for row in csv.DictReader(f):
                        if row.get("malor"):
                            points.append((int(row["epoch"]), float(row["malor"])))
                if points:
                    curves[f"{model}_{experiment}"] = LearningCurve(tuple(points))
    for acc_path in sorted(runs_dir.glob("*.accuracy.json")):
        data = json.loads(acc_path.read_text())
        name = data.get("name", acc_path.stem)
        accuracy_tests[name] = paired_t_test(
            PairedSamples(tuple(data["before"]), tuple(data["after"]))
        )
    return audits, curves, accuracy_tests


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_override", type=click.Path(path_type=Path), default=None)
@click.pass_context
@handled
def report(ctx, in_path, out_override):
    """Merge audit runs, curves, and accuracies into one report tree."""
    out = _resolve_out(ctx, out_override, "report")
    audits, curves, accuracy_tests = _scan_runs(Path(in_path))

    grouped: dict[tuple[str, str], dict] = {}
    shares = {}
    for run_name, label, model, experiment, status, malor_value, shares_path in audits:
        entry = grouped.setdefault((model, experiment), {"before": [], "after": [], "na": False})
        if status != OK_STATUS:
            entry["na"] = True
            continue
        if label in entry:
            entry[label].append(malor_value)
        share_key = f"{model}_{experiment}_{label}"
        if shares_path is not None and share_key not in shares:
            shares[share_key] = _read_csv_map(shares_path, "occupation", "male_share")

    rows = []
    for (model, experiment), entry in sorted(grouped.items()):
        if entry["na"]:
            rows.append(ReportRow(model=model, experiment=experiment, status="n/a"))
            continue
        before = entry["before"][0] if entry["before"] else None
        after_mean = after_std = None
        n_after = len(entry["after"])
        if n_after >= 2:
            # seeds are positional here; aggregation only uses the values
            runs = [SeedRun(i, v) for i, v in enumerate(entry["after"])]
            after_mean, after_std = aggregate_seeds(runs)
        elif n_after == 1:
            after_mean = entry["after"][0]
        rows.append(ReportRow(
            model=model, experiment=experiment, before=before,
            after_mean=after_mean, after_std=after_std, n_after_runs=n_after,
        ))

    out.mkdir(parents=True, exist_ok=True)
    written = emit_report(out, rows, curves=curves, t_tests=accuracy_tests,
                          shares=shares, fmt=ctx.obj["fmt"])
    _write_json(out / "manifest.json", {
        "command": "report",
        "in": str(in_path),
        "n_rows": len(rows),
        "format": ctx.obj["fmt"],
        "version": __version__,
    })
    click.echo(f"report: {len(rows)} rows, {len(curves)} curves, "
               f"{len(accuracy_tests)} t-tests -> {out}")


@main.command("vocab-check")
@_scorer_options
@click.option("--out", "out_override", type=click.Path(path_type=Path), default=None,
              help="Also write results + manifest to this directory.")
@click.argument("words", nargs=-1, required=True)
@click.pass_context
@handled
def vocab_check_cmd(ctx, backend, model, fixture_path, url, mock_config, out_override, words):
    """Report single- vs multi-token status of words under a backend's tokenizer."""
    descriptor = _descriptor(ctx, backend, model, fixture_path, url, mock_config)
    scorer = make_scorer(descriptor)
    fmt = ctx.obj["fmt"]
    results = [scorer.vocab_check(w) for w in words]
    rows = [
        {"word": r.word, "single_token": r.is_single_token, "pieces": list(r.pieces)}
        for r in results
    ]
    if fmt == "csv":
        writer = csv.writer(sys.stdout)
        writer.writerow(("word", "single_token", "pieces"))
        for r in results:
            writer.writerow((r.word, r.is_single_token, " ".join(r.pieces)))
    else:
        for row in rows:
            click.echo(json.dumps(row))
    out = out_override or ctx.obj["out_path"]
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "vocab_check.json", {"results": rows})
        _write_json(out / "manifest.json", {
            "command": "vocab-check",
            "scorer": descriptor.to_manifest(),
            "words": list(words),
            "seed": ctx.obj["seed"],
            "version": __version__,
        })


if __name__ == "__main__":
    main()
