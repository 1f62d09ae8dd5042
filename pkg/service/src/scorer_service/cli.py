"""scorer-service command line: serve the HTTP API or run continued pretraining."""

from __future__ import annotations

import os
from pathlib import Path

import click

from biasaudit.templates import Experiment


@click.group()
def main():
    """Masked-LM scoring service and debiasing training runner."""
    # keep tqdm bars out of server logs and captured CLI output
    os.environ.setdefault("HF_HUB_DISABLE_PROGRESS_BARS", "1")


@main.command()
@click.option("--model-dir", type=click.Path(path_type=Path), default=None,
              help="Checkpoint root [env: SCORER_MODEL_DIR].")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=None, help="Port [env: SCORER_PORT, default 8300].")
@click.option("--max-models", type=int, default=None,
              help="Resident checkpoints per process [env: SCORER_MAX_MODELS, default 1].")
def serve(model_dir, host, port, max_models):
    """Run the scoring API (endpoints /v1/score, /v1/tokenize, /v1/health)."""
    import uvicorn

    from .app import create_app

    port = port or int(os.environ.get("SCORER_PORT", "8300"))
    app = create_app(model_dir=model_dir, max_models=max_models)
    uvicorn.run(app, host=host, port=port)


def _resolve_model_path(value: Path) -> Path:
    """A checkpoint path, or a model name under SCORER_MODEL_DIR."""
    if value.is_dir():
        return value
    root = os.environ.get("SCORER_MODEL_DIR")
    if root and (Path(root) / value).is_dir():
        return Path(root) / value
    raise click.BadParameter(f"no checkpoint directory at {value}")


@main.command()
@click.option("--pairs", "pairs_path", type=click.Path(path_type=Path, exists=True), default=None,
              help="Counterfactual pairs.jsonl from `biasaudit cda build`.")
@click.option("--batches", "batches_dir", type=click.Path(path_type=Path, exists=True), default=None,
              help="Pre-collated batch directory from `biasaudit collate` "
                   "(static corruption; ids must match the model's tokenizer).")
@click.option("--model", "model_path", required=True, type=click.Path(path_type=Path),
              help="Checkpoint directory, or a model name under SCORER_MODEL_DIR.")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--epochs", default=200, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--lr", "base_lr", default=2e-5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--eval-every", default=0, show_default=True,
              help="Audit the model every N epochs (0 disables).")
@click.option("--eval-experiment", default=Experiment.HE_SHE.value,
              type=click.Choice([e.value for e in Experiment]), show_default=True)
@click.option("--assets", "assets_path", type=click.Path(path_type=Path), default=None,
              help="Probe assets for the bias monitor (default: shipped).")
@click.option("--max-steps", type=int, default=None,
              help="Stop after this many optimizer steps (smoke runs).")
@click.option("--device", default="cpu", show_default=True)
def train(pairs_path, batches_dir, model_path, out_dir, epochs, batch_size, base_lr,
          seed, eval_every, eval_experiment, assets_path, max_steps, device):
    """Continue pretraining on a gender-balanced pair file; writes
    checkpoint/ and curve.csv (epoch, loss, bias score)."""
    from .train import TrainConfig, train as run_train

    if (pairs_path is None) == (batches_dir is None):
        raise click.UsageError("give exactly one of --pairs / --batches")
    checkpoint = run_train(TrainConfig(
        pairs_path=pairs_path,
        batches_dir=batches_dir,
        model_path=_resolve_model_path(model_path),
        out_dir=out_dir,
        epochs=epochs,
        batch_size=batch_size,
        base_lr=base_lr,
        seed=seed,
        eval_every=eval_every,
        eval_experiment=Experiment(eval_experiment),
        assets_path=assets_path,
        max_steps=max_steps,
        device=device,
    ))
    click.echo(f"checkpoint -> {checkpoint}")


if __name__ == "__main__":
    main()
