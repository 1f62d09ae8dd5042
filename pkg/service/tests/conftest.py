import os

import pytest

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")
os.environ.setdefault("HF_HUB_DISABLE_PROGRESS_BARS", "1")
os.environ.setdefault("TRANSFORMERS_VERBOSITY", "error")

WORDS = """
my friend the a an at in of being to and is was dreams dream wants want
loves love said told works work job firm good great kind busy young
engineer nurse doctor teacher worker manager computer
he she his her him himself herself
michael jennifer timothy cynthia
engine ##s ##er . , ' ! ?
""".split()


@pytest.fixture(scope="session")
def model_root(tmp_path_factory):
    """A checkpoint root holding one tiny random-init uncased BERT."""
    from transformers import BertConfig, BertForMaskedLM, BertTokenizer

    root = tmp_path_factory.mktemp("models")
    tokens = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + WORDS
    vocab = {token: index for index, token in enumerate(tokens)}
    tokenizer = BertTokenizer(vocab=vocab, do_lower_case=True)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=128,
    )
    import torch

    torch.manual_seed(1234)
    model = BertForMaskedLM(config)
    target = root / "tiny-bert"
    model.save_pretrained(target)
    tokenizer.save_pretrained(target)
    return root


@pytest.fixture(scope="session")
def client(model_root):
    from fastapi.testclient import TestClient

    from scorer_service.app import create_app

    with TestClient(create_app(model_dir=model_root)) as c:
        yield c


@pytest.fixture(scope="session")
def pairs_file(tmp_path_factory):
    """100 counterfactual pairs built through the audit toolkit's own CLI."""
    from click.testing import CliRunner

    from biasaudit.cli import main

    tmp = tmp_path_factory.mktemp("pairs")
    corpus = tmp / "corpus.txt"
    lines = []
    for subj in ("He", "She"):
        for adj in ("good", "great", "kind", "busy", "young"):
            for occ in ("engineer", "nurse", "doctor", "teacher"):
                for place in ("firm", "job", "work"):
                    lines.append(f"{subj} dreams of being a {adj} {occ} at the {place}.")
    corpus.write_text("\n".join(lines[:100]) + "\n")
    out = tmp / "pairs.jsonl"
    result = CliRunner().invoke(main, [
        "cda", "build", "--experiment", "he-she",
        "--in", str(corpus), "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    assert len(out.read_text().splitlines()) == 100
    return out
