import numpy as np
import pytest

from divkey.corpus import DatasetRecord, ingest, ingest_record
from divkey.encoder import encode
from divkey.model import KeyphraseModel, ModelConfig, build_vocab
from divkey.synthetic import make_corpus


def tiny_model(docs, seed=0, dtype="float64", **overrides) -> KeyphraseModel:
    """A small model whose vocabulary covers ``docs`` (ingested documents)."""
    cfg = dict(d_in=6, d_h=8, gcn_layers=2, gru_layers=2, dtype=dtype)
    cfg.update(overrides)
    vocab = build_vocab(d.doc.stems for d in docs)
    return KeyphraseModel(ModelConfig(**cfg), vocab, seed=seed)


def jitter(model: KeyphraseModel, scale=0.3, seed=1) -> KeyphraseModel:
    """Move every parameter off its init so zero biases don't hide bugs."""
    rng = np.random.default_rng(seed)
    for p in model.parameters():
        p.data = (p.data + scale * rng.standard_normal(p.shape)).astype(p.data.dtype)
    return model


def small_instance(seed, n_nodes=4):
    words = ["alpha", "beta", "gamma", "delta"][:n_nodes]
    item = ingest_record(DatasetRecord("b", " ".join(words), "", [words[0]]))
    model = jitter(tiny_model([item], seed=seed), scale=1.0, seed=seed + 100)
    return model, encode(model, item.graph)


@pytest.fixture
def toy_item():
    rec = DatasetRecord("t0", "Traffic noise model", "a traffic noise model for city streets", ["traffic noise", "city streets"])
    return ingest_record(rec)


@pytest.fixture
def toy_model(toy_item):
    return jitter(tiny_model([toy_item]))


@pytest.fixture(scope="session")
def synthetic_records():
    return make_corpus(n_docs=8, vocab_size=30, seed=3)


@pytest.fixture(scope="session")
def synthetic_set(synthetic_records):
    return ingest(synthetic_records)


# -- acceptance summary ----------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
