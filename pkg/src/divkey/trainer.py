"""Teacher-forced maximum-likelihood training."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence, TextIO

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tensor
from .corpus import IngestedDataset, IngestedDocument
from .decoder import phrase_nll
from .encoder import GraphOperators, encode_batch
from .errors import EmptyDataset
from .model import KeyphraseModel, ModelConfig, build_vocab

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 16
    lr_phase1: float = 0.002
    lr_phase2: float = 0.0002
    phase1_steps: int = 6000
    clip: float = 0.1
    dropout_embed: float = 0.1
    dropout_gcn: float = 0.5
    max_epochs: int = 100
    max_steps: int = 0  # 0 = unlimited
    patience: int = 3
    seed: int = 0

    @classmethod
    def full_size(cls) -> "TrainConfig":
        return cls(batch_size=256)

    def lr_at(self, step: int) -> float:
        """Learning rate for 0-based ``step``."""
        return self.lr_phase1 if step < self.phase1_steps else self.lr_phase2

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class Checkpoint:
    model: KeyphraseModel
    train_config: TrainConfig
    step: int = 0
    valid_score: float = math.nan


@dataclass
class TrainLog:
    steps: list[tuple[int, float, float, float]] = field(default_factory=list)
    epochs: list[tuple[int, float]] = field(default_factory=list)
    stream: TextIO | None = None

    def record_step(self, step, lr, loss, norm):
        self.steps.append((step, lr, loss, norm))
        if self.stream is not None:
            self.stream.write(f"{step}\t{lr!r}\t{loss!r}\t{norm!r}\n")

    def record_epoch(self, epoch, valid_loss):
        self.epochs.append((epoch, valid_loss))
        if self.stream is not None:
            self.stream.write(f"{epoch}\t{valid_loss!r}\n")


def _doc_inputs(model: KeyphraseModel, docs: Sequence[IngestedDocument]):
    ops = [GraphOperators.from_graph(d.graph, model.dtype) for d in docs]
    ids = [model.stem_ids(d.graph.node_table.nodes) for d in docs]
    return ops, ids


def batch_loss(
    model: KeyphraseModel,
    docs: Sequence[IngestedDocument],
    orders: Sequence[Sequence[tuple[int, ...]]] | None = None,
    train: bool = False,
    rng: np.random.Generator | None = None,
    config: TrainConfig | None = None,
) -> Tensor:
    """Mean over all gold phrases of the phrase negative log-likelihood.

    ``orders`` optionally gives each document's gold phrases in the order to
    condition on; by default the stored order is used.
    """
    config = config or TrainConfig()
    docs = [d for d in docs if d.golds]
    if not docs:
        raise EmptyDataset("batch has no document with gold phrases")
    ops, ids = _doc_inputs(model, docs)
    encoded = encode_batch(
        model, ops, ids, train=train, rng=rng, dropout_embed=config.dropout_embed, dropout_gcn=config.dropout_gcn
    )
    orders = orders or [d.golds for d in docs]
    total = None
    n_phrases = 0
    for enc, phrases in zip(encoded, orders):
        nll = ad.sum(phrase_nll(model, enc, phrases))
        total = nll if total is None else total + nll
        n_phrases += len(phrases)
    return total * (1.0 / n_phrases)


def compute_loss(
    model: KeyphraseModel, doc: IngestedDocument, gold_phrases=None, train=False, rng=None, config: TrainConfig | None = None
) -> Tensor:
    """Loss of one document with its gold phrases in the given order."""
    order = [tuple(p) for p in (gold_phrases if gold_phrases is not None else doc.golds)]
    return batch_loss(model, [doc], [order], train=train, rng=rng, config=config)


def dataset_loss(model: KeyphraseModel, docs: Sequence[IngestedDocument], batch_size: int = 64) -> float:
    """Eval-mode loss averaged over every gold phrase in ``docs``."""
    docs = [d for d in docs if d.golds]
    if not docs:
        return math.nan
    total = 0.0
    count = 0
    with ad.no_grad():
        for i in range(0, len(docs), batch_size):
            chunk = docs[i : i + batch_size]
            k = sum(len(d.golds) for d in chunk)
            total += float(batch_loss(model, chunk).data) * k
            count += k
    return total / count


def new_model(dataset: IngestedDataset, config: ModelConfig, seed: int = 0, embeddings=None) -> KeyphraseModel:
    vocab = build_vocab(d.doc.stems for d in dataset.documents)
    return KeyphraseModel(config, vocab, seed=seed, embeddings=embeddings)


def train(
    config: TrainConfig,
    train_set: IngestedDataset,
    valid_set: IngestedDataset | None = None,
    model: KeyphraseModel | None = None,
    model_config: ModelConfig | None = None,
    log_stream: TextIO | None = None,
    audit: list | None = None,
    on_epoch: Callable[[int, KeyphraseModel], None] | None = None,
) -> tuple[Checkpoint, TrainLog]:
    """Train with Adam, global-norm clipping and a two-phase learning rate.

    Each step samples the next batch of a per-epoch permutation and shuffles
    every document's gold phrase order. After each epoch the validation loss
    decides early stopping; the best checkpoint is returned.
    """
    docs = [d for d in train_set.documents if d.golds]
    if not docs:
        raise EmptyDataset("training set has no document with gold phrases")
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = new_model(train_set, model_config or ModelConfig(), seed=config.seed)
    params = model.parameters()
    adam = AdamState()
    history = TrainLog(stream=log_stream)

    best = None
    best_score = math.inf
    bad_epochs = 0
    step = 0
    done = False
    for epoch in range(config.max_epochs):
        perm = rng.permutation(len(docs))
        for start in range(0, len(docs), config.batch_size):
            batch = [docs[i] for i in perm[start : start + config.batch_size]]
            orders = [[d.golds[k] for k in rng.permutation(len(d.golds))] for d in batch]
            if audit is not None:
                audit.extend((step, d.doc_id, tuple(o)) for d, o in zip(batch, orders))
            lr = config.lr_at(step)
            loss = batch_loss(model, batch, orders, train=True, rng=rng, config=config)
            loss.backward()
            norm = ad.clip_gradients(params, config.clip)
            ad.adam_step(params, adam, lr)
            if model.freeze_embeddings:
                model.embedding.zero_grad()
            history.record_step(step, lr, float(loss.data), norm)
            step += 1
            if config.max_steps and step >= config.max_steps:
                done = True
                break

        if valid_set is not None and any(d.golds for d in valid_set.documents):
            score = dataset_loss(model, valid_set.documents)
            history.record_epoch(epoch, score)
            log.info("epoch %d valid loss %.5f", epoch, score)
            if score < best_score:
                best_score, best, bad_epochs = score, (model.snapshot(), step), 0
            else:
                bad_epochs += 1
                if bad_epochs >= config.patience:
                    done = True
        if on_epoch is not None:
            on_epoch(epoch, model)
        if done:
            break

    if best is not None:
        arrays, best_step = best
        model.load_arrays(arrays)
        return Checkpoint(model, config, best_step, best_score), history
    return Checkpoint(model, config, step, math.nan), history
