"""Diversified pointer decoder.

Keyphrases are produced one after another. Each phrase restarts the GRU
stack from a state computed from the document vector and the mean
representation of the phrases emitted so far (context modification), and
the attention over graph nodes sees how often each node was already used
(hard coverage). Index ``N`` of every distribution is the end token.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import EncodedDocument
from .errors import AllMasked, EmptyPhrase, IndexOutOfRange, PhraseNotInDocument
from .model import KeyphraseModel


@dataclass
class PhraseContext:
    doc_vector: Tensor
    history_mean: Tensor
    phrases_emitted: list[tuple[int, ...]] = field(default_factory=list)

    @classmethod
    def start(cls, encoded: EncodedDocument) -> "PhraseContext":
        d = encoded.doc_vector.shape[-1]
        return cls(encoded.doc_vector, Tensor(np.zeros(d, dtype=encoded.doc_vector.dtype)))


def init_phrase_state(ctx: PhraseContext, model: KeyphraseModel) -> tuple[Tensor, Tensor]:
    """First decoder input ``y0`` and initial hidden state ``h0`` for a phrase.

    ``history_mean`` may be a single vector or a ``K x d`` stack, giving
    ``K`` phrase starts that share one document vector.
    """
    ybar = ctx.history_mean
    c = ctx.doc_vector
    if ybar.data.ndim == 2:
        c = ad.broadcast_to(c, ybar.shape)
    z = ad.concat([c, ybar], axis=-1)
    y0 = z @ model.ctx_W_y + model.ctx_b_y
    h0 = ad.tanh(z @ model.ctx_W_s + model.ctx_b_s)
    return y0, h0


def candidate_table(encoded: EncodedDocument, model: KeyphraseModel) -> Tensor:
    """Node representations with the end-token vector appended as row ``N``."""
    return ad.concat([encoded.node_reprs, ad.reshape(model.x_end, (1, -1))], axis=0)


def attention_logits(
    h: Tensor,
    node_reprs: Tensor,
    x_end: Tensor,
    coverage,
    model: KeyphraseModel,
    projected: Tensor | None = None,
) -> Tensor:
    """v·tanh(W_h h + W_x x_j + w_c c_j + b) for every node and the end token.

    ``h`` is ``B x d``; ``coverage`` is ``B x N`` (or length ``N``) or None
    when coverage is disabled. ``projected`` can carry a precomputed
    ``(N+1) x att`` candidate projection.
    """
    if projected is None:
        cands = ad.concat([node_reprs, ad.reshape(x_end, (1, -1))], axis=0)
        projected = cands @ model.att_W_x
    squeeze = h.data.ndim == 1
    if squeeze:
        h = ad.reshape(h, (1, -1))
    B = h.shape[0]
    n1, att = projected.shape
    pre = ad.reshape(h @ model.att_W_h, (B, 1, att)) + ad.reshape(projected + model.att_b, (1, n1, att))
    if coverage is not None:
        cov = np.zeros((B, n1), dtype=model.dtype)
        cov[:, : n1 - 1] = np.broadcast_to(np.asarray(coverage, dtype=model.dtype), (B, n1 - 1))
        pre = pre + Tensor(cov[:, :, None]) * model.att_w_c
    e = ad.reshape(ad.tanh(pre) @ ad.reshape(model.att_v, (att, 1)), (B, n1))
    return ad.reshape(e, (n1,)) if squeeze else e


def pointer_distribution(logits: Tensor, mask=None, log: bool = False) -> Tensor:
    """Masked softmax over candidates; masked entries get probability exactly 0."""
    if mask is not None and np.all(np.asarray(mask, dtype=bool), axis=-1).any():
        raise AllMasked("every candidate is masked")
    return ad.log_softmax(logits, mask) if log else ad.softmax(logits, mask)


def end_mask(n_nodes: int, t: int) -> np.ndarray | None:
    """The end token is unavailable at the first step so phrases are non-empty."""
    if t > 1:
        return None
    mask = np.zeros(n_nodes + 1, dtype=bool)
    mask[n_nodes] = True
    return mask


def gru_stack(x: Tensor, state: Sequence[Tensor], model: KeyphraseModel) -> list[Tensor]:
    new_state = []
    inp = x
    for layer, h in zip(model.gru, state):
        inp = ad.gru_cell(inp, h, layer)
        new_state.append(inp)
    return new_state


def decode_step(
    state: Sequence[Tensor],
    prev_input: Tensor,
    encoded: EncodedDocument,
    coverage,
    model: KeyphraseModel,
    t: int,
    log: bool = False,
    projected: Tensor | None = None,
) -> tuple[Tensor, list[Tensor]]:
    """Advance the GRU stack one word and return the pointer distribution.

    Returns probabilities (or log-probabilities with ``log=True``) of shape
    ``B x (N+1)`` together with the new per-layer hidden states.
    """
    new_state = gru_stack(prev_input, state, model)
    cov = coverage if model.config.use_coverage else None
    logits = attention_logits(new_state[-1], encoded.node_reprs, model.x_end, cov, model, projected)
    probs = pointer_distribution(logits, end_mask(encoded.node_count, t), log=log)
    return probs, new_state


def update_coverage(coverage: np.ndarray, phrase: Sequence[int]) -> np.ndarray:
    out = np.array(coverage, dtype=np.int64, copy=True)
    n = out.shape[0]
    for j in phrase:
        if not 0 <= j < n:
            raise IndexOutOfRange(f"node index {j} outside 0..{n - 1}")
        out[j] += 1
    return out


def phrase_representation(phrase: Sequence[int], encoded: EncodedDocument) -> Tensor:
    if len(phrase) == 0:
        raise EmptyPhrase("phrase has no words")
    return ad.mean_rows(encoded.node_reprs[np.asarray(phrase, dtype=np.intp)])


def history_mean(phrases: Sequence[Sequence[int]], encoded: EncodedDocument) -> Tensor:
    """Mean phrase representation of ``phrases``; the zero vector when empty."""
    if not phrases:
        d = encoded.node_reprs.shape[1]
        return Tensor(np.zeros(d, dtype=encoded.node_reprs.dtype))
    reps = [ad.reshape(phrase_representation(p, encoded), (1, -1)) for p in phrases]
    return ad.mean_rows(ad.concat(reps, axis=0))


def phrase_nll(model: KeyphraseModel, encoded: EncodedDocument, phrases: Sequence[Sequence[int]]) -> Tensor:
    """Teacher-forced negative log-likelihood of each phrase, in the given order.

    Phrase ``i`` is conditioned on phrases ``0..i-1`` through the history mean
    and the coverage counts. All phrases of a document are decoded as one
    batch since their conditioning is fully determined by the gold list.
    Returns a length-K tensor of summed token NLLs (end token included).
    """
    N = encoded.node_count
    K = len(phrases)
    for p in phrases:
        if len(p) == 0:
            raise EmptyPhrase("gold phrase has no words")
        if any(not 0 <= j < N for j in p):
            raise PhraseNotInDocument(f"gold phrase {tuple(p)} points outside the {N}-node graph")
    dtype = model.dtype
    X = encoded.node_reprs

    counts = np.zeros((K, N), dtype=dtype)
    for i, p in enumerate(phrases):
        np.add.at(counts[i], np.asarray(p), 1.0)
    before = np.tril(np.ones((K, K), dtype=dtype), k=-1)  # phrases strictly before i
    coverage = before @ counts if model.config.use_coverage else None

    if model.config.use_context and K > 1:
        lengths = np.array([len(p) for p in phrases], dtype=dtype)
        rep_weights = counts / lengths[:, None]  # row i averages the nodes of phrase i
        n_prev = np.maximum(before.sum(axis=1, keepdims=True), 1.0)
        ybar = Tensor((before / n_prev) @ rep_weights) @ X
    else:
        ybar = Tensor(np.zeros((K, X.shape[1]), dtype=dtype))

    y0, h0 = init_phrase_state(PhraseContext(encoded.doc_vector, ybar), model)
    state = [h0] * len(model.gru)
    projected = candidate_table(encoded, model) @ model.att_W_x

    T = max(len(p) for p in phrases) + 1
    total = None
    inp = y0
    for t in range(T):
        logp, state = decode_step(state, inp, encoded, coverage, model, t + 1, log=True, projected=projected)
        targets = np.zeros(K, dtype=np.intp)
        valid = np.zeros(K, dtype=dtype)
        nxt = np.zeros(K, dtype=np.intp)
        for i, p in enumerate(phrases):
            if t < len(p):
                targets[i], valid[i] = p[t], 1.0
                nxt[i] = p[t]
            elif t == len(p):
                targets[i], valid[i] = N, 1.0
        step_nll = -(logp[np.arange(K), targets] * Tensor(valid))
        total = step_nll if total is None else total + step_nll
        if t + 1 < T:
            inp = X[nxt]
    return total
