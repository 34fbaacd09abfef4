"""Beam search over graph nodes and sequential multi-phrase extraction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .decoder import (
    PhraseContext,
    candidate_table,
    decode_step,
    history_mean,
    init_phrase_state,
    update_coverage,
)
from .encoder import EncodedDocument, encode
from .graph import WordGraph, build_graph
from .model import KeyphraseModel
from .text import TokenizedDocument, tokenize


@dataclass
class ExtractionConfig:
    beam_width: int = 100
    max_depth: int = 5
    alpha: float = 1.0
    top_m: int = 10

    def __post_init__(self):
        if self.beam_width < 1 or self.max_depth < 1 or self.alpha < 0 or self.top_m < 0:
            raise ValueError(f"invalid extraction config {self}")


@dataclass
class PhraseHypothesis:
    tokens: tuple[int, ...]
    score: float  # s = -log p, end token included once finished
    norm_score: float = float("nan")
    state: list[np.ndarray] | None = field(default=None, repr=False)
    finished: bool = False

    @property
    def length(self) -> int:
        return len(self.tokens)


@dataclass
class ExtractedPhrase:
    words: tuple[str, ...]
    nodes: tuple[int, ...]
    raw_score: float
    norm_score: float

    @property
    def text(self) -> str:
        return " ".join(self.words)


def normalized_score(s: float, length: int, alpha: float) -> float:
    """Length-penalized score ``s / (alpha + length)``; lower is better."""
    return s / (alpha + length)


def rank_finished(hyps: Sequence[PhraseHypothesis], alpha: float) -> list[PhraseHypothesis]:
    """Order finished hypotheses by normalized score, smaller node sequence first on ties."""
    for h in hyps:
        h.norm_score = normalized_score(h.score, h.length, alpha)
    return sorted(hyps, key=lambda h: (h.norm_score, h.tokens))


def _select(scores: np.ndarray, key_of, width: int) -> list[int]:
    """Indices of the ``width`` best candidates by (score, token sequence)."""
    if len(scores) > width:
        cut = np.partition(scores, width - 1)[width - 1]
        pool = np.flatnonzero(scores <= cut)
    else:
        pool = np.arange(len(scores))
    return sorted(pool.tolist(), key=lambda i: (scores[i], key_of(i)))[:width]


def beam_search_phrase(
    model: KeyphraseModel,
    encoded: EncodedDocument,
    ctx: PhraseContext,
    coverage: np.ndarray,
    cfg: ExtractionConfig,
) -> list[PhraseHypothesis]:
    """All finished hypotheses of one phrase search, best normalized score first.

    Pruning keeps the ``beam_width`` best expansions by raw score. Expansions
    that pick the end token leave the beam; hypotheses still alive at
    ``max_depth`` are closed by paying the end token's cost.
    """
    N = encoded.node_count
    END = N
    with ad.no_grad():
        projected = candidate_table(encoded, model) @ model.att_W_x
        y0, h0 = init_phrase_state(ctx, model)
        state = [ad.reshape(h0, (1, -1))] * len(model.gru)
        inputs = ad.reshape(y0, (1, -1))
        live_tokens: list[tuple[int, ...]] = [()]
        live_scores = np.zeros(1)
        finished: list[PhraseHypothesis] = []
        X = encoded.node_reprs.data
        cov = coverage

        for t in range(1, cfg.max_depth + 1):
            logp, new_state = decode_step(state, inputs, encoded, cov, model, t, log=True, projected=projected)
            lp = logp.data.astype(np.float64)
            cand = live_scores[:, None] - lp  # B x (N+1)
            flat = cand.reshape(-1)
            ok = np.flatnonzero(np.isfinite(flat))
            key_of = lambda k: live_tokens[ok[k] // (N + 1)] + (int(ok[k] % (N + 1)),)  # noqa: E731
            chosen = [ok[k] for k in _select(flat[ok], key_of, cfg.beam_width)]

            keep_rows, keep_tokens, keep_scores, next_ids = [], [], [], []
            for i in chosen:
                b, k = divmod(int(i), N + 1)
                if k == END:
                    finished.append(
                        PhraseHypothesis(live_tokens[b], float(flat[i]), state=[s.data[b] for s in new_state], finished=True)
                    )
                else:
                    keep_rows.append(b)
                    keep_tokens.append(live_tokens[b] + (k,))
                    keep_scores.append(float(flat[i]))
                    next_ids.append(k)
            if not keep_rows:
                break
            rows = np.asarray(keep_rows)
            state = [Tensor(s.data[rows]) for s in new_state]
            inputs = Tensor(X[np.asarray(next_ids)])
            live_tokens, live_scores = keep_tokens, np.asarray(keep_scores)
        else:
            # survivors at max depth pay for the end token
            logp, new_state = decode_step(state, inputs, encoded, cov, model, cfg.max_depth + 1, log=True, projected=projected)
            end_cost = -logp.data[:, END].astype(np.float64)
            for b, toks in enumerate(live_tokens):
                finished.append(
                    PhraseHypothesis(toks, float(live_scores[b] + end_cost[b]), state=[s.data[b] for s in new_state], finished=True)
                )
    return rank_finished(finished, cfg.alpha)


def _render(nodes: Sequence[int], graph: WordGraph) -> tuple[str, ...]:
    surfaces = graph.node_table.surfaces or graph.node_table.nodes
    return tuple(surfaces[j] for j in nodes)


def extract_from_graph(model: KeyphraseModel, graph: WordGraph, cfg: ExtractionConfig) -> list[ExtractedPhrase]:
    with ad.no_grad():
        encoded = encode(model, graph, train=False)
    ctx = PhraseContext.start(encoded)
    coverage = np.zeros(graph.node_count, dtype=np.int64)
    emitted: list[ExtractedPhrase] = []
    seen: set[tuple[int, ...]] = set()
    for _ in range(cfg.top_m):
        best = next((h for h in beam_search_phrase(model, encoded, ctx, coverage, cfg) if h.tokens not in seen), None)
        if best is None:
            break
        seen.add(best.tokens)
        emitted.append(ExtractedPhrase(_render(best.tokens, graph), best.tokens, best.score, best.norm_score))
        ctx.phrases_emitted.append(best.tokens)
        coverage = update_coverage(coverage, best.tokens)
        if model.config.use_context:
            with ad.no_grad():
                ctx.history_mean = history_mean(ctx.phrases_emitted, encoded)
    return emitted


def extract_keyphrases(model: KeyphraseModel, doc: str | TokenizedDocument, cfg: ExtractionConfig | None = None) -> list[ExtractedPhrase]:
    """Ranked keyphrases of ``doc``; each later phrase is conditioned on the earlier ones.

    Phrases are deduplicated by stem sequence and rendered with each node's
    most frequent surface form. Fewer than ``top_m`` phrases come back when
    the search runs out of new candidates.
    """
    cfg = cfg or ExtractionConfig()
    if isinstance(doc, str):
        doc = tokenize(doc, max_length=model.config.max_doc_len)
    return extract_from_graph(model, build_graph(doc), cfg)


def format_extraction(doc_id: str, phrases: Sequence[ExtractedPhrase]) -> str:
    return "".join(
        f"{doc_id}\t{rank}\t{p.text}\t{p.raw_score!r}\t{p.norm_score!r}\n" for rank, p in enumerate(phrases, start=1)
    )
