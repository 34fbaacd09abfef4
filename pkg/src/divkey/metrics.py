"""Keyphrase evaluation metrics, a Tf-Idf baseline and corpus-level reports."""

from __future__ import annotations

import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import IngestedDataset, IngestedDocument
from .errors import EmptyDataset
from .text import TokenizedDocument, build_nodes, stem_phrase


def _hits(preds, golds, cutoff: int) -> list[int]:
    """Binary relevance of the top-``cutoff`` predictions; each gold credits once."""
    remaining = {stem_phrase(g) for g in golds}
    rel = []
    for p in list(preds)[:cutoff]:
        key = stem_phrase(p)
        rel.append(int(key in remaining))
        remaining.discard(key)
    return rel


def _unique_golds(golds) -> int:
    return len({stem_phrase(g) for g in golds})


def prf_at(preds, golds, cutoff: int) -> tuple[float, float, float]:
    """Precision, recall and F1 of the top ``cutoff`` predictions."""
    rel = _hits(preds, golds, cutoff)
    n_gold = _unique_golds(golds)
    if not rel or n_gold == 0:
        return 0.0, 0.0, 0.0
    correct = sum(rel)
    p = correct / len(rel)
    r = correct / n_gold
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def ndcg_at(preds, golds, cutoff: int) -> float:
    rel = _hits(preds, golds, cutoff)
    dcg = sum(r / math.log2(i + 2) for i, r in enumerate(rel))
    ideal = min(_unique_golds(golds), cutoff)
    idcg = sum(1.0 / math.log2(i + 2) for i in range(ideal))
    return dcg / idcg if idcg > 0 else 0.0


def aic_at(preds, cutoff: int) -> float:
    """Index of coincidence of the stemmed words pooled from the top phrases.

    The probability that two words drawn without replacement from the pool
    share a stem; 0 when fewer than two words are pooled.
    """
    bag = Counter(s for p in list(preds)[:cutoff] for s in stem_phrase(p))
    total = sum(bag.values())
    if total < 2:
        return 0.0
    return sum(f * (f - 1) for f in bag.values()) / (total * (total - 1))


# -- baseline --------------------------------------------------------------

def document_frequencies(docs: Iterable[TokenizedDocument]) -> tuple[Counter, int]:
    df = Counter()
    n = 0
    for doc in docs:
        df.update(set(doc.stems))
        n += 1
    return df, n


def tfidf_baseline(doc: TokenizedDocument, doc_freqs: Counter, total_docs: int, max_phrases: int = 10) -> list[tuple[str, ...]]:
    """Top unigrams by ``tf * ln((D + 1) / (df + 1))``; earlier first occurrence breaks ties."""
    table = build_nodes(doc)
    scored = []
    for i, st in enumerate(table.nodes):
        tf = len(table.positions[i])
        idf = math.log((total_docs + 1) / (doc_freqs.get(st, 0) + 1))
        scored.append((-tf * idf, table.positions[i][0], table.surfaces[i]))
    scored.sort()
    return [(surface,) for _, _, surface in scored[:max_phrases]]


class TfidfExtractor:
    def __init__(self, corpus: Iterable[TokenizedDocument], max_phrases: int = 10):
        self.doc_freqs, self.total_docs = document_frequencies(corpus)
        self.max_phrases = max_phrases

    def __call__(self, item: IngestedDocument) -> list[tuple[str, ...]]:
        return tfidf_baseline(item.doc, self.doc_freqs, self.total_docs, self.max_phrases)


class ModelExtractor:
    def __init__(self, model, cfg=None):
        from .beam import ExtractionConfig

        self.model = model
        self.cfg = cfg or ExtractionConfig()

    def __call__(self, item: IngestedDocument) -> list[tuple[str, ...]]:
        from .beam import extract_from_graph

        return [p.words for p in extract_from_graph(self.model, item.graph, self.cfg)]


# -- reports ---------------------------------------------------------------

@dataclass
class DocScores:
    doc_id: str
    prf: dict[int, tuple[float, float, float]]
    ndcg10: float
    aic: dict[int, float]


@dataclass
class EvalReport:
    cutoffs: tuple[int, ...]
    precision: dict[int, float]
    recall: dict[int, float]
    f1: dict[int, float]
    ndcg10: float
    aic: dict[int, float]
    docs: int
    per_doc: list[DocScores] = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {
            "f1@5": self.f1[5],
            "f1@10": self.f1[10],
            "p@5": self.precision[5],
            "r@5": self.recall[5],
            "ndcg@10": self.ndcg10,
            "aic@5": self.aic[5],
            "aic@10": self.aic[10],
            "docs": self.docs,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=False)

    def to_text(self) -> str:
        rows = [("docs", str(self.docs))]
        for k in self.cutoffs:
            rows += [(f"P@{k}", f"{self.precision[k]:.4f}"), (f"R@{k}", f"{self.recall[k]:.4f}"), (f"F1@{k}", f"{self.f1[k]:.4f}")]
        rows.append(("NDCG@10", f"{self.ndcg10:.4f}"))
        rows += [(f"AIC@{k}", f"{self.aic[k]:.4f}") for k in sorted(self.aic)]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows) + "\n"


def score_document(doc_id: str, preds, golds, cutoffs: Sequence[int]) -> DocScores:
    ks = sorted(set(cutoffs) | {5, 10})
    return DocScores(
        doc_id,
        {k: prf_at(preds, golds, k) for k in ks},
        ndcg_at(preds, golds, 10),
        {k: aic_at(preds, k) for k in (5, 10)},
    )


def aggregate(scores: Sequence[DocScores], cutoffs: Sequence[int] = (5, 10)) -> EvalReport:
    """Macro averages (unweighted mean over documents)."""
    if not scores:
        raise EmptyDataset("no scored documents")
    n = len(scores)
    ks = sorted(set(cutoffs) | {5, 10})

    def mean(values):
        return sum(values) / n

    return EvalReport(
        cutoffs=tuple(sorted(set(cutoffs))),
        precision={k: mean(s.prf[k][0] for s in scores) for k in ks},
        recall={k: mean(s.prf[k][1] for s in scores) for k in ks},
        f1={k: mean(s.prf[k][2] for s in scores) for k in ks},
        ndcg10=mean(s.ndcg10 for s in scores),
        aic={k: mean(s.aic[k] for s in scores) for k in (5, 10)},
        docs=n,
        per_doc=list(scores),
    )


def evaluate_corpus(extractor, dataset: IngestedDataset, cutoffs: Sequence[int] = (5, 10), threads: int = 1) -> EvalReport:
    """Run ``extractor`` on every scorable document and macro-average the metrics.

    ``extractor`` maps an ingested document to ranked phrases (token
    tuples); a :class:`KeyphraseModel` is wrapped automatically. Documents
    without a present gold phrase are skipped.
    """
    from .model import KeyphraseModel

    if isinstance(extractor, KeyphraseModel):
        extractor = ModelExtractor(extractor)
    items = [d for d in dataset.documents if d.gold_tokens and not d.skipped]
    if not items:
        raise EmptyDataset("no document with a present gold keyphrase")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            preds = list(pool.map(extractor, items))
    else:
        preds = [extractor(d) for d in items]
    scores = [score_document(d.doc_id, p, d.gold_tokens, cutoffs) for d, p in zip(items, preds)]
    return aggregate(scores, cutoffs)
