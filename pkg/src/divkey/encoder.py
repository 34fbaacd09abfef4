"""Graph convolutional encoder with residual gated linear units."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import WordGraph
from .model import AggWeights, GCNLayer, KeyphraseModel


@dataclass
class EncodedDocument:
    node_reprs: Tensor  # H_L rows (dropped out in training), N x d_h
    agg: Tensor  # batch-normalized last-layer aggregation, N x d_h
    doc_vector: Tensor  # d_h

    @property
    def node_count(self) -> int:
        return self.node_reprs.shape[0]


@dataclass(frozen=True)
class GraphOperators:
    """Normalized backward/forward adjacency as constant tensors."""

    bwd: Tensor
    fwd: Tensor

    @classmethod
    def from_graph(cls, graph: WordGraph, dtype) -> "GraphOperators":
        return cls(Tensor(graph.a_bwd_norm.astype(dtype)), Tensor(graph.a_fwd_norm.astype(dtype)))


def gcn_aggregate(H: Tensor, ops: GraphOperators, w: AggWeights) -> Tensor:
    """Â← H W← + Â→ H W→ + H W."""
    if H.shape[0] != ops.fwd.shape[0]:
        raise ad.ShapeMismatch(f"H has {H.shape[0]} rows, graph has {ops.fwd.shape[0]} nodes")
    return ops.bwd @ (H @ w.bwd) + ops.fwd @ (H @ w.fwd) + H @ w.self_


def gcn_layer(H: Tensor, ops: GraphOperators, layer: GCNLayer, residual: bool) -> Tensor:
    f = gcn_aggregate(H, ops, layer.f)
    g = gcn_aggregate(H, ops, layer.g) + layer.g_bias
    out = f * ad.sigmoid(g)
    return H + out if residual else out


def _as_ops(graph, dtype) -> GraphOperators:
    return graph if isinstance(graph, GraphOperators) else GraphOperators.from_graph(graph, dtype)


def encode_batch(
    model: KeyphraseModel,
    graphs: Sequence[WordGraph | GraphOperators],
    node_ids: Sequence[np.ndarray],
    train: bool = False,
    rng: np.random.Generator | None = None,
    dropout_embed: float = 0.1,
    dropout_gcn: float = 0.5,
) -> list[EncodedDocument]:
    """Encode several documents.

    Each graph is convolved on its own. Batch normalization of the final
    aggregation pools the nodes of every document in the call, so in
    training the document vectors stay informative (normalizing each
    document over its own nodes would make every column mean equal the BN
    shift).
    """
    dtype = model.dtype
    finals, aggs = [], []
    for graph, ids in zip(graphs, node_ids):
        ops = _as_ops(graph, dtype)
        H = ad.dropout(ad.take_rows(model.embedding, ids), dropout_embed, rng, train)
        for l, layer in enumerate(model.gcn):
            H = gcn_layer(H, ops, layer, residual=l > 0)
        finals.append(H)
        aggs.append(gcn_aggregate(H, ops, model.readout))

    sizes = np.cumsum([a.shape[0] for a in aggs])
    pooled = ad.batch_norm(ad.concat(aggs, axis=0), model.bn_gamma, model.bn_beta, model.bn_stats, train)
    out = []
    start = 0
    for H, stop in zip(finals, sizes):
        agg = pooled[start:stop]
        start = stop
        out.append(EncodedDocument(ad.dropout(H, dropout_gcn, rng, train), agg, ad.mean_rows(agg)))
    return out


def encode(model: KeyphraseModel, graph: WordGraph, train: bool = False, rng=None, **dropouts) -> EncodedDocument:
    ids = model.stem_ids(graph.node_table.nodes)
    return encode_batch(model, [graph], [ids], train=train, rng=rng, **dropouts)[0]
