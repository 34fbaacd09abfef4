"""Directed proximity word graphs.

Every pair of token offsets contributes ``1 / distance`` to the edge between
their stems, but only in the direction of reading (forward graph) or against
it (backward graph). The raw matrices are then re-normalized with self loops
so their spectrum stays bounded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .text import NodeTable, TokenizedDocument, build_nodes


@dataclass(frozen=True)
class WordGraph:
    node_table: NodeTable
    a_fwd: np.ndarray
    a_bwd: np.ndarray
    a_fwd_norm: np.ndarray
    a_bwd_norm: np.ndarray

    @property
    def node_count(self) -> int:
        return self.node_table.node_count

    def edges(self):
        """Yield ``(i, j, w_fwd, w_bwd)`` for every pair with a nonzero raw weight."""
        n = self.node_count
        for i in range(n):
            for j in range(n):
                wf, wb = self.a_fwd[i, j], self.a_bwd[i, j]
                if wf != 0.0 or wb != 0.0:
                    yield i, j, float(wf), float(wb)


def build_adjacency(nodes: NodeTable) -> tuple[np.ndarray, np.ndarray]:
    """Raw forward and backward proximity matrices.

    ``a_fwd[i, j]`` sums ``1 / (p_j - p_i)`` over offset pairs where word j
    follows word i; pairs at the same offset contribute nothing.
    """
    n = nodes.node_count
    length = sum(len(p) for p in nodes.positions)
    owner = np.empty(length, dtype=np.intp)
    for i, pos in enumerate(nodes.positions):
        owner[list(pos)] = i

    offsets = np.arange(length)
    dist = offsets[None, :] - offsets[:, None]  # dist[p, q] = q - p
    with np.errstate(divide="ignore"):
        inv = np.where(dist > 0, 1.0 / np.where(dist == 0, 1, dist), 0.0)

    # scatter token-level weights onto node pairs: onehot.T @ inv @ onehot
    onehot = np.zeros((length, n))
    onehot[offsets, owner] = 1.0
    a_fwd = onehot.T @ inv @ onehot
    return a_fwd, a_fwd.T.copy()


def normalize(a: np.ndarray) -> np.ndarray:
    """Symmetric re-normalization ``D^-1/2 (A + I) D^-1/2`` with row-sum degrees."""
    a = np.asarray(a, dtype=np.float64)
    a_tilde = a + np.eye(a.shape[0])
    d_inv_sqrt = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    return a_tilde * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


def build_graph(doc: TokenizedDocument) -> WordGraph:
    table = build_nodes(doc)
    a_fwd, a_bwd = build_adjacency(table)
    return WordGraph(table, a_fwd, a_bwd, normalize(a_fwd), normalize(a_bwd))


def format_edge_list(graph: WordGraph) -> str:
    nodes = graph.node_table.nodes
    lines = [f"{nodes[i]}\t{nodes[j]}\t{wf!r}\t{wb!r}" for i, j, wf, wb in graph.edges()]
    return "\n".join(lines) + ("\n" if lines else "")
