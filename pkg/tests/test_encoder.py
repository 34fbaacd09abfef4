from types import SimpleNamespace

import numpy as np
import pytest

from divkey import autodiff as ad
from divkey.autodiff import Parameter, Tensor
from divkey.corpus import DatasetRecord, ingest_record
from divkey.encoder import GraphOperators, encode, encode_batch, gcn_aggregate, gcn_layer
from divkey.errors import ShapeMismatch
from divkey.graph import build_graph
from divkey.model import AggWeights, GCNLayer
from divkey.text import TokenizedDocument, tokenize

from conftest import jitter, tiny_model


def agg(rng, d_in, d_out, scale=1.0):
    return AggWeights(*(Parameter(scale * rng.standard_normal((d_in, d_out))) for _ in range(3)))


def ops_for(text):
    return GraphOperators.from_graph(build_graph(tokenize(text)), np.float64)


def test_single_node_identity_weights_triple():
    ops = GraphOperators(Tensor(np.ones((1, 1))), Tensor(np.ones((1, 1))))
    eye = np.eye(3)
    w = AggWeights(Tensor(eye), Tensor(eye), Tensor(eye))
    h = np.array([[1.0, -2.0, 0.5]])
    np.testing.assert_array_equal(gcn_aggregate(Tensor(h), ops, w).data, 3 * h)


def test_self_term_only():
    rng = np.random.default_rng(0)
    ops = ops_for("a b c a")
    W = rng.standard_normal((4, 5))
    w = AggWeights(Tensor(np.zeros((4, 5))), Tensor(np.zeros((4, 5))), Tensor(W))
    H = rng.standard_normal((3, 4))
    np.testing.assert_allclose(gcn_aggregate(Tensor(H), ops, w).data, H @ W, atol=1e-14)


def test_aggregate_against_dense_oracle():
    rng = np.random.default_rng(1)
    g = build_graph(tokenize("x y z y x"))
    ops = GraphOperators.from_graph(g, np.float64)
    w = agg(rng, 4, 2)
    H = rng.standard_normal((3, 4))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(3):
            expected[i] += g.a_bwd_norm[i, j] * (H[j] @ w.bwd.data) + g.a_fwd_norm[i, j] * (H[j] @ w.fwd.data)
        expected[i] += H[i] @ w.self_.data
    assert np.max(np.abs(gcn_aggregate(Tensor(H), ops, w).data - expected)) < 1e-10


def test_aggregate_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        gcn_aggregate(Tensor(np.ones((2, 4))), ops_for("a b c"), agg(np.random.default_rng(0), 4, 4))


def test_closed_gate_is_identity_from_layer_one():
    rng = np.random.default_rng(2)
    ops = ops_for("a b c d b")
    layer = GCNLayer(agg(rng, 5, 5), agg(rng, 5, 5), Parameter(np.full(5, -1e4)))
    H = rng.standard_normal((4, 5))
    np.testing.assert_array_equal(gcn_layer(Tensor(H), ops, layer, residual=True).data, H)
    assert not gcn_layer(Tensor(H), ops, layer, residual=False).data.any()


def test_two_layer_gradient():
    rng = np.random.default_rng(3)
    ops = ops_for("p q r p")
    layers = [GCNLayer(agg(rng, 3, 4, 0.5), agg(rng, 3, 4, 0.5), Parameter(rng.standard_normal(4)))]
    layers.append(GCNLayer(agg(rng, 4, 4, 0.5), agg(rng, 4, 4, 0.5), Parameter(rng.standard_normal(4))))
    H0 = Parameter(rng.standard_normal((3, 3)), "H0")
    params = [H0]
    for i, l in enumerate(layers):
        for j, p in enumerate(l.f.parameters() + l.g.parameters() + [l.g_bias]):
            p.name = f"{i}.{j}"
            params.append(p)
    w = rng.standard_normal((3, 4))

    def loss():
        H = gcn_layer(H0, ops, layers[0], residual=False)
        return ad.sum(gcn_layer(H, ops, layers[1], residual=True) * w)

    assert ad.grad_check(loss, params).max_error < 1e-4


# -- full encoder ---------------------------------------------------------------

@pytest.fixture
def item():
    return ingest_record(DatasetRecord("e", "graph pointer networks", "extract diverse graph keyphrases quickly", ["graph"]))


def test_eval_encoding_is_deterministic(item):
    model = jitter(tiny_model([item]))
    a = encode(model, item.graph)
    b = encode(model, item.graph)
    np.testing.assert_array_equal(a.node_reprs.data, b.node_reprs.data)
    np.testing.assert_array_equal(a.doc_vector.data, b.doc_vector.data)
    np.testing.assert_array_equal(a.doc_vector.data, a.agg.data.mean(axis=0))


def test_single_node_doc_vector_by_hand():
    doc = tokenize("solo")
    model = tiny_model([SimpleNamespace(doc=doc)], gcn_layers=1)
    jitter(model)
    rng = np.random.default_rng(5)
    model.bn_stats.mean[:] = rng.standard_normal(8)
    model.bn_stats.var[:] = rng.uniform(0.5, 2.0, 8)
    p = {n: q.data for n, q in model.named_parameters().items()}
    e = p["embedding"][1]
    f = e @ (p["gcn.0.f.bwd"] + p["gcn.0.f.fwd"] + p["gcn.0.f.self"])
    g = e @ (p["gcn.0.g.bwd"] + p["gcn.0.g.fwd"] + p["gcn.0.g.self"]) + p["gcn.0.g.bias"]
    h = f / (1 + np.exp(-g))
    r = h @ (p["gcn.readout.bwd"] + p["gcn.readout.fwd"] + p["gcn.readout.self"])
    c = p["bn.gamma"] * (r - model.bn_stats.mean) / np.sqrt(model.bn_stats.var + 1e-5) + p["bn.beta"]
    enc = encode(model, build_graph(doc))
    assert np.max(np.abs(enc.doc_vector.data - c)) < 1e-10
    assert np.max(np.abs(enc.node_reprs.data[0] - h)) < 1e-10


def test_permuting_nodes_permutes_outputs(item):
    model = jitter(tiny_model([item]))
    g = item.graph
    perm = np.random.default_rng(4).permutation(g.node_count)
    P = np.eye(g.node_count)[perm]
    permuted = type(g)(
        g.node_table,  # only the ids and matrices matter below
        P @ g.a_fwd @ P.T,
        P @ g.a_bwd @ P.T,
        P @ g.a_fwd_norm @ P.T,
        P @ g.a_bwd_norm @ P.T,
    )
    ids = model.stem_ids(g.node_table.nodes)
    base = encode_batch(model, [g], [ids])[0]
    moved = encode_batch(model, [permuted], [ids[perm]])[0]
    np.testing.assert_allclose(moved.node_reprs.data, base.node_reprs.data[perm], atol=1e-12)
    assert np.max(np.abs(moved.doc_vector.data - base.doc_vector.data)) < 1e-6


def test_training_mode_pools_batch_norm_over_documents(item):
    other = ingest_record(DatasetRecord("o", "sparse codes", "learn sparse codes", ["sparse codes"]))
    model = jitter(tiny_model([item, other]))
    ids = [model.stem_ids(d.graph.node_table.nodes) for d in (item, other)]
    enc = encode_batch(model, [item.graph, other.graph], ids, train=True, rng=np.random.default_rng(0),
                       dropout_embed=0.0, dropout_gcn=0.0)
    pooled = np.concatenate([e.agg.data for e in enc])
    np.testing.assert_allclose(pooled.mean(axis=0), model.bn_beta.data, atol=1e-10)
    # each document keeps its own, distinct summary
    assert np.abs(enc[0].doc_vector.data - enc[1].doc_vector.data).max() > 1e-3


def test_dropout_only_in_training(item):
    model = tiny_model([item])
    ids = model.stem_ids(item.graph.node_table.nodes)
    enc = encode_batch(model, [item.graph], [ids], train=True, rng=np.random.default_rng(0), dropout_gcn=0.5)[0]
    assert (enc.node_reprs.data == 0).any()
    assert not (encode(model, item.graph).node_reprs.data == 0).any()


def test_unknown_stems_use_the_reserved_row(item):
    model = tiny_model([item])
    assert model.stem_ids(["never-seen"]).tolist() == [0]
    enc = encode(model, build_graph(TokenizedDocument(("zzz",), ("zzz",))))
    assert np.isfinite(enc.doc_vector.data).all()
