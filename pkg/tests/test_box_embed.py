import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from lgmtrack import numerics as nx
from lgmtrack.box_embed import BoxEmbedModel, box_forward, gcn_block, pairwise_attention
from lgmtrack.graph import Detection, build_box_graph


def random_block(rng, c, hidden=4):
    return {
        "block0.w": nx.Tensor(rng.normal(size=(c, c)) * 0.5),
        "block0.att1.w": nx.Tensor(rng.normal(size=(1, hidden))),
        "block0.att1.b": nx.Tensor(rng.normal(size=(hidden,))),
        "block0.att2.w": nx.Tensor(rng.normal(size=(hidden, 1))),
        "block0.att2.b": nx.Tensor(rng.normal(size=(1,))),
    }


def unpack(p):
    return [p[k].data for k in ("block0.w", "block0.att1.w", "block0.att1.b", "block0.att2.w", "block0.att2.b")]


def random_graph(rng, n, frames=4):
    dets = [Detection(int(rng.integers(frames)), *rng.uniform(0.1, 0.9, 2), *rng.uniform(0.05, 0.2, 2))
            for _ in range(n)]
    return build_box_graph(dets)


def small_model(seed=0, blocks=2, width=8):
    return BoxEmbedModel.create(blocks=blocks, width=width, att_hidden=4, input_scale=4.0, seed=seed)


def test_attention_single_node():
    x = nx.Tensor(np.array([[0.3, -0.2]]))
    p = random_block(np.random.default_rng(0), 2)
    att = pairwise_attention(x, p["block0.att1.w"], p["block0.att1.b"], p["block0.att2.w"], p["block0.att2.b"], 0.5)
    assert att.shape == (1, 1) and 0.0 < float(att.data[0, 0]) < 1.0


def test_attention_identical_rows_constant(rng):
    x = nx.Tensor(np.tile(rng.normal(size=(1, 3)), (5, 1)))
    p = random_block(rng, 3)
    att = pairwise_attention(x, p["block0.att1.w"], p["block0.att1.b"], p["block0.att2.w"], p["block0.att2.b"], 1 / 3)
    assert np.ptp(att.data) == 0.0


def test_attention_entrywise_oracle(rng):
    x = rng.normal(size=(6, 5))
    p = random_block(rng, 5)
    att = pairwise_attention(nx.Tensor(x), p["block0.att1.w"], p["block0.att1.b"], p["block0.att2.w"],
                             p["block0.att2.b"], 0.2).data
    _, w1, b1, w2, b2 = unpack(p)
    np.testing.assert_allclose(att, oracles.attention_map(x, w1, b1, w2, b2, 0.2), rtol=0, atol=1e-12)


def test_zero_kernel_is_residual_identity(rng):
    x = rng.normal(size=(4, 3))
    p = random_block(rng, 3)
    p["block0.w"] = nx.Tensor(np.zeros((3, 3)))
    adj = np.ones((4, 4)) - np.eye(4)
    out, _ = gcn_block(nx.Tensor(x), nx.Tensor(adj + np.eye(4)), p, 0)
    np.testing.assert_array_equal(out.data, x)


def test_isolated_node_finite(rng):
    p = random_block(rng, 3)
    out, att = gcn_block(nx.Tensor(rng.normal(size=(1, 3))), nx.Tensor(np.eye(1)), p, 0)
    assert np.all(np.isfinite(out.data)) and att.shape == (1, 1)


def test_three_node_path_oracle():
    x = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])
    adj = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    p = {
        "block0.w": nx.Tensor(np.array([[1.0, -0.5], [0.25, 2.0]])),
        "block0.att1.w": nx.Tensor(np.array([[1.0, -1.0]])),
        "block0.att1.b": nx.Tensor(np.array([0.1, 0.2])),
        "block0.att2.w": nx.Tensor(np.array([[0.7], [-0.3]])),
        "block0.att2.b": nx.Tensor(np.array([0.05])),
    }
    out, att = gcn_block(nx.Tensor(x), nx.Tensor(adj + np.eye(3)), p, 0)
    ref, ref_att = oracles.gcn_block(x, adj, *unpack(p))
    np.testing.assert_allclose(out.data, ref, atol=1e-12)
    np.testing.assert_allclose(att.data, ref_att, atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_gcn_block_oracle_random(seed):
    rng = np.random.default_rng(seed)
    n, c = int(rng.integers(1, 7)), int(rng.integers(1, 5))
    x = rng.normal(size=(n, c))
    adj = np.triu((rng.random((n, n)) < 0.5).astype(float), 1)
    adj = adj + adj.T
    p = random_block(rng, c)
    out, _ = gcn_block(nx.Tensor(x), nx.Tensor(adj + np.eye(n)), p, 0)
    np.testing.assert_allclose(out.data, oracles.gcn_block(x, adj, *unpack(p))[0], atol=1e-10)


def test_forward_single_box():
    g = build_box_graph([Detection(0, 0.4, 0.6, 0.1, 0.1)])
    out = box_forward(g, small_model())
    assert out.embeddings.shape == (1, 8)
    assert abs(np.linalg.norm(out.embeddings[0]) - 1.0) < 1e-6


def test_forward_empty():
    out = box_forward(build_box_graph([]), small_model())
    assert out.embeddings.shape == (0, 8) and out.attention.shape == (0, 0)


def test_duplicate_boxes_identical_rows():
    d = Detection(0, 0.4, 0.6, 0.1, 0.1)
    g = build_box_graph([d, d, Detection(1, 0.45, 0.6, 0.1, 0.1)])
    emb = box_forward(g, small_model()).embeddings
    np.testing.assert_allclose(emb[0], emb[1], atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 9))
def test_permutation_equivariance(seed, n):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n)
    model = small_model(seed % 5)
    perm = rng.permutation(n)
    gp = build_box_graph([Detection(int(g.frame_of[i]), *g.features[i]) for i in perm])
    a, b = box_forward(g, model), box_forward(gp, model)
    np.testing.assert_allclose(b.embeddings, a.embeddings[perm], atol=1e-10)
    np.testing.assert_allclose(b.attention, a.attention[np.ix_(perm, perm)], atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_masking_blocks_non_adjacent_messages(seed):
    """Changing a box that shares no (A+I) entry with node 0 leaves node 0's first-block update unchanged."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 3))
    frames = np.array([0, 1, 3, 5])
    adj = (np.abs(frames[:, None] - frames[None, :]) == 1).astype(float)
    p = random_block(rng, 3)
    out1, _ = gcn_block(nx.Tensor(x), nx.Tensor(adj + np.eye(4)), p, 0)
    x2 = x.copy()
    x2[3] += rng.normal(size=3)
    out2, _ = gcn_block(nx.Tensor(x2), nx.Tensor(adj + np.eye(4)), p, 0)
    np.testing.assert_allclose(out1.data[:2], out2.data[:2], atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12))
def test_embeddings_unit_norm(seed, n):
    emb = box_forward(random_graph(np.random.default_rng(seed), n), small_model()).embeddings
    np.testing.assert_allclose(np.linalg.norm(emb, axis=1), 1.0, atol=1e-6)


def test_attention_in_open_interval(rng):
    att = box_forward(random_graph(rng, 10), small_model()).attention
    assert np.all((att > 0) & (att < 1))


def test_gradients_finite_difference(rng):
    g = random_graph(rng, 6)
    model = small_model()

    def loss():
        out = box_forward(g, model, as_tensors=True)
        return nx.add(nx.sum(nx.mul(out.embeddings, nx.Tensor(np.cos(np.arange(48.0)).reshape(6, 8)))),
                      nx.sum(nx.square(out.attention)))

    assert nx.finite_difference_check(loss, model.params, rng=rng) < 1e-4
