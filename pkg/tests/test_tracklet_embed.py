import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from lgmtrack import numerics as nx
from lgmtrack.graph import Detection, Tracklet, build_tracklet_graph
from lgmtrack.tracklet_embed import (TrackletEmbedModel, channel_plan, recon_block, tgc_layer, tgc_module,
                                     tracklet_forward)


def small_model(seed=0, steps=9, blocks=2, layers=2, width=3, zero_init_refine=False, head_hidden=6, **kw):
    return TrackletEmbedModel.create(blocks=blocks, steps=steps, tgc_layers=layers, tgc_width=width,
                                     att_hidden=4, head_hidden=head_hidden, dim=5, seed=seed,
                                     zero_init_refine=zero_init_refine, **kw)


def jitter(model, rng, scale=0.1):
    """Move every parameter off exact zeros so no ReLU sits on its kink."""
    for p in model.params.values():
        p.data += scale * rng.standard_normal(p.shape)
    return model


def arrays(model):
    return model.arrays()


def random_tracklets(rng, n, steps, start=0):
    out = []
    for k in range(n):
        a = int(rng.integers(0, steps))
        b = int(rng.integers(a, steps))
        frames = [f for f in range(a, b + 1) if rng.random() > 0.2] or [a]
        x, y = rng.uniform(0.2, 0.8, 2)
        out.append(Tracklet(k, [Detection(start + f, x + 0.01 * f, y, 0.1, 0.1) for f in frames]))
    return out


def random_graph(rng, n, steps):
    return build_tracklet_graph(random_tracklets(rng, n, steps), 0, steps)


def test_channel_plan():
    assert channel_plan(3, 8) == [4, 8, 8, 4]


def test_even_kernel_rejected():
    with pytest.raises(nx.ConfigError):
        TrackletEmbedModel.create(kernel=4)


def test_window_mismatch_rejected(rng):
    with pytest.raises(nx.ShapeError):
        tracklet_forward(random_graph(rng, 2, 7), small_model(steps=9))


def test_empty_graph():
    out = tracklet_forward(build_tracklet_graph([], 0, 9), small_model())
    assert out.embeddings.shape == (0, 5) and out.reconstruction.shape == (0, 4, 9)


@pytest.mark.parametrize("seed", range(10))
def test_tgc_layer_oracle(seed):
    rng = np.random.default_rng(seed)
    model = small_model(seed, layers=3)
    p = arrays(model)
    m = (rng.random((3, 1, 9)) < 0.5).astype(float)
    for j in range(3):
        prefix = f"block0.g1.tgc{j}."
        c_in = p[prefix + "feat.w"].shape[1]
        yj = rng.normal(size=(3, c_in, 9))
        out, m_next = tgc_layer(nx.Tensor(yj), nx.Tensor(m), model, prefix)
        ref, ref_m = oracles.tgc_layer(yj, m, p[prefix + "mask.w"], p[prefix + "mask.b"], p[prefix + "feat.w"],
                                       p[prefix + "feat.b"], p.get(prefix + "proj.w"))
        np.testing.assert_allclose(out.data, ref, atol=1e-10)
        np.testing.assert_allclose(m_next.data, ref_m, atol=1e-10)


def test_tgc_mask_is_soft_and_bounded(rng):
    model = small_model()
    m = (rng.random((2, 1, 9)) < 0.5).astype(float)
    _, m_out = tgc_module(nx.Tensor(rng.normal(size=(2, 4, 9))), nx.Tensor(m), model, "block0.g1.", 2)
    assert np.all((m_out.data > 0) & (m_out.data < 1))


@pytest.mark.parametrize("seed", range(10))
def test_recon_block_oracle(seed):
    rng = np.random.default_rng(seed)
    model = small_model(seed)
    n = int(rng.integers(1, 6))
    g = random_graph(rng, n, 9)
    x = (g.features - 0.3) * g.masks
    out, m_next, att, _ = recon_block(nx.Tensor(x), nx.Tensor(g.masks), nx.Tensor(g.adjacency + np.eye(n)), model, 0)
    ref, ref_m, ref_att = oracles.recon_block(x, g.masks, g.adjacency, arrays(model), 0, 2)
    np.testing.assert_allclose(out.data, ref, atol=1e-10)
    np.testing.assert_allclose(m_next.data, ref_m, atol=1e-10)
    np.testing.assert_allclose(att.data, ref_att, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_forward_oracle(seed):
    rng = np.random.default_rng(seed)
    model = small_model(seed)
    g = random_graph(rng, 4, 9)
    out = tracklet_forward(g, model)
    emb, rec, m, att = oracles.tracklet_forward(g.features, g.masks, g.adjacency, arrays(model), model.config)
    np.testing.assert_allclose(out.embeddings, emb, atol=1e-10)
    np.testing.assert_allclose(out.reconstruction, rec, atol=1e-10)
    np.testing.assert_allclose(out.masks, m, atol=1e-10)
    np.testing.assert_allclose(out.attention, att, atol=1e-10)


def test_zero_refine_starts_as_identity(rng):
    model = small_model(zero_init_refine=True)
    g = random_graph(rng, 3, 9)
    rec = tracklet_forward(g, model).reconstruction
    occ = g.masks > 0
    np.testing.assert_allclose(np.broadcast_to(occ, rec.shape) * rec, g.features, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_permutation_equivariance(seed, n):
    rng = np.random.default_rng(seed)
    trks = random_tracklets(rng, n, 9)
    perm = rng.permutation(n)
    model = small_model(seed % 3)
    a = tracklet_forward(build_tracklet_graph(trks, 0, 9), model)
    b = tracklet_forward(build_tracklet_graph([trks[i] for i in perm], 0, 9), model)
    np.testing.assert_allclose(b.embeddings, a.embeddings[perm], atol=1e-10)
    np.testing.assert_allclose(b.reconstruction, a.reconstruction[perm], atol=1e-10)
    np.testing.assert_allclose(b.attention, a.attention[np.ix_(perm, perm)], atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8))
def test_embeddings_unit_norm(seed, n):
    emb = tracklet_forward(random_graph(np.random.default_rng(seed), n, 9), small_model(head_hidden=64)).embeddings
    np.testing.assert_allclose(np.linalg.norm(emb, axis=1), 1.0, atol=1e-6)


def test_zero_output_kernel_gives_zero_rows(rng):
    model = small_model()
    model["head.w2"].data[:] = 0.0
    emb = tracklet_forward(random_graph(rng, 3, 9), model).embeddings
    np.testing.assert_array_equal(emb, 0.0)


def test_single_tracklet(rng):
    out = tracklet_forward(random_graph(rng, 1, 9), small_model(head_hidden=64))
    assert abs(np.linalg.norm(out.embeddings[0]) - 1.0) < 1e-6
    assert np.all(np.isfinite(out.reconstruction))


def test_overlapping_tracklets_do_not_exchange_messages(rng):
    """Two tracklets sharing a frame get A=0, so with one block neither sees the other."""
    a = Tracklet(0, [Detection(f, 0.3, 0.3, 0.1, 0.1) for f in range(0, 5)])
    b = Tracklet(1, [Detection(f, 0.7, 0.4, 0.1, 0.1) for f in range(4, 9)])
    b2 = Tracklet(1, [Detection(f, 0.6, 0.6, 0.2, 0.1) for f in range(4, 9)])
    model = small_model(blocks=1)
    o1 = tracklet_forward(build_tracklet_graph([a, b], 0, 9), model)
    o2 = tracklet_forward(build_tracklet_graph([a, b2], 0, 9), model)
    np.testing.assert_allclose(o1.embeddings[0], o2.embeddings[0], atol=1e-12)
    np.testing.assert_allclose(o1.reconstruction[0], o2.reconstruction[0], atol=1e-12)


def test_disjoint_tracklets_do_exchange_messages():
    a = Tracklet(0, [Detection(f, 0.3, 0.3, 0.1, 0.1) for f in range(0, 4)])
    b = Tracklet(1, [Detection(f, 0.7, 0.4, 0.1, 0.1) for f in range(5, 9)])
    b2 = Tracklet(1, [Detection(f, 0.6, 0.6, 0.2, 0.1) for f in range(5, 9)])
    model = small_model(blocks=1)
    o1 = tracklet_forward(build_tracklet_graph([a, b], 0, 9), model)
    o2 = tracklet_forward(build_tracklet_graph([a, b2], 0, 9), model)
    assert np.abs(o1.embeddings[0] - o2.embeddings[0]).max() > 1e-9


def test_gradients_finite_difference(rng):
    g = random_graph(rng, 4, 9)
    model = jitter(small_model(), rng)
    probe_e = np.sin(np.arange(20.0)).reshape(4, 5)
    probe_r = np.cos(np.arange(4 * 4 * 9.0)).reshape(4, 4, 9)

    def loss():
        out = tracklet_forward(g, model, as_tensors=True)
        return nx.add(nx.add(nx.sum(nx.mul(out.embeddings, probe_e)), nx.sum(nx.mul(out.reconstruction, probe_r))),
                      nx.sum(nx.square(out.attention)))

    assert nx.finite_difference_check(loss, model.params, rng=rng) < 1e-4
