"""Tracklet embedding network: reconstruction blocks followed by an embed head.

Each reconstruction block extrapolates tracklets with a temporal gated
convolution (TGC) module, measures pairwise attention on the extrapolations,
aggregates neighbouring tracklets through the attention-refined adjacency and
refines the aggregate with a second TGC module.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .box_embed import pairwise_attention
from .graph import TrackletGraph
from .params import ModelParams, uniform_init


@dataclass
class TrackletEmbedOutput:
    embeddings: np.ndarray | nx.Tensor  # N×D
    reconstruction: np.ndarray | nx.Tensor  # N×4×T
    masks: np.ndarray | nx.Tensor  # N×1×T
    attention: np.ndarray | nx.Tensor  # N×N, last block


# box-parameter offset removed before the network (centers x, y on the image)
BOX_OFFSET = np.array([0.5, 0.5, 0.0, 0.0])


def channel_plan(layers, width):
    return [4] + [width] * (layers - 1) + [4]


def tgc_layer(y, m, model, prefix):
    """Gated temporal convolution: the soft mask gates the feature update.

    The residual is the input itself when channel counts match, otherwise a
    learned 1×1 projection of it.
    """
    m_next = nx.sigmoid(nx.temporal_conv(m, model[prefix + "mask.w"], model[prefix + "mask.b"]))
    feat = nx.relu(nx.temporal_conv(y, model[prefix + "feat.w"], model[prefix + "feat.b"]))
    gated = nx.mul(feat, m_next)
    if prefix + "proj.w" in model:
        w = model[prefix + "proj.w"]
        skip = nx.temporal_conv(y, w, np.zeros(w.shape[0], dtype=w.dtype))
    else:
        skip = y
    return nx.add(gated, skip), m_next


def tgc_module(x, m, model, prefix, layers):
    for j in range(layers):
        x, m = tgc_layer(x, m, model, f"{prefix}tgc{j}.")
    return x, m


def recon_block(x, m, adj_plus_eye, model, k):
    """One reconstruction block; returns ``(x_k, m_k, attention, aggregation)``."""
    layers = int(model.config["tgc_layers"])
    p = f"block{k}."
    n, _, steps = x.shape
    x_ext, _ = tgc_module(x, m, model, p + "g1.", layers)
    flat = nx.reshape(x_ext, (n, 4 * steps))
    att = pairwise_attention(
        flat, model[p + "att1.w"], model[p + "att1.b"], model[p + "att2.w"], model[p + "att2.b"],
        1.0 / (4 * steps),
    )
    agg = nx.sym_normalize(nx.mul(adj_plus_eye, att))
    y, m_next = tgc_module(nx.node_matmul(agg, x), nx.node_matmul(agg, m), model, p + "g2.", layers)
    return nx.add(x, y), m_next, att, agg


def embed_head(x_k, model):
    n = x_k.shape[0]
    flat = nx.reshape(x_k, (n, -1))
    hidden = nx.relu(nx.add(nx.matmul(flat, model["head.w1"]), model["head.b1"]))
    return nx.l2_normalize_rows(nx.matmul(hidden, model["head.w2"]))


class TrackletEmbedModel(ModelParams):
    kind = "tracklet"

    @classmethod
    def create(cls, blocks=4, steps=65, tgc_layers=6, tgc_width=32, kernel=3, att_hidden=16,
               head_hidden=256, dim=128, input_scale=10.0, seed=0, dtype=np.float64,
               zero_init_refine=True):
        if kernel % 2 == 0:
            raise nx.ConfigError(f"TGC kernel width must be odd, got {kernel}")
        rng = np.random.default_rng(seed)
        plan = channel_plan(tgc_layers, tgc_width)
        tensors = {}
        for k in range(blocks):
            for g in ("g1", "g2"):
                for j in range(tgc_layers):
                    p = f"block{k}.{g}.tgc{j}."
                    c_in, c_out = plan[j], plan[j + 1]
                    tensors[p + "mask.w"] = uniform_init(rng, (1, 1, kernel), kernel, dtype=dtype)
                    tensors[p + "mask.b"] = np.zeros((1,), dtype=dtype)
                    feat = uniform_init(rng, (c_out, c_in, kernel), c_in * kernel, gain=0.5, dtype=dtype)
                    bias = np.zeros((c_out,), dtype=dtype)
                    proj = None
                    if c_in != c_out:
                        proj = uniform_init(rng, (c_out, c_in, 1), c_in, dtype=dtype)
                    if zero_init_refine and g == "g2" and j == tgc_layers - 1:
                        # the refinement starts as an exact residual identity
                        feat = np.zeros_like(feat)
                        proj = np.zeros_like(proj) if proj is not None else None
                    tensors[p + "feat.w"] = feat
                    tensors[p + "feat.b"] = bias
                    if proj is not None:
                        tensors[p + "proj.w"] = proj
            p = f"block{k}."
            tensors[p + "att1.w"] = uniform_init(rng, (1, att_hidden), 1, dtype=dtype)
            tensors[p + "att1.b"] = uniform_init(rng, (att_hidden,), 1, dtype=dtype)
            tensors[p + "att2.w"] = uniform_init(rng, (att_hidden, 1), att_hidden, dtype=dtype)
            tensors[p + "att2.b"] = np.zeros((1,), dtype=dtype)
        tensors["head.w1"] = uniform_init(rng, (4 * steps, head_hidden), 4 * steps, gain=2.0, dtype=dtype)
        tensors["head.b1"] = np.zeros((head_hidden,), dtype=dtype)
        tensors["head.w2"] = uniform_init(rng, (head_hidden, dim), head_hidden, dtype=dtype)
        config = {
            "blocks": blocks, "steps": steps, "tgc_layers": tgc_layers, "tgc_width": tgc_width,
            "kernel": kernel, "att_hidden": att_hidden, "head_hidden": head_hidden, "dim": dim,
            "input_scale": input_scale,
        }
        return cls.from_arrays(config, tensors)

    @property
    def blocks(self):
        return int(self.config["blocks"])

    @property
    def steps(self):
        return int(self.config["steps"])

    @property
    def dim(self):
        return int(self.config["dim"])


def tracklet_forward(graph: TrackletGraph, model: TrackletEmbedModel, as_tensors=False):
    n = graph.n
    dtype = model.dtype
    if graph.steps != model.steps:
        raise nx.ShapeError(f"graph window {graph.steps} != model window {model.steps}")
    if n == 0:
        t = model.steps
        return TrackletEmbedOutput(
            np.zeros((0, model.dim), dtype), np.zeros((0, 4, t), dtype),
            np.zeros((0, 1, t), dtype), np.zeros((0, 0), dtype),
        )
    # the network works on centered, scaled boxes; unoccupied frames stay zero
    scale = float(model.config.get("input_scale", 1.0))
    offset = BOX_OFFSET.reshape(1, 4, 1).astype(dtype)
    x = nx.Tensor(((graph.features - offset) * scale * graph.masks).astype(dtype))
    m = nx.Tensor(graph.masks.astype(dtype))
    mask = nx.Tensor((graph.adjacency + np.eye(n)).astype(dtype))
    att = None
    for k in range(model.blocks):
        x, m, att, _ = recon_block(x, m, mask, model, k)
    emb = embed_head(x, model)
    recon = nx.add(nx.scale(x, 1.0 / scale), offset)
    out = TrackletEmbedOutput(emb, recon, m, att)
    if as_tensors:
        return out
    return TrackletEmbedOutput(emb.data, recon.data, m.data, att.data)
