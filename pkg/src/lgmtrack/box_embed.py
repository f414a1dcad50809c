"""Box embedding network: stacked attention-guided GCN blocks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .graph import BoxGraph
from .params import ModelParams, uniform_init


@dataclass
class BoxEmbedOutput:
    embeddings: np.ndarray | nx.Tensor  # N×C, unit rows
    attention: np.ndarray | nx.Tensor  # N×N, last block


def pairwise_attention(x, w1, b1, w2, b2, scale):
    """Attention map from the scaled pairwise dot products of the rows of ``x``.

    The N×N similarity map is treated as a one-channel image and passed through
    two 1×1 channel convolutions (1 -> H -> 1) with ReLU between and a sigmoid
    after, so the map is defined for any N.
    """
    n = x.shape[0]
    sim = nx.scale(nx.matmul(x, nx.transpose(x)), scale)
    col = nx.reshape(sim, (n * n, 1))
    hidden = nx.relu(nx.add(nx.matmul(col, w1), b1))
    logit = nx.add(nx.matmul(hidden, w2), b2)
    return nx.sigmoid(nx.reshape(logit, (n, n)))


def gcn_block(x, adj_plus_eye, model, idx):
    """One attention-refined GCN update with a residual connection.

    Returns ``(x_next, attention)``.
    """
    p = f"block{idx}."
    att = pairwise_attention(
        x, model[p + "att1.w"], model[p + "att1.b"], model[p + "att2.w"], model[p + "att2.b"],
        1.0 / x.shape[1],
    )
    refined = nx.mul(adj_plus_eye, att)
    agg = nx.sym_normalize(refined)
    update = nx.relu(nx.matmul(nx.matmul(agg, x), model[p + "w"]))
    return nx.add(update, x), att


class BoxEmbedModel(ModelParams):
    kind = "box"

    @classmethod
    def create(cls, blocks=8, width=128, att_hidden=16, input_scale=10.0, seed=0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        tensors = {
            "proj.w": uniform_init(rng, (4, width), 4, dtype=dtype),
            "proj.b": np.zeros((width,), dtype=dtype),
        }
        for l in range(blocks):
            p = f"block{l}."
            tensors[p + "w"] = uniform_init(rng, (width, width), width, gain=0.5, dtype=dtype)
            tensors[p + "att1.w"] = uniform_init(rng, (1, att_hidden), 1, dtype=dtype)
            tensors[p + "att1.b"] = uniform_init(rng, (att_hidden,), 1, dtype=dtype)
            tensors[p + "att2.w"] = uniform_init(rng, (att_hidden, 1), att_hidden, dtype=dtype)
            tensors[p + "att2.b"] = np.zeros((1,), dtype=dtype)
        config = {"blocks": blocks, "width": width, "att_hidden": att_hidden, "input_scale": input_scale}
        return cls.from_arrays(config, tensors)

    @property
    def blocks(self):
        return int(self.config["blocks"])

    @property
    def width(self):
        return int(self.config["width"])


def box_forward(graph: BoxGraph, model: BoxEmbedModel, as_tensors=False):
    """Embed every box in the graph.

    With ``as_tensors`` the outputs stay attached to the autodiff graph (for
    training); otherwise plain arrays are returned.
    """
    n = graph.n
    dtype = model.dtype
    if n == 0:
        empty = BoxEmbedOutput(np.zeros((0, model.width), dtype), np.zeros((0, 0), dtype))
        return empty
    # boxes are centered on the image middle and scaled before projection
    scale = float(model.config.get("input_scale", 1.0))
    x0 = nx.Tensor(((graph.features - 0.5) * scale).astype(dtype))
    mask = nx.Tensor((graph.adjacency + np.eye(n)).astype(dtype))
    x = nx.add(nx.matmul(x0, model["proj.w"]), model["proj.b"])
    att = None
    for l in range(model.blocks):
        x, att = gcn_block(x, mask, model, l)
    emb = nx.l2_normalize_rows(x)
    if as_tensors:
        return BoxEmbedOutput(emb, att)
    return BoxEmbedOutput(emb.data, att.data)
