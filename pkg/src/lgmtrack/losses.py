"""Training objectives for the box and tracklet embedding networks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx

BCE_CLAMP = 1e-7


@dataclass
class LossConfig:
    margin: float = 0.2
    lambda_box_xent: float = 1.0
    lambda_tracklet_xent: float = 1.0
    lambda_rec: float = 1.0
    box_mining: str = "hard"
    tracklet_mining: str = "all"

    def __post_init__(self):
        if self.margin <= 0:
            raise nx.ConfigError("triplet margin must be positive")
        for m in (self.box_mining, self.tracklet_mining):
            if m not in MINING:
                raise nx.ConfigError(f"unknown mining strategy {m!r}; expected one of {MINING}")


MINING = ("hard", "all")


def identity_matrix(ids):
    """t_ij = 1 when i and j share a real identity; negative ids are unique."""
    ids = np.asarray(ids)
    same = (ids[:, None] == ids[None, :]) & (ids[:, None] >= 0)
    np.fill_diagonal(same, True)
    return same


def mine_batch_hard(emb, ids):
    """Hardest positive / negative per anchor; returns (anchors, positives, negatives)."""
    emb = np.asarray(emb)
    n = emb.shape[0]
    same = identity_matrix(ids)
    eye = np.eye(n, dtype=bool)
    pos = same & ~eye
    neg = ~same
    sq = np.sum(emb * emb, axis=1)
    dist = np.maximum(sq[:, None] + sq[None, :] - 2.0 * emb @ emb.T, 0.0)
    anchors = np.flatnonzero(pos.any(axis=1) & neg.any(axis=1))
    p = np.array([np.argmax(np.where(pos[a], dist[a], -np.inf)) for a in anchors], dtype=np.intp)
    q = np.array([np.argmin(np.where(neg[a], dist[a], np.inf)) for a in anchors], dtype=np.intp)
    return anchors, p, q


def mine_batch_all(ids):
    """Every valid (anchor, positive, negative) triple, anchor-major order."""
    same = identity_matrix(ids)
    n = same.shape[0]
    pos = same & ~np.eye(n, dtype=bool)
    a, p, q = np.nonzero(pos[:, :, None] & ~same[:, None, :])
    return a.astype(np.intp), p.astype(np.intp), q.astype(np.intp)


def triplet_loss(emb: nx.Tensor, ids, margin=0.2, mining="hard"):
    """Triplet hinge on squared Euclidean distances.

    ``mining="hard"`` keeps one triple per anchor (farthest positive, nearest
    negative); ``"all"`` averages over every valid triple.
    """
    emb = nx.as_tensor(emb)
    if mining == "hard":
        anchors, pos, neg = mine_batch_hard(emb.data, ids)
    elif mining == "all":
        anchors, pos, neg = mine_batch_all(ids)
    else:
        raise nx.ConfigError(f"unknown mining strategy {mining!r}")
    if anchors.size == 0:
        return nx.Tensor(np.zeros((), dtype=emb.dtype))
    xa = nx.take_rows(emb, anchors)
    d_ap = nx.sum(nx.square(nx.sub(xa, nx.take_rows(emb, pos))), axis=1)
    d_an = nx.sum(nx.square(nx.sub(xa, nx.take_rows(emb, neg))), axis=1)
    return nx.mean(nx.relu(nx.add(nx.sub(d_ap, d_an), margin)))


def bce_attention_loss(att: nx.Tensor, ids, adjacency):
    """Binary cross-entropy between attention and same-identity labels.

    Averaged over the pairs where (A + I) is 1, i.e. where attention is used.
    """
    att = nx.as_tensor(att)
    dtype = att.dtype
    n = att.shape[0]
    target = identity_matrix(ids).astype(dtype)
    support = ((np.asarray(adjacency) + np.eye(n)) > 0).astype(dtype)
    count = float(support.sum())
    if count == 0:
        return nx.Tensor(np.zeros((), dtype=dtype))
    p = nx.clip(att, BCE_CLAMP, 1.0 - BCE_CLAMP)
    ll = nx.add(nx.mul(target, nx.log(p)), nx.mul(1.0 - target, nx.log(nx.sub(1.0, p))))
    return nx.scale(nx.sum(nx.mul(support, ll)), -1.0 / count)


def reconstruction_loss(recon: nx.Tensor, target, occupancy):
    """Masked L2 error, normalized per occupied (node, frame) entry.

    Computed as sqrt(sum(M* (X - X*)^2) / count(M*)).
    """
    recon = nx.as_tensor(recon)
    target = np.asarray(target, dtype=recon.dtype)
    occupancy = np.asarray(occupancy, dtype=recon.dtype)
    count = float(occupancy.sum())
    if count == 0:
        return nx.Tensor(np.zeros((), dtype=recon.dtype))
    diff = nx.mul(occupancy, nx.sub(recon, target))
    return nx.sqrt(nx.scale(nx.sum(nx.square(diff)), 1.0 / count))


def box_total_loss(out, ids, adjacency, cfg: LossConfig):
    """Returns ``(total, {"triplet": ..., "xent": ...})``."""
    trip = triplet_loss(out.embeddings, ids, cfg.margin, cfg.box_mining)
    xent = bce_attention_loss(out.attention, ids, adjacency)
    total = nx.add(trip, nx.scale(xent, cfg.lambda_box_xent))
    return total, {"triplet": trip, "xent": xent}


def tracklet_total_loss(out, gt, adjacency, cfg: LossConfig):
    """Returns ``(total, {"triplet": ..., "xent": ..., "rec": ...})``."""
    trip = triplet_loss(out.embeddings, gt.ids, cfg.margin, cfg.tracklet_mining)
    xent = bce_attention_loss(out.attention, gt.ids, adjacency)
    rec = reconstruction_loss(out.reconstruction, gt.tracks, gt.occupancy)
    total = nx.add(nx.add(trip, nx.scale(xent, cfg.lambda_tracklet_xent)), nx.scale(rec, cfg.lambda_rec))
    return total, {"triplet": trip, "xent": xent, "rec": rec}
