"""Sliding-window inference: boxes -> tracklets -> tracks.

Box windows link detections between adjacent frames by embedding distance;
tracklet windows merge temporally disjoint tracklets greedily. Consecutive
windows overlap by half and results are stitched through the detections they
share.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import iou_matrix, min_cost_assignment
from .box_embed import box_forward
from .data import Track
from .graph import Detection, Tracklet, build_box_graph, build_tracklet_graph
from .tracklet_embed import tracklet_forward


@dataclass
class TrackerConfig:
    box_window: int = 17
    tracklet_window: int = 65
    tau_box: float = 0.3
    tau_track: float = 0.9
    attention_gate: bool = False
    min_confidence: float = 0.0
    use_tracklets: bool = True

    def __post_init__(self):
        if self.box_window < 2 or self.tracklet_window < 2:
            raise ValueError("window lengths must be >= 2")


def window_starts(n_frames, length):
    """Starts of half-overlapping windows that cover ``[0, n_frames)``."""
    if n_frames <= 0:
        return []
    stride = max(length // 2, 1)
    starts = [0]
    while starts[-1] + length < n_frames:
        starts.append(starts[-1] + stride)
    return starts


class UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        keep, drop = min(ra, rb), max(ra, rb)
        self.parent[drop] = keep
        return keep


def _embedding_distances(emb):
    emb = np.asarray(emb, dtype=float)
    sq = np.sum(emb * emb, axis=1)
    return np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * emb @ emb.T, 0.0))


def associate_boxes_window(graph, out, cfg: TrackerConfig):
    """Chain boxes across adjacent frames by optimal embedding-distance matching.

    Returns tracklets whose ``provenance`` lists the graph node indices.
    """
    n = graph.n
    if n == 0:
        return []
    dist = _embedding_distances(out.embeddings)
    if cfg.attention_gate:
        dist = np.where(np.asarray(out.attention) < 0.5, np.inf, dist)
    frames = graph.frame_of
    by_frame: dict[int, list[int]] = {}
    for i, f in enumerate(frames):
        by_frame.setdefault(int(f), []).append(i)
    succ = [-1] * n
    has_pred = [False] * n
    for f in sorted(by_frame):
        if f + 1 not in by_frame:
            continue
        a, b = by_frame[f], by_frame[f + 1]
        cost = dist[np.ix_(a, b)]
        for r, c in min_cost_assignment(np.where(np.isfinite(cost), cost, 1e9), cfg.tau_box):
            succ[a[r]] = b[c]
            has_pred[b[c]] = True
    tracklets = []
    order = sorted(range(n), key=lambda i: (frames[i], i))
    for i in order:
        if has_pred[i]:
            continue
        chain = [i]
        while succ[chain[-1]] >= 0:
            chain.append(succ[chain[-1]])
        tracklets.append(chain)
    return [_chain_tracklet(k, chain, graph) for k, chain in enumerate(tracklets)]


def _chain_tracklet(k, chain, graph):
    boxes = [Detection(int(graph.frame_of[i]), *map(float, graph.features[i])) for i in chain]
    return Tracklet(k, boxes, provenance=list(chain))


def associate_tracklets_window(graph, embeddings, cfg: TrackerConfig):
    """Bottom-up greedy merging of temporally disjoint tracklets.

    Candidate pairs (adjacent and closer than ``tau_track``) are visited in
    ascending distance, ties by index; a merge is accepted only if the two
    groups' occupied frames stay disjoint. Returns groups of node indices.
    """
    n = graph.n
    if n == 0:
        return []
    dist = _embedding_distances(embeddings)
    occ = graph.masks[:, 0, :] > 0
    adj = graph.adjacency
    cands = [
        (dist[i, j], i, j)
        for i in range(n) for j in range(i + 1, n)
        if adj[i, j] > 0 and dist[i, j] < cfg.tau_track
    ]
    cands.sort()
    uf = UnionFind(n)
    group_occ = {i: occ[i].copy() for i in range(n)}
    for _, i, j in cands:
        ri, rj = uf.find(i), uf.find(j)
        if ri == rj or np.any(group_occ[ri] & group_occ[rj]):
            continue
        merged = group_occ.pop(ri) | group_occ.pop(rj)
        group_occ[uf.union(ri, rj)] = merged
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(uf.find(i), []).append(i)
    return [groups[r] for r in sorted(groups)]


class StitchState:
    """Global labels for units (detections or tracklets) across windows."""

    def __init__(self, n_units, unit_frames):
        self.labels = np.full(n_units, -1, dtype=np.int64)
        self.unit_frames = unit_frames
        self.label_frames: dict[int, set[int]] = {}
        self.next_id = 0

    def _assign(self, units, label):
        for u in units:
            self.labels[u] = label
            self.label_frames.setdefault(label, set()).update(self.unit_frames[u])

    def stitch(self, groups, weights):
        """Label the unlabeled members of each new group.

        A group inherits the existing label it shares the most weight with
        (ties -> lower label); each existing label is inherited at most once
        per window and only when frames stay disjoint. Otherwise the group
        gets a fresh label.
        """
        claims = []
        for gi, units in enumerate(groups):
            shared: dict[int, float] = {}
            for u in units:
                lab = int(self.labels[u])
                if lab >= 0:
                    shared[lab] = shared.get(lab, 0.0) + weights[u]
            for lab, cnt in shared.items():
                if cnt > 0:
                    claims.append((-cnt, lab, gi))
        claims.sort()
        taken_labels, inherited = set(), {}
        for _, lab, gi in claims:
            if gi in inherited or lab in taken_labels:
                continue
            inherited[gi] = lab
            taken_labels.add(lab)
        for gi, units in enumerate(groups):
            fresh = [u for u in units if self.labels[u] < 0]
            if not fresh:
                continue
            lab = inherited.get(gi)
            if lab is not None:
                frames = set().union(*(self.unit_frames[u] for u in fresh))
                if frames & self.label_frames.get(lab, set()):
                    lab = None
            if lab is None:
                lab = self.next_id
                self.next_id += 1
            self.next_id = max(self.next_id, lab + 1)
            # units disjoint inside the window may still collide beyond it
            spill = [lab]
            for u in fresh:
                target = next((s for s in spill if not self.unit_frames[u] & self.label_frames.get(s, set())), None)
                if target is None:
                    target = self.next_id
                    self.next_id += 1
                    spill.append(target)
                self._assign([u], target)


def _flatten(detections):
    if detections and isinstance(detections[0], (list, tuple)):
        dets = [d for frame in detections for d in frame]
    else:
        dets = list(detections)
    return sorted(dets, key=lambda d: d.frame)


def box_stage(dets, n_frames, box_model, cfg: TrackerConfig):
    """Label every detection with a tracklet id."""
    frames = np.array([d.frame for d in dets], dtype=np.int64)
    state = StitchState(len(dets), [{int(f)} for f in frames])
    weights = np.ones(len(dets))
    for s in window_starts(n_frames, cfg.box_window):
        idx = np.flatnonzero((frames >= s) & (frames < s + cfg.box_window))
        if idx.size == 0:
            continue
        graph = build_box_graph([dets[i] for i in idx], dtype=box_model.dtype)
        out = box_forward(graph, box_model)
        chains = associate_boxes_window(graph, out, cfg)
        state.stitch([[int(idx[i]) for i in t.provenance] for t in chains], weights)
    return state.labels


def tracklet_stage(dets, tracklet_labels, n_frames, tracklet_model, cfg: TrackerConfig):
    """Map tracklet ids to track ids; returns the per-detection track labels."""
    frames = np.array([d.frame for d in dets], dtype=np.int64)
    ids = sorted(set(int(x) for x in tracklet_labels))
    members = {t: np.flatnonzero(tracklet_labels == t) for t in ids}
    unit_frames = [set(int(f) for f in frames[members[t]]) for t in ids]
    state = StitchState(len(ids), unit_frames)
    steps = cfg.tracklet_window
    prev_end = None
    for s in window_starts(n_frames, steps):
        units, trks = [], []
        for u, t in enumerate(ids):
            m = members[t]
            inside = m[(frames[m] >= s) & (frames[m] < s + steps)]
            if inside.size:
                units.append(u)
                trks.append(Tracklet(u, [dets[i] for i in inside]))
        if not units:
            prev_end = s + steps
            continue
        graph = build_tracklet_graph(trks, s, steps, ids=[-1] * len(trks), dtype=tracklet_model.dtype)
        out = tracklet_forward(graph, tracklet_model)
        groups = associate_tracklets_window(graph, out.embeddings, cfg)
        lo, hi = s, prev_end if prev_end is not None else s
        weights = np.zeros(len(ids))
        for u in units:
            f = frames[members[ids[u]]]
            weights[u] = np.count_nonzero((f >= lo) & (f < hi))
        state.stitch([[units[i] for i in g] for g in groups], weights)
        prev_end = s + steps
    lut = {t: int(state.labels[u]) for u, t in enumerate(ids)}
    return np.array([lut[int(t)] for t in tracklet_labels], dtype=np.int64)


def _tracks_from_labels(dets, labels):
    by: dict[int, list] = {}
    for d, lab in zip(dets, labels):
        by.setdefault(int(lab), []).append(d.with_id(int(lab)))
    return [Track(lab, sorted(boxes, key=lambda d: d.frame)) for lab, boxes in sorted(by.items())]


def track_sequence(detections, n_frames, box_model, tracklet_model=None, cfg: TrackerConfig | None = None):
    """Track one sequence; every kept detection lands in exactly one track.

    ``detections`` is a flat list or a per-frame list of :class:`Detection`.
    Without a tracklet model (or with ``cfg.use_tracklets`` off) the box
    stage's tracklets are the output tracks.
    """
    cfg = cfg or TrackerConfig()
    dets = [d for d in _flatten(detections) if d.confidence >= cfg.min_confidence]
    if not dets:
        return []
    labels = box_stage(dets, n_frames, box_model, cfg)
    if tracklet_model is not None and cfg.use_tracklets:
        labels = tracklet_stage(dets, labels, n_frames, tracklet_model, cfg)
    return _tracks_from_labels(dets, labels)


def iou_baseline(detections, n_frames=None, sigma_iou=0.3):
    """Adjacent-frame IoU tracker: optimal IoU matching between consecutive frames.

    A track ends as soon as it finds no match in the next frame.
    """
    dets = _flatten(detections)
    if not dets:
        return []
    by_frame: dict[int, list[int]] = {}
    for i, d in enumerate(dets):
        by_frame.setdefault(d.frame, []).append(i)
    labels = np.full(len(dets), -1, dtype=np.int64)
    next_id = 0
    prev_frame, prev = None, []
    for f in sorted(by_frame):
        cur = by_frame[f]
        if prev_frame == f - 1 and prev:
            iou = iou_matrix([dets[i].box for i in prev], [dets[j].box for j in cur])
            for r, c in min_cost_assignment(1.0 - iou, 1.0 - sigma_iou + 1e-12):
                labels[cur[c]] = labels[prev[r]]
        for j in cur:
            if labels[j] < 0:
                labels[j] = next_id
                next_id += 1
        prev_frame, prev = f, cur
    return _tracks_from_labels(dets, labels)
