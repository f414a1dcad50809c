"""Training-window sampling and augmentation.

Windows are cut from ground-truth tracks; augmentation flips, jitters, drops
boxes (false negatives), injects clutter (false positives, id -2) and, for
tracklet windows, splits tracks into temporally disjoint pieces.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import BoxGraph, Detection, Tracklet, TrackletGraph, build_box_graph, build_tracklet_graph

FP_ID = -2


@dataclass
class AugmentConfig:
    flip_prob: float = 0.5
    center_jitter: float = 0.02
    size_jitter: float = 0.05
    fp_rate: float = 0.10
    fn_rate: float = 0.10
    max_cuts: int = 3
    max_gap: int = 20
    break_at_gaps: bool = True

    @classmethod
    def identity(cls):
        return cls(flip_prob=0.0, center_jitter=0.0, size_jitter=0.0, fp_rate=0.0, fn_rate=0.0, max_cuts=0)


@dataclass
class GroundTruthWindow:
    ids: np.ndarray  # N
    tracks: np.ndarray  # N×4×T, X*
    occupancy: np.ndarray  # N×1×T, M*


def flip_boxes(dets):
    return [Detection(d.frame, 1.0 - d.x, d.y, d.w, d.h, d.confidence, d.track_id) for d in dets]


def window_tracks(tracks, start, steps):
    """Ground-truth boxes of each track clipped to ``[start, start + steps)``."""
    out = []
    for trk in tracks:
        boxes = [d.with_id(trk.track_id) for d in trk.boxes if start <= d.frame < start + steps]
        if boxes:
            out.append(boxes)
    return out


def _jitter(d, rng, cfg):
    if cfg.center_jitter == 0 and cfg.size_jitter == 0:
        return d
    cx, cy = rng.uniform(-cfg.center_jitter, cfg.center_jitter, size=2)
    sw, sh = rng.uniform(-cfg.size_jitter, cfg.size_jitter, size=2)
    return Detection(
        d.frame,
        float(np.clip(d.x + cx, 0.0, 1.0)),
        float(np.clip(d.y + cy, 0.0, 1.0)),
        d.w * (1.0 + sw),
        d.h * (1.0 + sh),
        d.confidence,
        d.track_id,
    )


def _false_positives(boxes, start, steps, rng, cfg):
    n_fp = int(rng.binomial(len(boxes), cfg.fp_rate)) if cfg.fp_rate > 0 and boxes else 0
    out = []
    for _ in range(n_fp):
        ref = boxes[int(rng.integers(len(boxes)))]
        out.append(Detection(int(rng.integers(start, start + steps)), float(rng.uniform(0, 1)),
                             float(rng.uniform(0, 1)), ref.w, ref.h, 1.0, FP_ID))
    return out


def augment_box_window(tracks, start, steps, rng, cfg: AugmentConfig):
    """Returns ``(BoxGraph, labels)`` for one box window."""
    boxes = [d for trk in window_tracks(tracks, start, steps) for d in trk]
    if rng.random() < cfg.flip_prob:
        boxes = flip_boxes(boxes)
    if cfg.fn_rate > 0:
        boxes = [d for d in boxes if rng.random() >= cfg.fn_rate]
    boxes = [_jitter(d, rng, cfg) for d in boxes]
    boxes = boxes + _false_positives(boxes, start, steps, rng, cfg)
    boxes.sort(key=lambda d: (d.frame, d.track_id, d.x))
    graph = build_box_graph(boxes, window=(start, start + steps))
    return graph, graph.id_of.copy()


def split_track(boxes, cuts):
    """Split a frame-sorted box list at ``cuts`` = [(frame, gap), ...].

    Frames ``[frame, frame + gap)`` are removed at each cut; returns the
    non-empty pieces in temporal order.
    """
    if len(boxes) < 2 or not cuts:
        return [list(boxes)] if boxes else []
    removed = set()
    bounds = set()
    for frame, gap in cuts:
        removed.update(range(frame, frame + gap))
        bounds.add(frame)
    pieces, cur = [], []
    for d in boxes:
        if d.frame in removed:
            if cur:
                pieces.append(cur)
                cur = []
            continue
        if d.frame in bounds and cur:
            pieces.append(cur)
            cur = []
        cur.append(d)
    if cur:
        pieces.append(cur)
    return pieces


def _break_gaps(piece):
    out, cur = [], [piece[0]]
    for a, b in zip(piece, piece[1:]):
        if b.frame - a.frame > 1:
            out.append(cur)
            cur = []
        cur.append(b)
    out.append(cur)
    return out


def augment_tracklet_window(tracks, start, steps, rng, cfg: AugmentConfig):
    """Returns ``(TrackletGraph, GroundTruthWindow)`` for one tracklet window.

    Every piece carries the full clean ground-truth track of its identity
    (inside the window) as its reconstruction target.
    """
    clipped = window_tracks(tracks, start, steps)
    flip = rng.random() < cfg.flip_prob
    pieces, targets = [], []
    for boxes in clipped:
        if flip:
            boxes = flip_boxes(boxes)
        target = boxes
        cuts = []
        if len(boxes) >= 2 and cfg.max_cuts > 0:
            n_cuts = int(rng.integers(0, cfg.max_cuts + 1))
            interior = [d.frame for d in boxes[1:]]
            for _ in range(n_cuts):
                cuts.append((int(interior[int(rng.integers(len(interior)))]),
                             int(rng.integers(1, cfg.max_gap + 1))))
        for piece in split_track(boxes, cuts):
            if cfg.fn_rate > 0:
                piece = [d for d in piece if rng.random() >= cfg.fn_rate]
            if not piece:
                continue
            piece = [_jitter(d, rng, cfg) for d in piece]
            for sub in (_break_gaps(piece) if cfg.break_at_gaps else [piece]):
                pieces.append(sub)
                targets.append(target)
    flat = [d for p in pieces for d in p]
    for fp in _false_positives(flat, start, steps, rng, cfg):
        pieces.append([fp])
        targets.append([fp])
    tracklets = [Tracklet(i, p) for i, p in enumerate(pieces)]
    ids = [p[0].track_id for p in pieces]
    graph = build_tracklet_graph(tracklets, start, steps, ids=ids)
    gt_x = np.zeros_like(graph.features)
    gt_m = np.zeros_like(graph.masks)
    for i, target in enumerate(targets):
        for d in target:
            t = d.frame - start
            gt_x[i, :, t] = d.box
            gt_m[i, 0, t] = 1.0
    return graph, GroundTruthWindow(graph.id_of.copy(), gt_x, gt_m)
