"""Box graphs and tracklet graphs built from detections."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    """One box in one frame, normalized to [0, 1] by image width/height.

    ``x, y`` are the box center. ``track_id`` carries a ground-truth or
    output identity when one is known (-1 otherwise).
    """

    frame: int
    x: float
    y: float
    w: float
    h: float
    confidence: float = 1.0
    track_id: int = -1

    def __post_init__(self):
        if self.frame < 0:
            raise ContractError(f"negative frame {self.frame}")
        if not (self.w > 0 and self.h > 0):
            raise ContractError(f"box size must be positive, got w={self.w}, h={self.h}")
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise ContractError(f"box center ({self.x}, {self.y}) outside the unit square")

    @property
    def box(self):
        return (self.x, self.y, self.w, self.h)

    def with_id(self, track_id):
        return Detection(self.frame, self.x, self.y, self.w, self.h, self.confidence, track_id)


@dataclass
class Tracklet:
    """A run of boxes with strictly increasing frames (gaps allowed)."""

    local_id: int
    boxes: list[Detection]
    provenance: list[int] = field(default_factory=list)

    def __post_init__(self):
        frames = [d.frame for d in self.boxes]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ContractError(f"tracklet {self.local_id}: frames must strictly increase, got {frames}")

    @property
    def frames(self):
        return [d.frame for d in self.boxes]

    @property
    def start(self):
        return self.boxes[0].frame

    @property
    def end(self):
        return self.boxes[-1].frame


@dataclass
class BoxGraph:
    features: np.ndarray  # N×4
    adjacency: np.ndarray  # N×N, zero diagonal
    frame_of: np.ndarray
    id_of: np.ndarray

    @property
    def n(self):
        return self.features.shape[0]


@dataclass
class TrackletGraph:
    features: np.ndarray  # N×4×T
    masks: np.ndarray  # N×1×T
    adjacency: np.ndarray  # N×N
    window_start: int
    id_of: np.ndarray

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def steps(self):
        return self.features.shape[2]


def build_box_graph(detections, window=None, ids=None, min_confidence=0.0, dtype=np.float64):
    """Nodes are detections; edges join boxes exactly one frame apart.

    ``window`` is an optional half-open ``(start, stop)`` frame range; boxes
    outside it are a contract violation. ``ids`` overrides the identities
    stored on the detections.
    """
    dets = list(detections)
    if window is not None:
        lo, hi = window
        for d in dets:
            if not lo <= d.frame < hi:
                raise ContractError(f"detection in frame {d.frame} outside window [{lo}, {hi})")
    keep = [i for i, d in enumerate(dets) if d.confidence >= min_confidence]
    dets = [dets[i] for i in keep]
    if ids is None:
        id_of = np.array([d.track_id for d in dets], dtype=np.int64)
    else:
        id_of = np.asarray(ids, dtype=np.int64)[keep]
    n = len(dets)
    feats = np.array([d.box for d in dets], dtype=dtype).reshape(n, 4)
    frame_of = np.array([d.frame for d in dets], dtype=np.int64)
    adj = (np.abs(frame_of[:, None] - frame_of[None, :]) == 1).astype(dtype)
    return BoxGraph(feats, adj, frame_of, id_of)


def build_tracklet_graph(tracklets, window_start, steps, ids=None, dtype=np.float64):
    """Zero-padded tracklet features/masks over ``[window_start, window_start + steps)``.

    Boxes outside the window are clipped away; a tracklet with no box inside
    the window is a contract violation. Two tracklets are adjacent when they
    share no occupied frame.
    """
    if steps < 1:
        raise ContractError("window length must be >= 1")
    n = len(tracklets)
    feats = np.zeros((n, 4, steps), dtype=dtype)
    masks = np.zeros((n, 1, steps), dtype=dtype)
    for i, trk in enumerate(tracklets):
        hit = False
        for d in trk.boxes:
            t = d.frame - window_start
            if 0 <= t < steps:
                feats[i, :, t] = d.box
                masks[i, 0, t] = 1.0
                hit = True
        if not hit:
            raise ContractError(f"tracklet {trk.local_id} does not intersect window at {window_start}")
    occ = masks[:, 0, :]
    overlap = occ @ occ.T
    adj = (overlap == 0).astype(dtype)
    np.fill_diagonal(adj, 0.0)
    if ids is None:
        ids = [trk.boxes[0].track_id for trk in tracklets]
    return TrackletGraph(feats, masks, adj, window_start, np.asarray(ids, dtype=np.int64).reshape(n))


def sym_normalize(a, eps=numerics.DEGREE_EPS):
    """Plain-array symmetric degree normalization (see ``numerics.sym_normalize``)."""
    return numerics.sym_normalize(numerics.Tensor(np.asarray(a, dtype=float)), eps).data
