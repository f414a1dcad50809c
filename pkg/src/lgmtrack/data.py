"""Sequences and tracks: the units the file formats and the tracker exchange."""
from __future__ import annotations

from dataclasses import dataclass, field

from .graph import ContractError, Detection


@dataclass
class Track:
    track_id: int
    boxes: list[Detection]

    def __post_init__(self):
        frames = [d.frame for d in self.boxes]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ContractError(f"track {self.track_id}: frames must strictly increase")

    @property
    def frames(self):
        return [d.frame for d in self.boxes]


@dataclass
class Sequence:
    name: str
    n_frames: int
    width: float
    height: float
    detections: list[list[Detection]] = field(default_factory=list)
    tracks: list[Track] | None = None

    def __post_init__(self):
        if not self.detections:
            self.detections = [[] for _ in range(self.n_frames)]

    def all_detections(self):
        return [d for frame in self.detections for d in frame]

    def num_detections(self):
        return sum(len(f) for f in self.detections)


def tracks_from_detections(dets):
    """Group id-carrying detections into tracks sorted by id (ids < 0 dropped)."""
    by_id: dict[int, list[Detection]] = {}
    for d in dets:
        if d.track_id >= 0:
            by_id.setdefault(d.track_id, []).append(d)
    return [Track(tid, sorted(boxes, key=lambda d: d.frame)) for tid, boxes in sorted(by_id.items())]


def detections_by_frame(dets, n_frames):
    frames = [[] for _ in range(n_frames)]
    for d in dets:
        frames[d.frame].append(d)
    return frames
