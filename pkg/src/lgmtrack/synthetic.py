"""Seeded synthetic traffic scenes with ground truth.

Vehicles follow smooth second-order motion (bounded acceleration and turn
rate). Detections are the ground-truth boxes with Gaussian jitter, random
misses, occlusion misses and uniform clutter. Detections keep the identity of
the object that produced them in ``track_id`` (-1 for clutter); file writers
drop it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .data import Sequence, Track
from .graph import Detection
from .numerics import ConfigError


@dataclass
class SyntheticConfig:
    objects_min: int = 8
    objects_max: int = 8
    frames: int = 300
    width: float = 1242.0
    height: float = 375.0
    speed_min: float = 0.003
    speed_max: float = 0.010
    accel_max: float = 0.0004
    turn_rate_max: float = 0.01
    size_min: float = 0.05
    size_max: float = 0.12
    noise_sigma: float = 0.01
    fn_rate: float = 0.15
    fp_rate: float = 0.05
    occlusion_iou: float = 0.3
    max_occlusion: int = 20
    respawn_delay: int = 10
    seed: int = 0

    def validate(self):
        if self.frames < 1:
            raise ConfigError("frames must be >= 1")
        if not 0 <= self.objects_min <= self.objects_max:
            raise ConfigError("need 0 <= objects_min <= objects_max")
        for name in ("fn_rate", "fp_rate", "occlusion_iou"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.noise_sigma < 0 or self.speed_min < 0 or self.speed_min > self.speed_max:
            raise ConfigError("invalid noise or speed range")
        if self.size_min <= 0 or self.size_min > self.size_max:
            raise ConfigError("invalid size range")

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]


def box_iou(a, b):
    """IoU of two center-format boxes (x, y, w, h)."""
    ax0, ay0, ax1, ay1 = a[0] - a[2] / 2, a[1] - a[3] / 2, a[0] + a[2] / 2, a[1] + a[3] / 2
    bx0, by0, bx1, by1 = b[0] - b[2] / 2, b[1] - b[3] / 2, b[0] + b[2] / 2, b[1] + b[3] / 2
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a[2] * a[3] + b[2] * b[3] - inter)


class _Vehicle:
    def __init__(self, rng, cfg, entering):
        self.w = rng.uniform(cfg.size_min, cfg.size_max)
        self.h = self.w * rng.uniform(1.6, 2.4)
        self.speed = rng.uniform(cfg.speed_min, cfg.speed_max)
        leftward = rng.random() < 0.5
        self.heading = (math.pi if leftward else 0.0) + rng.uniform(-0.25, 0.25)
        self.turn = 0.0
        self.y = rng.uniform(0.3, 0.85)
        if entering:
            self.x = 1.0 if leftward else 0.0
        else:
            self.x = rng.uniform(0.05, 0.95)

    def step(self, rng, cfg, aspect):
        self.speed += rng.uniform(-cfg.accel_max, cfg.accel_max)
        self.speed = min(max(self.speed, cfg.speed_min), cfg.speed_max)
        self.turn = 0.9 * self.turn + rng.uniform(-0.3, 0.3) * cfg.turn_rate_max
        self.turn = min(max(self.turn, -cfg.turn_rate_max), cfg.turn_rate_max)
        self.heading += self.turn
        self.x += self.speed * math.cos(self.heading)
        self.y += self.speed * math.sin(self.heading) * aspect
        # keep vehicles on the road band by mirroring the vertical heading
        if self.y < 0.25 or self.y > 0.9:
            self.y = min(max(self.y, 0.25), 0.9)
            self.heading = -self.heading
            self.turn = -self.turn

    def inside(self):
        return -0.02 <= self.x <= 1.02

    def box(self):
        return (self.x, self.y, self.w, self.h)


def _clip_box(x, y, w, h):
    return (min(max(x, 0.0), 1.0), min(max(y, 0.0), 1.0), max(w, 1e-3), max(h, 1e-3))


def generate_synthetic(cfg: SyntheticConfig, name=None) -> Sequence:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    aspect = cfg.width / cfg.height
    n_slots = int(rng.integers(cfg.objects_min, cfg.objects_max + 1))
    vehicles = [_Vehicle(rng, cfg, entering=False) for _ in range(n_slots)]
    ids = list(range(n_slots))
    wait = [0] * n_slots
    next_id = n_slots
    hidden_run = {}
    gt: dict[int, list[Detection]] = {}
    frames = []
    for f in range(cfg.frames):
        present = []
        for s in range(n_slots):
            v = vehicles[s]
            if v is None:
                wait[s] -= 1
                if wait[s] <= 0:
                    vehicles[s] = _Vehicle(rng, cfg, entering=True)
                    ids[s] = next_id
                    next_id += 1
                continue
            if f > 0:
                v.step(rng, cfg, aspect)
            if not v.inside():
                vehicles[s] = None
                wait[s] = int(rng.integers(1, cfg.respawn_delay + 1))
                continue
            box = _clip_box(*v.box())
            present.append((ids[s], box))
            gt.setdefault(ids[s], []).append(Detection(f, *box, 1.0, ids[s]))

        dets = []
        for tid, box in present:
            # nearer objects have a lower bottom edge (larger y + h/2)
            bottom = box[1] + box[3] / 2
            occluded = any(
                other[1] + other[3] / 2 > bottom and box_iou(box, other) > cfg.occlusion_iou
                for oid, other in present if oid != tid
            )
            if occluded and cfg.occlusion_iou < 1.0 and hidden_run.get(tid, 0) < cfg.max_occlusion:
                hidden_run[tid] = hidden_run.get(tid, 0) + 1
                continue
            hidden_run[tid] = 0
            if rng.random() < cfg.fn_rate:
                continue
            if cfg.noise_sigma > 0:
                jit = rng.normal(0.0, cfg.noise_sigma, size=4)
                box = _clip_box(*(np.asarray(box) + jit))
            dets.append(Detection(f, *box, 1.0, tid))
        for _ in present:
            if rng.random() < cfg.fp_rate:
                w = rng.uniform(cfg.size_min, cfg.size_max)
                box = (rng.uniform(0, 1), rng.uniform(0.25, 0.9), w, w * rng.uniform(1.6, 2.4))
                dets.append(Detection(f, *_clip_box(*box), 1.0, -1))
        frames.append(dets)

    tracks = [Track(tid, boxes) for tid, boxes in sorted(gt.items())]
    return Sequence(name or f"synth{cfg.seed:04d}", cfg.frames, cfg.width, cfg.height, frames, tracks)
