"""Training loops for the box and tracklet embedding networks."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .augment import AugmentConfig, augment_box_window, augment_tracklet_window
from .box_embed import BoxEmbedModel, box_forward
from .losses import LossConfig, box_total_loss, tracklet_total_loss
from .optim import Adam, cosine_lr
from .tracklet_embed import TrackletEmbedModel, tracklet_forward

log = logging.getLogger(__name__)

BOX_WINDOW = 17
TRACKLET_WINDOW = 65


class NumericFailure(RuntimeError):
    """Raised when a loss turns non-finite; ``window`` holds the offending sample."""

    def __init__(self, message, window=None):
        super().__init__(message)
        self.window = window


@dataclass
class TrainConfig:
    lr: float = 1e-3
    max_steps: int = 20000
    batch: int = 1
    seed: int = 0
    float64: bool = False
    log_every: int = 100


def sample_window(kind, sequences, steps, rng, aug: AugmentConfig, attempts=20):
    """Draw one augmented window; returns ``(graph, labels_or_gt)``."""
    for _ in range(attempts):
        seq = sequences[int(rng.integers(len(sequences)))]
        start = int(rng.integers(0, max(seq.n_frames - steps, 0) + 1))
        if kind == "box":
            graph, labels = augment_box_window(seq.tracks, start, steps, rng, aug)
        else:
            graph, labels = augment_tracklet_window(seq.tracks, start, steps, rng, aug)
        if graph.n >= 2:
            return graph, labels
    raise ValueError("could not sample a non-trivial training window; dataset too sparse")


def window_loss(kind, model, sample, loss_cfg):
    """Forward + total loss for one prepared window: ``(total, components)``."""
    graph, labels = sample
    if kind == "box":
        out = box_forward(graph, model, as_tensors=True)
        return box_total_loss(out, labels, graph.adjacency, loss_cfg)
    out = tracklet_forward(graph, model, as_tensors=True)
    return tracklet_total_loss(out, labels, graph.adjacency, loss_cfg)


def train_module(kind, model, sequences=None, train_cfg=None, loss_cfg=None, aug_cfg=None,
                 windows=None, callback=None):
    """Seeded Adam + cosine schedule training loop.

    Either ``sequences`` (ground-truth scenes, sampled and augmented every
    step) or ``windows`` (fixed prepared samples, all used every step) supply
    the data. Returns ``(model, curve)`` where ``curve`` is a list of row
    dicts ``{step, loss, lr, <components>}``. ``model`` is updated in place.
    """
    if kind not in ("box", "tracklet"):
        raise nx.ConfigError(f"unknown module kind {kind!r}")
    train_cfg = train_cfg or TrainConfig()
    loss_cfg = loss_cfg or LossConfig()
    aug_cfg = aug_cfg or AugmentConfig()
    if not windows and not sequences:
        raise ValueError("training needs a non-empty dataset")
    rng = np.random.default_rng(train_cfg.seed)
    steps = BOX_WINDOW if kind == "box" else model.steps
    if kind == "box" and "window" in model.config:
        steps = int(model.config["window"])
    opt = Adam(model.params)
    curve = []
    for step in range(train_cfg.max_steps):
        lr = cosine_lr(step, train_cfg.lr, train_cfg.max_steps)
        batch = windows if windows else [
            sample_window(kind, sequences, steps, rng, aug_cfg) for _ in range(train_cfg.batch)
        ]
        grads = {k: np.zeros_like(p.data) for k, p in model.params.items()}
        total = 0.0
        parts: dict[str, float] = {}
        for sample in batch:
            loss, comps = window_loss(kind, model, sample, loss_cfg)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericFailure(f"non-finite loss {value} at step {step}", window=sample)
            g = nx.backward(loss, model.params)
            for k in grads:
                grads[k] += g[k]
            total += value
            for name, c in comps.items():
                parts[name] = parts.get(name, 0.0) + float(c.data)
        scale = 1.0 / len(batch)
        for k in grads:
            grads[k] *= scale
        opt.step(model.params, grads, lr)
        row = {"step": step, "loss": total * scale, "lr": lr}
        row.update({k: v * scale for k, v in parts.items()})
        curve.append(row)
        if callback is not None:
            callback(row)
        if train_cfg.log_every and step % train_cfg.log_every == 0:
            log.info("%s step %d loss %.5f lr %.2e", kind, step, row["loss"], lr)
    return model, curve


def evaluate_loss(kind, model, windows, loss_cfg):
    """Mean total loss over prepared windows (no update)."""
    vals = [float(window_loss(kind, model, w, loss_cfg)[0].data) for w in windows]
    return float(np.mean(vals))


def write_curve(path, curve):
    if not curve:
        open(path, "w").close()
        return
    keys = ["step", "loss", "lr"] + [k for k in curve[0] if k not in ("step", "loss", "lr")]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(keys)
        for row in curve:
            writer.writerow([row["step"]] + [f"{row[k]:.8e}" for k in keys[1:]])


def make_model(kind, preset="desk", seed=0, float64=False, **overrides):
    """Build a fresh model from a named size preset."""
    dtype = np.float64 if float64 else np.float32
    if kind == "box":
        cfg = dict(BOX_PRESETS[preset])
        cfg.update(overrides)
        return BoxEmbedModel.create(seed=seed, dtype=dtype, **cfg)
    cfg = dict(TRACKLET_PRESETS[preset])
    cfg.update(overrides)
    return TrackletEmbedModel.create(seed=seed, dtype=dtype, **cfg)


BOX_PRESETS = {
    "full": {"blocks": 8, "width": 128, "att_hidden": 16},
    "desk": {"blocks": 4, "width": 64, "att_hidden": 16},
}
TRACKLET_PRESETS = {
    "full": {"blocks": 4, "steps": 65, "tgc_layers": 6, "tgc_width": 32, "head_hidden": 256, "dim": 128},
    "desk": {"blocks": 2, "steps": 65, "tgc_layers": 6, "tgc_width": 16, "head_hidden": 128, "dim": 64},
}
