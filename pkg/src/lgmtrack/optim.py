"""Adam with bias correction and a cosine-annealed learning rate."""
from __future__ import annotations

import math

import numpy as np


def cosine_lr(step, base_lr, max_steps):
    """0.5 * base * (1 + cos(pi * step / max_steps)); steps past the end clamp."""
    if max_steps <= 0:
        return 0.0
    step = min(max(step, 0), max_steps)
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * step / max_steps))


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, params, grads, lr):
        """Update ``params`` (name -> Tensor) in place."""
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, p in params.items():
            g = np.asarray(grads[name], dtype=p.dtype)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data -= (lr * update).astype(p.dtype)
