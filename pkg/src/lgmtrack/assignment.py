"""Rectangular min-cost assignment and the IoU helpers shared by tracker and metrics."""
from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment


def min_cost_assignment(cost, max_cost=np.inf):
    """Optimal one-to-one assignment; pairs with cost >= ``max_cost`` are dropped.

    Gating is applied after the optimal assignment is solved.
    Returns a list of ``(row, col)`` pairs sorted by row.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        return []
    rows, cols = linear_sum_assignment(cost)
    return [(int(r), int(c)) for r, c in zip(rows, cols) if cost[r, c] < max_cost]


def iou_matrix(a, b):
    """Pairwise IoU of center-format boxes, shapes (n, 4) and (m, 4)."""
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    a0 = a[:, :2] - a[:, 2:] / 2
    a1 = a[:, :2] + a[:, 2:] / 2
    b0 = b[:, :2] - b[:, 2:] / 2
    b1 = b[:, :2] + b[:, 2:] / 2
    lo = np.maximum(a0[:, None, :], b0[None, :, :])
    hi = np.minimum(a1[:, None, :], b1[None, :, :])
    wh = np.clip(hi - lo, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = a[:, 2] * a[:, 3]
    area_b = b[:, 2] * b[:, 3]
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
