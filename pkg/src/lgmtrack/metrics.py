"""CLEAR-MOT and identity metrics (MOTA, MOTP, IDS, FRAG, MT, ML, IDF1)."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .assignment import iou_matrix, min_cost_assignment


@dataclass
class EvalReport:
    mota: float = math.nan
    motp: float = math.nan
    idf1: float = math.nan
    fp: int = 0
    fn: int = 0
    ids: int = 0
    frag: int = 0
    mt: float = 0.0  # percent of GT tracks
    ml: float = 0.0
    num_gt: int = 0
    num_pred: int = 0
    matches: int = 0
    idtp: int = 0
    num_gt_tracks: int = 0
    per_sequence: dict = field(default_factory=dict)

    def row(self):
        d = asdict(self)
        d.pop("per_sequence")
        return d


def _by_frame(tracks):
    frames: dict[int, list[tuple[int, tuple]]] = {}
    for trk in tracks:
        for d in trk.boxes:
            frames.setdefault(d.frame, []).append((trk.track_id, d.box))
    return frames


def _frame_matches(gt_items, pr_items, prev, thresh):
    """Matches for one frame: keep last frame's pairs above threshold, then
    solve the remaining pairs optimally on IoU. Returns {gt_id: (pr_id, iou)}."""
    if not gt_items or not pr_items:
        return {}
    gids = [g for g, _ in gt_items]
    pids = [p for p, _ in pr_items]
    iou = iou_matrix([b for _, b in gt_items], [b for _, b in pr_items])
    out = {}
    used_g, used_p = set(), set()
    gidx = {g: i for i, g in enumerate(gids)}
    pidx = {p: j for j, p in enumerate(pids)}
    for g, p in sorted(prev.items()):
        if g in gidx and p in pidx and p not in used_p:
            v = iou[gidx[g], pidx[p]]
            if v >= thresh:
                out[g] = (p, float(v))
                used_g.add(g)
                used_p.add(p)
    rest_g = [i for i, g in enumerate(gids) if g not in used_g]
    rest_p = [j for j, p in enumerate(pids) if p not in used_p]
    if rest_g and rest_p:
        sub = iou[np.ix_(rest_g, rest_p)]
        # invalid pairs cost more than any valid matching can, so cardinality wins first
        big = float(max(sub.shape) + 2)
        cost = np.where(sub >= thresh, 1.0 - sub, big)
        for r, c in min_cost_assignment(cost, 1.5):
            out[gids[rest_g[r]]] = (pids[rest_p[c]], float(sub[r, c]))
    return out


def clear_mot(gt_tracks, pred_tracks, iou_thresh=0.5):
    gt_f = _by_frame(gt_tracks)
    pr_f = _by_frame(pred_tracks)
    frames = sorted(set(gt_f) | set(pr_f))
    rep = EvalReport()
    rep.num_gt = sum(len(t.boxes) for t in gt_tracks)
    rep.num_pred = sum(len(t.boxes) for t in pred_tracks)
    rep.num_gt_tracks = len(gt_tracks)
    prev: dict[int, int] = {}
    last_match: dict[int, int] = {}
    matched_frames = {t.track_id: 0 for t in gt_tracks}
    was_tracked: dict[int, bool] = {}
    pending_gap: dict[int, bool] = {}
    iou_sum = 0.0
    for f in frames:
        g_items = gt_f.get(f, [])
        p_items = pr_f.get(f, [])
        m = _frame_matches(g_items, p_items, prev, iou_thresh)
        rep.matches += len(m)
        rep.fn += len(g_items) - len(m)
        rep.fp += len(p_items) - len(m)
        for g, (p, v) in m.items():
            iou_sum += v
            if g in last_match and last_match[g] != p:
                rep.ids += 1
            last_match[g] = p
            matched_frames[g] += 1
        for g, _ in g_items:
            tracked = g in m
            if tracked and pending_gap.get(g):
                rep.frag += 1
                pending_gap[g] = False
            if not tracked and was_tracked.get(g):
                pending_gap[g] = True
            if tracked:
                was_tracked[g] = True
        prev = {g: p for g, (p, _) in m.items()}
    if rep.num_gt > 0:
        rep.mota = 1.0 - (rep.fp + rep.fn + rep.ids) / rep.num_gt
    if rep.matches:
        rep.motp = iou_sum / rep.matches
    if gt_tracks:
        cover = [matched_frames[t.track_id] / len(t.boxes) for t in gt_tracks if t.boxes]
        rep.mt = 100.0 * sum(c >= 0.8 for c in cover) / len(gt_tracks)
        rep.ml = 100.0 * sum(c <= 0.2 for c in cover) / len(gt_tracks)
    return rep


def idf1(gt_tracks, pred_tracks, iou_thresh=0.5):
    """IDF1 under the optimal one-to-one identity matching; returns (idf1, idtp)."""
    n_gt = sum(len(t.boxes) for t in gt_tracks)
    n_pr = sum(len(t.boxes) for t in pred_tracks)
    if n_gt + n_pr == 0:
        return math.nan, 0
    if n_gt == 0 or n_pr == 0:
        return 0.0, 0
    gi = {t.track_id: i for i, t in enumerate(gt_tracks)}
    pi = {t.track_id: j for j, t in enumerate(pred_tracks)}
    counts = np.zeros((len(gt_tracks), len(pred_tracks)))
    gt_f = _by_frame(gt_tracks)
    pr_f = _by_frame(pred_tracks)
    for f in set(gt_f) & set(pr_f):
        g_items, p_items = gt_f[f], pr_f[f]
        iou = iou_matrix([b for _, b in g_items], [b for _, b in p_items])
        hit = np.argwhere(iou >= iou_thresh)
        for r, c in hit:
            counts[gi[g_items[r][0]], pi[p_items[c][0]]] += 1
    idtp = int(sum(counts[r, c] for r, c in min_cost_assignment(-counts)))
    return 2.0 * idtp / (n_gt + n_pr), idtp


def evaluate(gt_tracks, pred_tracks, iou_thresh=0.5):
    rep = clear_mot(gt_tracks, pred_tracks, iou_thresh)
    rep.idf1, rep.idtp = idf1(gt_tracks, pred_tracks, iou_thresh)
    return rep


def aggregate(reports: dict[str, EvalReport]):
    """Pool per-sequence counts into one report (MOTA/IDF1 from pooled counts)."""
    tot = EvalReport()
    iou_sum = 0.0
    mt = ml = 0.0
    for name, r in reports.items():
        for k in ("fp", "fn", "ids", "frag", "num_gt", "num_pred", "matches", "idtp", "num_gt_tracks"):
            setattr(tot, k, getattr(tot, k) + getattr(r, k))
        if r.matches:
            iou_sum += r.motp * r.matches
        mt += r.mt * r.num_gt_tracks
        ml += r.ml * r.num_gt_tracks
        tot.per_sequence[name] = r
    if tot.num_gt:
        tot.mota = 1.0 - (tot.fp + tot.fn + tot.ids) / tot.num_gt
    if tot.matches:
        tot.motp = iou_sum / tot.matches
    if tot.num_gt + tot.num_pred:
        tot.idf1 = 2.0 * tot.idtp / (tot.num_gt + tot.num_pred)
    if tot.num_gt_tracks:
        tot.mt = mt / tot.num_gt_tracks
        tot.ml = ml / tot.num_gt_tracks
    return tot


COLUMNS = ["name", "mota", "motp", "idf1", "fp", "fn", "ids", "frag", "mt", "ml", "num_gt", "num_pred"]


def report_csv(report: EvalReport):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    rows = list(report.per_sequence.items()) + [("OVERALL", report)]
    for name, r in rows:
        d = r.row()
        w.writerow([name] + [_fmt(d[c]) for c in COLUMNS[1:]])
    return buf.getvalue()


def report_table(report: EvalReport):
    rows = list(report.per_sequence.items()) + [("OVERALL", report)]
    head = f"{'sequence':<16}{'MOTA':>8}{'MOTP':>8}{'IDF1':>8}{'FP':>7}{'FN':>7}{'IDS':>6}{'FRAG':>6}{'MT%':>7}{'ML%':>7}"
    lines = [head, "-" * len(head)]
    for name, r in rows:
        lines.append(
            f"{name:<16}{_pct(r.mota):>8}{_pct(r.motp):>8}{_pct(r.idf1):>8}{r.fp:>7}{r.fn:>7}"
            f"{r.ids:>6}{r.frag:>6}{r.mt:>7.1f}{r.ml:>7.1f}"
        )
    return "\n".join(lines) + "\n"


def _pct(v):
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{100 * v:.2f}"


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6f}"
    return str(v)
