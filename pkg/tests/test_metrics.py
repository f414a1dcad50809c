import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from lgmtrack.data import Track
from lgmtrack.graph import Detection
from lgmtrack.metrics import aggregate, clear_mot, evaluate, idf1, report_csv, report_table


def make_tracks(spec):
    """spec: {id: [(frame, x, y), ...]} with fixed 0.1×0.1 boxes."""
    return [Track(tid, [Detection(f, x, y, 0.1, 0.1, 1.0, tid) for f, x, y in pts]) for tid, pts in sorted(spec.items())]


def as_frames(tracks):
    out = {}
    for t in tracks:
        for d in t.boxes:
            out.setdefault(d.frame, {})[t.track_id] = d.box
    return out


def line(tid, frames, x0=0.2, y=0.5, dx=0.01):
    return {tid: [(f, x0 + dx * f, y) for f in frames]}


def test_perfect_prediction():
    gt = make_tracks({**line(1, range(10)), **line(2, range(10), y=0.8)})
    r = evaluate(gt, gt)
    assert (r.mota, r.fp, r.fn, r.ids, r.mt, r.idf1) == (1.0, 0, 0, 0, 100.0, 1.0)
    assert r.motp == pytest.approx(1.0)


def test_one_miss_one_spurious():
    gt = make_tracks(line(1, range(10)))
    pred = make_tracks({**line(1, [f for f in range(10) if f != 4]), **line(9, [3], y=0.9)})
    r = clear_mot(gt, pred)
    assert (r.fp, r.fn, r.ids) == (1, 1, 0)
    assert r.mota == pytest.approx(0.8)


def test_identity_swap():
    a = line(1, range(10), x0=0.2, dx=0.0)
    b = line(2, range(10), x0=0.6, dx=0.0)
    gt = make_tracks({**a, **b})
    pred = make_tracks({
        7: [(f, 0.2, 0.5) for f in range(5)] + [(f, 0.6, 0.5) for f in range(5, 10)],
        8: [(f, 0.6, 0.5) for f in range(5)] + [(f, 0.2, 0.5) for f in range(5, 10)],
    })
    r = clear_mot(gt, pred)
    assert r.ids == 2 and r.frag == 0
    ref = oracles.clear_mot(as_frames(gt), as_frames(pred))
    assert (r.fp, r.fn, r.ids, r.frag) == (ref["fp"], ref["fn"], ref["ids"], ref["frag"])


def test_fragmentation_counted():
    gt = make_tracks(line(1, range(10)))
    pred = make_tracks(line(1, [0, 1, 2, 6, 7, 8, 9]))
    assert clear_mot(gt, pred).frag == 1


def test_idf1_split_halves_is_one_half():
    """Standard identity F1: only one half can be matched, IDF1 = n / 2n (not 2/3; see the decisions ledger)."""
    gt = make_tracks(line(1, range(10)))
    pred = make_tracks({**line(5, range(5)), **line(6, range(5, 10))})
    value, idtp = idf1(gt, pred)
    assert idtp == 5 and value == pytest.approx(0.5)


def test_idf1_empty_prediction():
    assert idf1(make_tracks(line(1, range(4))), [])[0] == 0.0


def test_empty_ground_truth_is_nan_with_counts():
    pred = make_tracks(line(1, range(4)))
    r = evaluate([], pred)
    assert math.isnan(r.mota) and r.fp == 4


def random_scene(rng, n_obj=3, n_frames=10, jitter=0.03):
    gt, pred = {}, {}
    for k in range(n_obj):
        x, y = rng.uniform(0.2, 0.8, 2)
        vx = rng.uniform(-0.02, 0.02)
        frames = [f for f in range(n_frames) if rng.random() > 0.15]
        gt[k] = [(f, x + vx * f, y) for f in frames]
    pid = 100
    for k in gt:
        cur = []
        for f, x, y in gt[k]:
            if rng.random() < 0.15:
                continue
            if rng.random() < 0.1 and cur:
                pred[pid] = cur
                pid += 1
                cur = []
            cur.append((f, x + rng.uniform(-jitter, jitter), y + rng.uniform(-jitter, jitter)))
        if cur:
            pred[pid] = cur
            pid += 1
    for _ in range(int(rng.integers(0, 4))):
        pred[pid] = [(int(rng.integers(n_frames)), *rng.uniform(0.1, 0.9, 2))]
        pid += 1
    return make_tracks(gt), make_tracks(pred)


@pytest.mark.parametrize("seed", range(100))
def test_clear_mot_matches_brute_force(seed):
    gt, pred = random_scene(np.random.default_rng(seed))
    r = clear_mot(gt, pred)
    ref = oracles.clear_mot(as_frames(gt), as_frames(pred))
    assert (r.fp, r.fn, r.ids, r.frag, r.matches) == (ref["fp"], ref["fn"], ref["ids"], ref["frag"], ref["matches"])
    if r.matches:
        assert r.motp == pytest.approx(ref["motp"], abs=1e-10)


@pytest.mark.parametrize("seed", range(50))
def test_idf1_matches_brute_force(seed):
    gt, pred = random_scene(np.random.default_rng(1000 + seed))
    assert idf1(gt, pred)[0] == pytest.approx(oracles.idf1(as_frames(gt), as_frames(pred)), abs=1e-12)


def relabel(tracks, offset):
    return [Track(t.track_id * 3 + offset, [b.with_id(t.track_id * 3 + offset) for b in t.boxes]) for t in tracks]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 100_000))
def test_permutation_invariance(seed):
    gt, pred = random_scene(np.random.default_rng(seed))
    a = evaluate(gt, pred)
    b = evaluate(relabel(gt, 1)[::-1], relabel(pred, 2)[::-1])
    assert (a.fp, a.fn, a.ids, a.frag) == (b.fp, b.fn, b.ids, b.frag)
    assert a.idf1 == pytest.approx(b.idf1) and a.mota == pytest.approx(b.mota)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 100_000))
def test_mota_weakly_decreases_with_added_fp(seed):
    rng = np.random.default_rng(seed)
    gt, pred = random_scene(rng)
    extra = make_tracks({10_000: [(int(rng.integers(10)), *rng.uniform(0.1, 0.9, 2))]})
    assert clear_mot(gt, pred + extra).mota <= clear_mot(gt, pred).mota + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 100_000))
def test_report_invariants(seed):
    gt, pred = random_scene(np.random.default_rng(seed))
    r = evaluate(gt, pred)
    assert r.mota <= 1.0 and min(r.fp, r.fn, r.ids) >= 0 and r.mt + r.ml <= 100.0


def test_aggregate_pools_counts():
    rng = np.random.default_rng(0)
    reps = {f"s{i}": evaluate(*random_scene(rng)) for i in range(3)}
    tot = aggregate(reps)
    assert tot.fp == sum(r.fp for r in reps.values())
    n_gt = sum(r.num_gt for r in reps.values())
    assert tot.mota == pytest.approx(1 - (tot.fp + tot.fn + tot.ids) / n_gt)


def test_report_outputs():
    rng = np.random.default_rng(0)
    tot = aggregate({"a": evaluate(*random_scene(rng))})
    csv_text = report_csv(tot)
    assert csv_text.splitlines()[0].startswith("name,mota,motp,idf1")
    assert csv_text.splitlines()[-1].startswith("OVERALL,")
    assert "OVERALL" in report_table(tot)
