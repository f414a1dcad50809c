"""KITTI tracking and MOTChallenge text formats, plus on-disk dataset layout.

Internally boxes are normalized center/size and frames are 0-indexed. Writers
are byte-stable: fixed field order, 6-decimal reals, lines sorted by
(frame, id).
"""
from __future__ import annotations

import os
from pathlib import Path

from .data import Sequence, Track, detections_by_frame, tracks_from_detections
from .graph import Detection


class FormatError(ValueError):
    """Malformed input; ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.path = path
        self.line = line


FORMATS = ("kitti", "mot")


def _lines(source):
    if isinstance(source, os.PathLike) or (isinstance(source, str) and "\n" not in source
                                            and os.path.isfile(source)):
        return Path(source).read_text().splitlines(), str(source)
    if isinstance(source, str):
        return source.splitlines(), None
    return list(source), None


def _to_normalized(left, top, right, bottom, width, height):
    return ((left + right) / 2 / width, (top + bottom) / 2 / height,
            (right - left) / width, (bottom - top) / height)


def _to_pixels(d, width, height):
    w, h = d.w * width, d.h * height
    cx, cy = d.x * width, d.y * height
    return cx - w / 2, cy - h / 2, w, h


def _number(tok, cast, path, lineno, what):
    try:
        return cast(tok)
    except ValueError:
        raise FormatError(f"field {what!r}: cannot parse {tok!r}", path, lineno) from None


def _finish(name, dets, width, height, n_frames, path):
    n = max([d.frame + 1 for d in dets], default=0)
    if n_frames is None:
        n_frames = n
    elif n > n_frames:
        raise FormatError(f"frame {n - 1} outside declared length {n_frames}", path)
    labeled = [d for d in dets if d.track_id >= 0]
    tracks = None
    if labeled:
        seen = set()
        for d in labeled:
            if (d.track_id, d.frame) in seen:
                raise FormatError(f"track {d.track_id} appears twice in frame {d.frame}", path)
            seen.add((d.track_id, d.frame))
        tracks = tracks_from_detections(dets)
    return Sequence(name, n_frames, width, height, detections_by_frame(dets, n_frames), tracks)


def parse_kitti(source, width, height, n_frames=None, classes=("Car",), name="seq"):
    """Parse KITTI tracking labels or detections (whitespace separated).

    Only rows whose type is in ``classes`` are kept; 3-D fields are ignored.
    """
    lines, path = _lines(source)
    dets = []
    for lineno, raw in enumerate(lines, 1):
        toks = raw.split()
        if not toks:
            continue
        if len(toks) < 10:
            raise FormatError(f"expected at least 10 fields, got {len(toks)}", path, lineno)
        frame = _number(toks[0], int, path, lineno, "frame")
        tid = _number(toks[1], int, path, lineno, "track_id")
        kind = toks[2]
        left, top, right, bottom = (
            _number(t, float, path, lineno, f) for t, f in zip(toks[6:10], ("left", "top", "right", "bottom"))
        )
        score = _number(toks[17], float, path, lineno, "score") if len(toks) > 17 else 1.0
        if kind not in classes:
            continue
        if frame < 0:
            raise FormatError(f"negative frame {frame}", path, lineno)
        if right <= left or bottom <= top:
            raise FormatError("degenerate box (right <= left or bottom <= top)", path, lineno)
        x, y, w, h = _to_normalized(left, top, right, bottom, width, height)
        dets.append(Detection(frame, x, y, w, h, score, tid if tid >= 0 else -1))
    return _finish(name, dets, width, height, n_frames, path)


def parse_mot(source, width, height, n_frames=None, name="seq"):
    """Parse MOTChallenge CSV ``frame,id,left,top,width,height,conf,x,y,z`` (1-indexed frames)."""
    lines, path = _lines(source)
    dets = []
    for lineno, raw in enumerate(lines, 1):
        if not raw.strip():
            continue
        toks = [t.strip() for t in raw.split(",")]
        if len(toks) < 6:
            raise FormatError(f"expected at least 6 fields, got {len(toks)}", path, lineno)
        frame = _number(toks[0], int, path, lineno, "frame") - 1
        tid = _number(toks[1], int, path, lineno, "id")
        left, top, bw, bh = (
            _number(t, float, path, lineno, f) for t, f in zip(toks[2:6], ("bb_left", "bb_top", "bb_width", "bb_height"))
        )
        conf = _number(toks[6], float, path, lineno, "conf") if len(toks) > 6 else 1.0
        if frame < 0:
            raise FormatError(f"frame {frame + 1} (MOT frames start at 1)", path, lineno)
        if bw <= 0 or bh <= 0:
            raise FormatError("non-positive box size", path, lineno)
        x, y, w, h = _to_normalized(left, top, left + bw, top + bh, width, height)
        dets.append(Detection(frame, x, y, w, h, conf, tid if tid >= 0 else -1))
    return _finish(name, dets, width, height, n_frames, path)


def _rows(tracks):
    rows = [(d.frame, t.track_id, d) for t in tracks for d in t.boxes]
    rows.sort(key=lambda r: (r[0], r[1], r[2].x, r[2].y))
    return rows


def write_results(tracks, fmt, width, height):
    """Serialize tracks; returns the file text (empty string for no tracks)."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    out = []
    for frame, tid, d in _rows(tracks):
        left, top, w, h = _to_pixels(d, width, height)
        if fmt == "kitti":
            out.append(
                f"{frame} {tid} Car -1 -1 -10.000000 {left:.6f} {top:.6f} {left + w:.6f} {top + h:.6f} "
                f"-1.000000 -1.000000 -1.000000 -1000.000000 -1000.000000 -1000.000000 -10.000000 "
                f"{d.confidence:.6f}"
            )
        else:
            out.append(f"{frame + 1},{tid},{left:.6f},{top:.6f},{w:.6f},{h:.6f},{d.confidence:.6f},-1,-1,-1")
    return "".join(line + "\n" for line in out)


def write_detections(dets, fmt, width, height):
    """Detections without identities (id -1), same layout as results."""
    return write_results([Track(-1, [d]) for d in dets], fmt, width, height)


def parse(source, fmt, width, height, n_frames=None, name="seq"):
    if fmt == "kitti":
        return parse_kitti(source, width, height, n_frames, name=name)
    if fmt == "mot":
        return parse_mot(source, width, height, n_frames, name=name)
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


# ---- key=value files and dataset directories ----

def read_kv(path):
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError("expected key=value", str(path), lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise FormatError("empty key", str(path), lineno)
        if key in out:
            raise FormatError(f"duplicate key {key!r}", str(path), lineno)
        out[key] = value
    return out


def write_kv(path, values):
    Path(path).write_text("".join(f"{k}={values[k]}\n" for k in values))


def save_sequence(root, seq, fmt="kitti"):
    """Write ``root/<name>/{seqinfo.cfg, det.txt[, gt.txt]}``."""
    d = Path(root) / seq.name
    d.mkdir(parents=True, exist_ok=True)
    write_kv(d / "seqinfo.cfg", {"name": seq.name, "n_frames": seq.n_frames, "width": _num(seq.width),
                                 "height": _num(seq.height), "format": fmt})
    (d / "det.txt").write_text(write_detections(seq.all_detections(), fmt, seq.width, seq.height))
    if seq.tracks is not None:
        (d / "gt.txt").write_text(write_results(seq.tracks, fmt, seq.width, seq.height))


def _num(v):
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def load_sequence(path):
    """Read one sequence directory; ground truth comes from ``gt.txt`` if present."""
    d = Path(path)
    info_path = d / "seqinfo.cfg"
    if not info_path.exists():
        raise FormatError("missing seqinfo.cfg", str(d))
    info = read_kv(info_path)
    try:
        n_frames = int(info["n_frames"])
        width, height = float(info["width"]), float(info["height"])
        fmt = info.get("format", "kitti")
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad seqinfo: {exc}", str(info_path)) from None
    name = info.get("name", d.name)
    det = d / "det.txt"
    seq = parse(det if det.exists() else "", fmt, width, height, n_frames, name)
    # identities in a detection file are not trusted
    seq.detections = [[x.with_id(-1) for x in frame] for frame in seq.detections]
    seq.tracks = None
    gt = d / "gt.txt"
    if gt.exists():
        seq.tracks = parse(gt, fmt, width, height, n_frames, name).tracks or []
    return seq


def list_sequences(root):
    root = Path(root)
    if (root / "seqinfo.cfg").exists():
        return [root]
    if not root.is_dir():
        raise FormatError("dataset directory not found", str(root))
    return sorted(p for p in root.iterdir() if (p / "seqinfo.cfg").exists())


def load_dataset(root):
    return [load_sequence(p) for p in list_sequences(root)]
