"""Command-line entry point: ``synth``, ``train``, ``track``, ``eval``, ``inspect``.

Settings resolve as CLI flag > ``--config`` file (flat key=value) > built-in
default. Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import checkpoint, formats
from .augment import AugmentConfig
from .data import Sequence
from .graph import ContractError, build_box_graph, build_tracklet_graph, Tracklet
from .losses import LossConfig
from .numerics import ConfigError, ShapeError
from .synthetic import SyntheticConfig, generate_synthetic
from .tracker import TrackerConfig, iou_baseline, track_sequence
from .train import BOX_PRESETS, TRACKLET_PRESETS, NumericFailure, TrainConfig, make_model, train_module, write_curve

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("lgmtrack")


class UsageError(Exception):
    pass


@dataclasses.dataclass(frozen=True)
class Key:
    name: str
    default: object
    kind: type
    help: str = ""


def _keys_from(dc, skip=(), overrides=None, helps=None):
    overrides = overrides or {}
    helps = helps or {}
    out = []
    for f in dataclasses.fields(dc):
        if f.name in skip:
            continue
        default = overrides.get(f.name, f.default)
        out.append(Key(f.name, default, type(f.default), helps.get(f.name, "")))
    return out


def _box_model_keys():
    d = BOX_PRESETS["desk"]
    return [
        Key("preset", "desk", str, "model size preset: desk or full"),
        Key("blocks", d["blocks"], int, "GCN blocks (preset value when unset)"),
        Key("width", d["width"], int, "hidden width"),
        Key("att_hidden", d["att_hidden"], int, "attention hidden channels"),
        Key("input_scale", 4.0, float, "scale applied to centered boxes"),
    ]


def _tracklet_model_keys():
    d = TRACKLET_PRESETS["desk"]
    return [
        Key("preset", "desk", str, "model size preset: desk or full"),
        Key("blocks", d["blocks"], int, "reconstruction blocks"),
        Key("tgc_layers", d["tgc_layers"], int, "layers per TGC module"),
        Key("tgc_width", d["tgc_width"], int, "internal TGC width"),
        Key("kernel", 3, int, "temporal kernel width (odd)"),
        Key("att_hidden", 16, int, "attention hidden channels"),
        Key("head_hidden", d["head_hidden"], int, "embed-head hidden width"),
        Key("dim", d["dim"], int, "embedding dimension"),
        Key("input_scale", 10.0, float, "scale applied to centered boxes"),
    ]


COMMON_TRAIN = _keys_from(TrainConfig, skip=("seed",)) + _keys_from(LossConfig) + [
    Key("aug_" + k.name, k.default, k.kind, "augmentation") for k in _keys_from(AugmentConfig)
]

SCHEMAS = {
    "synth": [Key("sequences", 1, int, "number of sequences (seeds seed, seed+1, ...)"),
              Key("objects", 0, int, "shorthand: sets objects_min = objects_max (0 = unset)")]
    + _keys_from(SyntheticConfig, skip=("seed",)),
    "train box": COMMON_TRAIN + _box_model_keys(),
    "train tracklet": COMMON_TRAIN + _tracklet_model_keys(),
    "track": _keys_from(TrackerConfig) + [Key("baseline", False, bool, "use the IOU baseline associator")],
    "eval": [Key("iou_thresh", 0.5, float, "IoU threshold for a match")],
    "inspect": [Key("window_start", 0, int, "first frame of the inspected window"),
                Key("module", "tracklet", str, "box or tracklet")] + _keys_from(TrackerConfig),
}
MODEL_SIZE_KEYS = {k.name for k in _box_model_keys() + _tracklet_model_keys()} - {"preset"}


def _parse_value(key: Key, raw, source):
    if isinstance(raw, key.kind) and not isinstance(raw, str):
        return raw
    text = str(raw).strip()
    try:
        if key.kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return key.kind(text)
    except ValueError:
        raise UsageError(f"{source}: bad value {text!r} for {key.name} ({key.kind.__name__})") from None


def _fmt_default(v):
    return str(v).lower() if isinstance(v, bool) else str(v)


def _add_keys(parser, keys):
    group = parser.add_argument_group("config keys (flag, config-file key, default)")
    for k in keys:
        group.add_argument(
            "--" + k.name.replace("_", "-"), dest="key_" + k.name, default=None, metavar=k.kind.__name__.upper(),
            help=f"{k.help + '; ' if k.help else ''}key {k.name}, default {_fmt_default(k.default)}",
        )


def resolve(keys, args):
    """Merge defaults, ``--config`` file and CLI flags; unknown file keys are rejected."""
    values = {k.name: k.default for k in keys}
    by_name = {k.name: k for k in keys}
    explicit = set()
    if getattr(args, "config", None):
        try:
            file_vals = formats.read_kv(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        except formats.FormatError as exc:
            raise UsageError(str(exc)) from None
        unknown = sorted(set(file_vals) - set(by_name) - {"seed"})
        if unknown:
            raise UsageError(f"{args.config}: unknown config keys {unknown}")
        for name, raw in file_vals.items():
            if name == "seed":
                if args.seed is None:
                    args.seed = _parse_value(Key("seed", 0, int), raw, args.config)
                continue
            values[name] = _parse_value(by_name[name], raw, args.config)
            explicit.add(name)
    for k in keys:
        raw = getattr(args, "key_" + k.name, None)
        if raw is not None:
            values[k.name] = _parse_value(k, raw, "--" + k.name.replace("_", "-"))
            explicit.add(k.name)
    values["_explicit"] = explicit
    return values


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file (CLI flags override it)")
    common.add_argument("--seed", type=int, default=None, help="random seed, default 0")
    common.add_argument("--workers", type=int, default=None,
                        help="parallel workers across sequences, default = available CPUs")
    common.add_argument("--format", choices=formats.FORMATS, default=None, help="file format, default kitti")
    common.add_argument("--checkpoint", nargs="+", default=None, help="model checkpoint file(s)")
    common.add_argument("--out", "-o", default=None, help="output path")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    parser = _Parser(prog="lgmtrack", description="Motion-only multi-object vehicle tracker.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    _add_keys(p, SCHEMAS["synth"])

    p = sub.add_parser("train", help="train an embedding module")
    tsub = p.add_subparsers(dest="module", required=True, parser_class=_Parser)
    for kind in ("box", "tracklet"):
        q = tsub.add_parser(kind, parents=[common], help=f"train the {kind} embedding")
        q.add_argument("data", help="dataset directory with ground truth")
        q.add_argument("--curve", default=None, help="loss-curve CSV, default <out>.csv")
        _add_keys(q, SCHEMAS["train " + kind])

    p = sub.add_parser("track", parents=[common], help="track every sequence of a dataset")
    p.add_argument("data", help="dataset directory")
    _add_keys(p, SCHEMAS["track"])

    p = sub.add_parser("eval", parents=[common], help="score results against ground truth")
    p.add_argument("data", help="dataset directory with ground truth")
    p.add_argument("results", help="directory of <sequence>.txt result files")
    _add_keys(p, SCHEMAS["eval"])

    p = sub.add_parser("inspect", parents=[common], help="dump one window's graph, attention and reconstruction as CSV")
    p.add_argument("data", help="sequence directory (or dataset with one sequence)")
    _add_keys(p, SCHEMAS["inspect"])
    return parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---- commands ----

def cmd_synth(args, cfg):
    if not args.out:
        raise UsageError("synth needs --out DIR")
    fields = {f.name for f in dataclasses.fields(SyntheticConfig)}
    syn = {k: v for k, v in cfg.items() if k in fields}
    if cfg["objects"] > 0:
        syn["objects_min"] = syn["objects_max"] = cfg["objects"]
    seed = args.seed or 0
    fmt = args.format or "kitti"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(cfg["sequences"]):
        sc = SyntheticConfig(seed=seed + i, **syn)
        try:
            sc.validate()
        except ConfigError as exc:
            raise UsageError(str(exc)) from None
        seq = generate_synthetic(sc, name=f"synth{seed + i:04d}")
        formats.save_sequence(out, seq, fmt)
    formats.write_kv(out / "synth.cfg", {"seed": seed, "format": fmt,
                                          **{k: _fmt_default(v) for k, v in sorted(syn.items())},
                                          "sequences": cfg["sequences"]})
    return EXIT_OK


def _model_overrides(kind, cfg):
    preset_name = cfg["preset"]
    presets = BOX_PRESETS if kind == "box" else TRACKLET_PRESETS
    if preset_name not in presets:
        raise UsageError(f"unknown preset {preset_name!r}; choose from {sorted(presets)}")
    keys = _box_model_keys() if kind == "box" else _tracklet_model_keys()
    preset = presets[preset_name]
    over = {}
    for k in keys:
        if k.name == "preset":
            continue
        if k.name in cfg["_explicit"] or k.name not in preset:
            over[k.name] = cfg[k.name]
    return preset_name, over


def cmd_train(args, cfg):
    kind = args.module
    if not args.out:
        raise UsageError("train needs --out CHECKPOINT")
    seqs = formats.load_dataset(args.data)
    seqs = [s for s in seqs if s.tracks]
    if not seqs:
        raise formats.FormatError("no sequences with ground truth", args.data)
    seed = args.seed or 0
    tcfg = TrainConfig(seed=seed, **{f.name: cfg[f.name] for f in dataclasses.fields(TrainConfig) if f.name != "seed"})
    lcfg = LossConfig(**{f.name: cfg[f.name] for f in dataclasses.fields(LossConfig)})
    acfg = AugmentConfig(**{f.name: cfg["aug_" + f.name] for f in dataclasses.fields(AugmentConfig)})
    preset, over = _model_overrides(kind, cfg)
    try:
        model = make_model(kind, preset, seed=seed, float64=tcfg.float64, **over)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    model, curve = train_module(kind, model, seqs, tcfg, lcfg, acfg)
    checkpoint.save(model, args.out)
    write_curve(args.curve or str(args.out) + ".csv", curve)
    return EXIT_OK


def _tracker_config(cfg):
    return TrackerConfig(**{f.name: cfg[f.name] for f in dataclasses.fields(TrackerConfig)})


def _load_models(paths):
    models = {}
    for p in paths or []:
        m = checkpoint.load(p)
        if m.kind in models:
            raise checkpoint.CheckpointError(f"two {m.kind} checkpoints given")
        models[m.kind] = m
    return models


def _track_one(job):
    seq_dir, out_path, fmt, ckpts, cfg_dict, baseline = job
    seq = formats.load_sequence(seq_dir)
    if baseline:
        tracks = iou_baseline(seq.detections, seq.n_frames)
    else:
        models = _load_models(ckpts)
        if "box" not in models:
            raise checkpoint.CheckpointError("tracking needs a box checkpoint")
        tracks = track_sequence(seq.detections, seq.n_frames, models["box"], models.get("tracklet"),
                                TrackerConfig(**cfg_dict))
    Path(out_path).write_text(formats.write_results(tracks, fmt, seq.width, seq.height))
    return seq.name


def _run_jobs(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def _workers(args):
    return args.workers if args.workers is not None else (os.cpu_count() or 1)


def cmd_track(args, cfg):
    if not args.out:
        raise UsageError("track needs --out DIR")
    trk = _tracker_config(cfg)
    if not cfg["baseline"]:
        if not args.checkpoint:
            raise UsageError("track needs --checkpoint BOX [TRACKLET] (or --baseline true)")
        models = _load_models(args.checkpoint)
        if "box" not in models:
            raise checkpoint.CheckpointError("tracking needs a box checkpoint")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_dict = dataclasses.asdict(trk)
    jobs = []
    for seq_dir in formats.list_sequences(args.data):
        info = formats.read_kv(seq_dir / "seqinfo.cfg")
        fmt = args.format or info.get("format", "kitti")
        name = info.get("name", seq_dir.name)
        jobs.append((str(seq_dir), str(out / f"{name}.txt"), fmt, args.checkpoint, cfg_dict, cfg["baseline"]))
    _run_jobs(_track_one, jobs, _workers(args))
    return EXIT_OK


def _eval_one(job):
    from .metrics import evaluate
    seq_dir, res_dir, fmt, thresh = job
    seq = formats.load_sequence(seq_dir)
    res = Path(res_dir) / f"{seq.name}.txt"
    if not res.exists():
        raise formats.FormatError("missing result file", str(res))
    pred = formats.parse(res, fmt, seq.width, seq.height, seq.n_frames, seq.name).tracks or []
    return seq.name, evaluate(seq.tracks or [], pred, thresh)


def cmd_eval(args, cfg):
    from .metrics import aggregate, report_csv, report_table
    jobs = []
    for seq_dir in formats.list_sequences(args.data):
        info = formats.read_kv(seq_dir / "seqinfo.cfg")
        jobs.append((str(seq_dir), args.results, args.format or info.get("format", "kitti"), cfg["iou_thresh"]))
    reports = dict(_run_jobs(_eval_one, jobs, _workers(args)))
    total = aggregate(reports)
    sys.stdout.write(report_table(total))
    if args.out:
        Path(args.out).write_text(report_csv(total))
    return EXIT_OK


def _write_matrix(path, mat):
    mat = np.asarray(mat)
    with open(path, "w") as fh:
        for row in mat.reshape(mat.shape[0], -1) if mat.size else []:
            fh.write(",".join(f"{v:.6f}" for v in row) + "\n")


def cmd_inspect(args, cfg):
    from .box_embed import box_forward
    from .tracker import associate_boxes_window, box_stage
    from .tracklet_embed import tracklet_forward
    if not args.out or not args.checkpoint:
        raise UsageError("inspect needs --checkpoint and --out DIR")
    dirs = formats.list_sequences(args.data)
    if len(dirs) != 1:
        raise UsageError("inspect works on exactly one sequence")
    seq = formats.load_sequence(dirs[0])
    models = _load_models(args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trk = _tracker_config(cfg)
    start = cfg["window_start"]
    dets = sorted(seq.all_detections(), key=lambda d: d.frame)
    if cfg["module"] == "box":
        if "box" not in models:
            raise checkpoint.CheckpointError("inspect box needs a box checkpoint")
        win = [d for d in dets if start <= d.frame < start + trk.box_window]
        graph = build_box_graph(win, dtype=models["box"].dtype)
        res = box_forward(graph, models["box"])
        chains = associate_boxes_window(graph, res, trk)
        label = np.full(graph.n, -1)
        for k, t in enumerate(chains):
            label[t.provenance] = k
        with open(out / "nodes.csv", "w") as fh:
            fh.write("node,frame,x,y,w,h,tracklet\n")
            for i in range(graph.n):
                x, y, w, h = graph.features[i]
                fh.write(f"{i},{graph.frame_of[i]},{x:.6f},{y:.6f},{w:.6f},{h:.6f},{label[i]}\n")
        _write_matrix(out / "adjacency.csv", graph.adjacency)
        _write_matrix(out / "attention.csv", res.attention)
        _write_matrix(out / "embeddings.csv", res.embeddings)
        return EXIT_OK
    if cfg["module"] != "tracklet":
        raise UsageError("module must be box or tracklet")
    if "box" not in models or "tracklet" not in models:
        raise checkpoint.CheckpointError("inspect tracklet needs box and tracklet checkpoints")
    labels = box_stage(dets, seq.n_frames, models["box"], trk)
    steps = models["tracklet"].steps
    pieces = {}
    for d, lab in zip(dets, labels):
        if start <= d.frame < start + steps:
            pieces.setdefault(int(lab), []).append(d)
    trks = [Tracklet(i, boxes) for i, (_, boxes) in enumerate(sorted(pieces.items()))]
    graph = build_tracklet_graph(trks, start, steps, dtype=models["tracklet"].dtype)
    res = tracklet_forward(graph, models["tracklet"])
    with open(out / "tracklets.csv", "w") as fh:
        fh.write("tracklet,frame,occupied,x,y,w,h,rec_x,rec_y,rec_w,rec_h,mask\n")
        for i in range(graph.n):
            for t in range(steps):
                f = graph.features[i, :, t]
                r = res.reconstruction[i, :, t]
                fh.write(f"{i},{start + t},{int(graph.masks[i, 0, t])},"
                         + ",".join(f"{v:.6f}" for v in f) + ","
                         + ",".join(f"{v:.6f}" for v in r) + f",{res.masks[i, 0, t]:.6f}\n")
    _write_matrix(out / "adjacency.csv", graph.adjacency)
    _write_matrix(out / "attention.csv", res.attention)
    _write_matrix(out / "embeddings.csv", res.embeddings)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "track": cmd_track, "eval": cmd_eval, "inspect": cmd_inspect}


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        schema = SCHEMAS["train " + args.module] if args.command == "train" else SCHEMAS[args.command]
        cfg = resolve(schema, args)
        if args.verbose:
            logging.basicConfig(level=logging.INFO, format="%(message)s")
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"lgmtrack: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericFailure as exc:
        print(f"lgmtrack: numeric failure: {exc}", file=sys.stderr)
        if getattr(args, "out", None) and exc.window is not None:
            dump = str(args.out) + ".failure.npz"
            graph = exc.window[0]
            np.savez(dump, features=graph.features, adjacency=graph.adjacency)
            print(f"lgmtrack: offending window written to {dump}", file=sys.stderr)
        return EXIT_NUMERIC
    except (formats.FormatError, checkpoint.CheckpointError, ContractError, ShapeError, OSError) as exc:
        print(f"lgmtrack: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
