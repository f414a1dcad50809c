"""Single-file checkpoint container for model parameters.

Layout: magic (8 bytes) | version (u32 LE) | manifest length (u64 LE) |
manifest (UTF-8 JSON) | tensor payload (float32 LE, manifest order) |
SHA-256 of everything before it (32 bytes).
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .box_embed import BoxEmbedModel
from .tracklet_embed import TrackletEmbedModel

MAGIC = b"LGMCKPT\x00"
VERSION = 1
_HEADER = struct.Struct("<8sIQ")
_KINDS = {"box": BoxEmbedModel, "tracklet": TrackletEmbedModel}


class CheckpointError(ValueError):
    pass


def to_bytes(model) -> bytes:
    arrays = model.arrays()
    entries, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = {"kind": model.kind, "config": model.config, "tensors": entries}
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    body = _HEADER.pack(MAGIC, VERSION, len(mbytes)) + mbytes + b"".join(chunks)
    return body + hashlib.sha256(body).digest()


def from_bytes(blob: bytes, expect_kind=None):
    if len(blob) < _HEADER.size + 32:
        raise CheckpointError("checkpoint truncated (shorter than header)")
    body, digest = blob[:-32], blob[-32:]
    magic, version, mlen = _HEADER.unpack_from(body)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checksum mismatch (file corrupt or truncated)")
    start = _HEADER.size
    manifest = json.loads(body[start:start + mlen].decode())
    payload = body[start + mlen:]
    kind = manifest["kind"]
    if kind not in _KINDS:
        raise CheckpointError(f"unknown module kind {kind!r}")
    if expect_kind is not None and kind != expect_kind:
        raise CheckpointError(f"expected a {expect_kind} checkpoint, got {kind}")
    arrays = {}
    for e in manifest["tensors"]:
        raw = payload[e["offset"]:e["offset"] + e["nbytes"]]
        if len(raw) != e["nbytes"]:
            raise CheckpointError(f"tensor {e['name']} truncated")
        arrays[e["name"]] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(e["shape"])
    return _KINDS[kind].from_arrays(manifest["config"], arrays)


def save(model, path):
    Path(path).write_bytes(to_bytes(model))


def load(path, expect_kind=None):
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return from_bytes(blob, expect_kind)


PRETRAINED_DIR = Path(__file__).parent / "pretrained"


def load_pretrained(kind):
    """Bundled desk-preset model trained on synthetic scenes (see ``pretrained/README``)."""
    if kind not in _KINDS:
        raise CheckpointError(f"unknown model kind {kind!r}")
    return load(PRETRAINED_DIR / f"{kind}.ckpt", expect_kind=kind)
