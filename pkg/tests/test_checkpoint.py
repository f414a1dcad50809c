import numpy as np
import pytest

from lgmtrack import checkpoint
from lgmtrack.box_embed import BoxEmbedModel
from lgmtrack.tracklet_embed import TrackletEmbedModel


def models():
    return [BoxEmbedModel.create(blocks=2, width=8, seed=1, dtype=np.float32),
            TrackletEmbedModel.create(blocks=1, steps=9, tgc_layers=2, tgc_width=4, head_hidden=8, dim=4, seed=2,
                                      dtype=np.float32)]


@pytest.mark.parametrize("model", models(), ids=["box", "tracklet"])
def test_round_trip_bit_exact(tmp_path, model):
    path = tmp_path / "m.ckpt"
    checkpoint.save(model, path)
    back = checkpoint.load(path, expect_kind=model.kind)
    assert type(back) is type(model) and back.config == model.config
    assert back.names() == model.names()
    for k in model.names():
        assert back[k].data.tobytes() == model[k].data.tobytes()


def test_bytes_are_deterministic():
    m = models()[0]
    assert checkpoint.to_bytes(m) == checkpoint.to_bytes(m.copy())


def test_truncated_rejected():
    blob = checkpoint.to_bytes(models()[0])
    for cut in (10, len(blob) // 2, len(blob) - 1):
        with pytest.raises(checkpoint.CheckpointError):
            checkpoint.from_bytes(blob[:cut])


def test_corruption_rejected():
    blob = bytearray(checkpoint.to_bytes(models()[0]))
    blob[len(blob) // 2] ^= 0xFF
    with pytest.raises(checkpoint.CheckpointError, match="checksum"):
        checkpoint.from_bytes(bytes(blob))


def test_bad_magic_and_version():
    blob = checkpoint.to_bytes(models()[0])
    with pytest.raises(checkpoint.CheckpointError, match="magic"):
        checkpoint.from_bytes(b"X" + blob[1:])
    bumped = blob[:8] + (checkpoint.VERSION + 1).to_bytes(4, "little") + blob[12:]
    with pytest.raises(checkpoint.CheckpointError, match="version"):
        checkpoint.from_bytes(bumped)


def test_wrong_kind_rejected(tmp_path):
    path = tmp_path / "box.ckpt"
    checkpoint.save(models()[0], path)
    with pytest.raises(checkpoint.CheckpointError, match="expected a tracklet"):
        checkpoint.load(path, expect_kind="tracklet")


def test_missing_file(tmp_path):
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.load(tmp_path / "none.ckpt")
