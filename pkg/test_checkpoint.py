"""
Tests for the N2FC checkpoint container
"""

import struct

import numpy as np
import pytest

from src.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from src.errors import CheckpointError


@pytest.fixture
def checkpoint(rng):
    tensors = {
        "generator.head.weight": rng.normal(size=(4, 1, 4)).astype(np.float32),
        "generator.head.bias": rng.normal(size=(1,)).astype(np.float32),
        "discriminator.scale": np.array(2.5, dtype=np.float32),
    }
    spec = {"generator": {"input_len": 32, "block_widths": [4, 3]}, "step": 7, "seed": 3}
    return Checkpoint("n2fgan", spec, tensors)


def test_round_trip_is_bitwise(tmp_path, checkpoint):
    path = save_checkpoint(checkpoint, tmp_path / "a.n2fc")
    loaded = load_checkpoint(path)
    assert loaded.kind == "n2fgan"
    assert loaded.spec == checkpoint.spec
    assert loaded.step == 7
    assert sorted(loaded.tensors) == sorted(checkpoint.tensors)
    for name, value in checkpoint.tensors.items():
        assert loaded.tensors[name].shape == value.shape
        assert loaded.tensors[name].tobytes() == value.tobytes()
    save_checkpoint(loaded, tmp_path / "b.n2fc")
    assert (tmp_path / "b.n2fc").read_bytes() == path.read_bytes()


def test_prefixed_strips_prefix(checkpoint):
    assert sorted(checkpoint.prefixed("generator")) == ["head.bias", "head.weight"]


def test_unknown_kind_rejected():
    with pytest.raises(CheckpointError):
        Checkpoint("vae", {}, {})


def test_bad_magic_and_version(tmp_path, checkpoint):
    raw = save_checkpoint(checkpoint, tmp_path / "a.n2fc").read_bytes()
    (tmp_path / "magic.n2fc").write_bytes(b"N2FD" + raw[4:])
    (tmp_path / "version.n2fc").write_bytes(raw[:4] + struct.pack("<H", 9) + raw[6:])
    with pytest.raises(CheckpointError, match="not an N2FC"):
        load_checkpoint(tmp_path / "magic.n2fc")
    with pytest.raises(CheckpointError, match="version 9"):
        load_checkpoint(tmp_path / "version.n2fc")


def test_truncation_and_trailing_bytes(tmp_path, checkpoint):
    raw = save_checkpoint(checkpoint, tmp_path / "a.n2fc").read_bytes()
    (tmp_path / "short.n2fc").write_bytes(raw[:-3])
    (tmp_path / "long.n2fc").write_bytes(raw + b"\x00")
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(tmp_path / "short.n2fc")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(tmp_path / "long.n2fc")


def test_tensor_manifest_mismatch(tmp_path, checkpoint):
    path = save_checkpoint(checkpoint, tmp_path / "a.n2fc")
    raw = path.read_bytes()
    # rename one tensor in place: same length, different name
    tampered = raw.replace(b"discriminator.scale", b"discriminator.scalf")
    (tmp_path / "tampered.n2fc").write_bytes(tampered)
    with pytest.raises(CheckpointError, match="hash"):
        load_checkpoint(tmp_path / "tampered.n2fc")


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.n2fc")
