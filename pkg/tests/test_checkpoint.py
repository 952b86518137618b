"""Checkpoint archive: roundtrip fidelity and corruption detection."""

import zipfile

import numpy as np
import pytest

from aescap.autodiff import Tensor
from aescap.checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from aescap.errors import CheckpointError


@pytest.fixture
def params():
    rng = np.random.default_rng(0)
    return {
        "encoder/conv1/weight": Tensor(rng.normal(size=(4, 3, 3, 3)), requires_grad=True),
        "decoder/embedding": Tensor(rng.normal(size=(10, 5)), requires_grad=True),
        "scalar_bias": Tensor(0.25, requires_grad=True),
    }


def test_roundtrip_bit_exact(tmp_path, params):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, seed=42, meta={"stage": "pretrain", "step": 7})
    loaded, seed, meta = load_checkpoint(path)
    assert seed == 42
    assert meta["stage"] == "pretrain" and meta["step"] == 7
    assert list(loaded) == list(params)
    for name in params:
        assert loaded[name].data.shape == params[name].data.shape
        assert np.array_equal(loaded[name].data, params[name].data)
        assert loaded[name].requires_grad


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_truncated_archive(tmp_path, params):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, seed=1)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_tampered_payload(tmp_path, params):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, seed=1)
    with zipfile.ZipFile(path) as zf:
        names = zf.namelist()
        contents = {n: zf.read(n) for n in names}
    victim = next(n for n in names if n.startswith("tensors/"))
    raw = bytearray(contents[victim])
    raw[0] ^= 0xFF
    contents[victim] = bytes(raw)
    with zipfile.ZipFile(path, "w") as zf:
        for n in names:
            zf.writestr(n, contents[n])
    with pytest.raises(CheckpointError, match="integrity"):
        load_checkpoint(path)


def test_version_mismatch(tmp_path, params):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, seed=1)
    with zipfile.ZipFile(path) as zf:
        contents = {n: zf.read(n) for n in zf.namelist()}
    manifest = contents["manifest.json"].replace(
        f'"format_version": {FORMAT_VERSION}'.encode(), b'"format_version": 999')
    with zipfile.ZipFile(path, "w") as zf:
        for n, blob in contents.items():
            zf.writestr(n, manifest if n == "manifest.json" else blob)
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_atomic_write_leaves_no_temp_droppings(tmp_path, params):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, seed=1)
    save_checkpoint(path, params, seed=2)  # overwrite in place
    assert [p.name for p in tmp_path.iterdir()] == ["model.ckpt"]
    _, seed, _ = load_checkpoint(path)
    assert seed == 2
