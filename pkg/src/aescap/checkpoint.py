"""Parameter checkpoint archive.

A checkpoint is a zip file holding ``manifest.json`` plus one little-endian
float64 payload per parameter. The manifest carries a format-version integer,
the RNG seed the parameters were created with, an optional free-form ``meta``
object (model config, vocabulary, training counters), and per-parameter shape
and SHA-256 so corruption is detected at load time.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import zipfile
from typing import Any, Mapping

import numpy as np

from .autodiff import Tensor
from .errors import CheckpointError

FORMAT_VERSION = 1


def save_checkpoint(path: str | os.PathLike,
                    params: Mapping[str, Tensor],
                    seed: int,
                    meta: dict[str, Any] | None = None) -> None:
    """Write ``params`` atomically (temp file + rename) to ``path``."""
    entries = {}
    payloads = []
    for idx, (name, tensor) in enumerate(params.items()):
        blob = np.ascontiguousarray(tensor.data, dtype="<f8").tobytes()
        fname = f"tensors/{idx:05d}.bin"
        entries[name] = {
            "shape": list(tensor.data.shape),
            "file": fname,
            "sha256": hashlib.sha256(blob).hexdigest(),
        }
        payloads.append((fname, blob))
    manifest = {
        "format_version": FORMAT_VERSION,
        "seed": int(seed),
        "meta": meta or {},
        "params": entries,
    }

    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".ckpt.tmp")
    os.close(fd)
    try:
        with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            # No key sorting: parameter order must survive the roundtrip.
            zf.writestr("manifest.json", json.dumps(manifest, indent=1))
            for fname, blob in payloads:
                zf.writestr(fname, blob)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_checkpoint(path: str | os.PathLike) -> tuple[dict[str, Tensor], int, dict[str, Any]]:
    """Load a checkpoint; returns (params, seed, meta).

    Raises CheckpointError on a missing file, bad archive, unknown format
    version, or any shape/size/hash mismatch.
    """
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path) as zf:
            try:
                manifest = json.loads(zf.read("manifest.json"))
            except KeyError:
                raise CheckpointError(f"checkpoint {path} has no manifest")
            version = manifest.get("format_version")
            if version != FORMAT_VERSION:
                raise CheckpointError(f"checkpoint {path} has format version {version}, expected {FORMAT_VERSION}")
            params: dict[str, Tensor] = {}
            for name, entry in manifest["params"].items():
                blob = zf.read(entry["file"])
                if hashlib.sha256(blob).hexdigest() != entry["sha256"]:
                    raise CheckpointError(f"checkpoint {path}: payload for {name!r} fails its integrity hash")
                shape = tuple(entry["shape"])
                expected = int(np.prod(shape, dtype=np.int64)) * 8
                if len(blob) != expected:
                    raise CheckpointError(
                        f"checkpoint {path}: payload for {name!r} has {len(blob)} bytes, expected {expected}")
                data = np.frombuffer(blob, dtype="<f8").reshape(shape).astype(np.float64)
                t = Tensor(data, requires_grad=True)
                params[name] = t
            return params, int(manifest["seed"]), manifest.get("meta", {})
    except zipfile.BadZipFile as exc:
        raise CheckpointError(f"checkpoint {path} is not a readable archive: {exc}") from exc
