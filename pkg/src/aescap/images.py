"""Pixel sources for corpus records.

Records that point at a real file are decoded with Pillow (optional extra).
Records without one get deterministic procedural pixels derived from the
image id, which keeps text-only corpora trainable end to end and makes every
pipeline run reproducible.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache

import numpy as np

from .encoder import ImageInput
from .errors import DataError


@lru_cache(maxsize=4096)
def procedural_pixels(image_id: str, channels: int, size: int) -> np.ndarray:
    digest = hashlib.sha256(f"{image_id}:{channels}x{size}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    base = rng.random((channels, size, size))
    # Smooth horizontal/vertical ramps so images carry low-frequency structure.
    ramp = np.linspace(0.0, 1.0, size)
    blend = rng.random((channels, 1, 1))
    return (1 - blend) * base + blend * (ramp[None, :, None] + ramp[None, None, :]) / 2.0


def load_pixels(image_id: str, image_path: str | None, channels: int, size: int) -> ImageInput:
    if image_path is None:
        return ImageInput(image_id=image_id, pixels=procedural_pixels(image_id, channels, size))
    try:
        from PIL import Image
    except ImportError as exc:
        raise DataError(
            f"record {image_id!r} references file {image_path!r} but Pillow is not "
            "installed; install the 'images' extra or drop image_path") from exc
    try:
        with Image.open(image_path) as img:
            img = img.convert("RGB").resize((size, size))
            arr = np.asarray(img, dtype=np.float64) / 255.0
    except OSError as exc:
        raise DataError(f"cannot read image {image_path!r} for record {image_id!r}: {exc}") from exc
    return ImageInput(image_id=image_id, pixels=arr.transpose(2, 0, 1)[:channels])
