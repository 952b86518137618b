"""Self-verification: finite-difference checks over the three model blocks.

Each instance draws a miniature random model and checks analytic gradients
against central differences over every parameter coordinate:

* score block — the multi-task regression loss through the encoder,
* attention block — the attended-context path through channel and spatial
  attention,
* caption block — a teacher-forced caption loss through encoder, attention
  and decoder jointly.

Miniature dimensions keep a full coordinate sweep affordable; the code paths
are identical to the full-size presets. The ``fault`` flag injects a node
with a deliberately wrong gradient as a negative control: the suite must
then report a violation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .attention import AttentionParams, attend, init_attention_params
from .attributes import ATTRIBUTES
from .autodiff import Tensor
from .decoder import decoder_params_view, init_decoder_params, sequence_nll
from .encoder import (ImageInput, ModelConfig, encode, init_encoder_params,
                      mse_loss, total_loss)
from .vocab import BOS, EOS

TOLERANCE = 1e-4

# dimension ranges per preset: (lo, hi) for the random draws
PRESET_RANGES = {
    "desk": dict(channels=(2, 4), locations=(2, 5), dim=(2, 4), hidden=(2, 4),
                 image=(6, 10), vocab=(6, 9), embed=(2, 4), max_coords=None),
    "paper-faithful": dict(channels=(8, 17), locations=(4, 10), dim=(8, 17),
                           hidden=(8, 17), image=(12, 17), vocab=(10, 17),
                           embed=(6, 11), max_coords=8),
}


@dataclass
class BlockReport:
    block: str
    instances: int
    max_error: float

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE


def _faulty_read(t: Tensor) -> Tensor:
    # Value depends on t, but the registered gradient is (wrongly) zero.
    return ad._make(np.asarray(0.01 * t.data.sum()), (t,), lambda g: None)


def _rand_encoder(rng, ranges):
    size = int(rng.integers(*ranges["image"]))
    size += size % 2  # stride-2 friendly
    cfg = ModelConfig(image_size=size, trunk_channels=(2, int(rng.integers(2, 4))),
                      attr_channels=int(rng.integers(*ranges["channels"])),
                      global_channels=2,
                      attention_dim=int(rng.integers(*ranges["dim"])),
                      hidden_size=int(rng.integers(*ranges["hidden"])),
                      embed_size=int(rng.integers(*ranges["embed"])),
                      seed=int(rng.integers(1 << 30)))
    params = init_encoder_params(cfg, rng)
    image = ImageInput("probe", rng.random((cfg.in_channels, size, size)))
    return cfg, params, image


def check_score_block(rng, ranges, fault: bool = False) -> float:
    """Gradient fidelity of the six-part regression loss through the encoder."""
    cfg, params, image = _rand_encoder(rng, ranges)
    targets = {a: float(rng.uniform(0, 10)) for a in ATTRIBUTES}
    global_target = float(rng.uniform(0, 10))

    def loss_fn():
        out = encode(image, params, cfg)
        attr_losses = {a: mse_loss([out.attribute_scores[a]], [targets[a]])
                       for a in ATTRIBUTES}
        loss = total_loss(attr_losses, mse_loss([out.global_score], [global_target]))
        if fault:
            loss = ad.add(loss, _faulty_read(params["encoder/conv1/weight"]))
        return loss

    return ad.finite_diff_check(loss_fn, params, eps=1e-4,
                                max_coords_per_tensor=ranges["max_coords"], rng=rng)


def check_attention_block(rng, ranges) -> float:
    """Gradient fidelity of channel+spatial attention in both orderings."""
    channels = int(rng.integers(*ranges["channels"]))
    locations = int(rng.integers(*ranges["locations"]))
    dim = int(rng.integers(*ranges["dim"]))
    hidden = int(rng.integers(*ranges["hidden"]))
    fields = init_attention_params(channels, hidden, dim, rng)
    for t in fields.values():  # non-zero biases make the check strict
        t.data = rng.normal(size=t.data.shape) * 0.8
    params = AttentionParams(**fields)
    fmap = rng.normal(size=(channels, locations))
    hstate = rng.normal(size=hidden)
    direction = rng.normal(size=channels)
    order = "channel_first" if rng.random() < 0.5 else "spatial_first"

    def loss_fn():
        context, _ = attend(Tensor(fmap), Tensor(hstate), params, order)
        return ad.reduce_sum(ad.mul(context, Tensor(direction)))

    return ad.finite_diff_check(loss_fn, fields, eps=1e-4,
                                max_coords_per_tensor=ranges["max_coords"], rng=rng)


def check_caption_block(rng, ranges) -> float:
    """Gradient fidelity of the caption loss through encoder, attention, decoder."""
    cfg, enc_params, image = _rand_encoder(rng, ranges)
    vocab_size = int(rng.integers(*ranges["vocab"]))
    att_fields = init_attention_params(cfg.attr_channels, cfg.hidden_size,
                                       cfg.attention_dim, rng)
    dec_fields = init_decoder_params(vocab_size, cfg.embed_size, cfg.hidden_size,
                                     cfg.attr_channels, rng)
    att = AttentionParams(**att_fields)
    dec = decoder_params_view(dec_fields)
    body_len = int(rng.integers(1, 4))
    tokens = [BOS] + [int(rng.integers(4, vocab_size)) for _ in range(body_len)] + [EOS]
    attr = ATTRIBUTES[int(rng.integers(len(ATTRIBUTES)))]

    everything = dict(enc_params)
    everything.update({f"att/{k}": v for k, v in att_fields.items()})
    everything.update({f"dec/{k}": v for k, v in dec_fields.items()})

    def loss_fn():
        out = encode(image, enc_params, cfg)
        return sequence_nll(tokens, out.attribute_map_flat(attr), dec, att)

    return ad.finite_diff_check(loss_fn, everything, eps=1e-4,
                                max_coords_per_tensor=ranges["max_coords"], rng=rng)


def run_gradcheck(instances: int = 100, seed: int = 0, preset: str = "desk",
                  fault: bool = False) -> list[BlockReport]:
    """Split ``instances`` across the three blocks; returns per-block reports."""
    if preset not in PRESET_RANGES:
        raise ValueError(f"unknown gradcheck preset {preset!r}; expected one of {sorted(PRESET_RANGES)}")
    ranges = PRESET_RANGES[preset]
    rng = np.random.default_rng(seed)
    per_block = [instances - 2 * (instances // 3), instances // 3, instances // 3]
    reports = []
    for count, (name, check) in zip(per_block, [
            ("score", check_score_block),
            ("attention", check_attention_block),
            ("caption", check_caption_block)]):
        worst = 0.0
        for k in range(count):
            inject = fault and name == "score" and k == 0
            err = check(rng, ranges, fault=True) if inject else check(rng, ranges)
            worst = max(worst, err)
        reports.append(BlockReport(block=name, instances=count, max_error=worst))
    return reports
