"""Multi-attribute image encoder and its regression losses.

A small convolutional trunk (configurable widths, stride-2 downsampling,
tanh activations) produces a dense feature map shared by six heads: one
global branch and one branch per attribute. Each branch applies a 1x1
convolution to its own feature map, then global average pooling and a
linear layer to a score. Scores are regressed unbounded; clamping to
[0, 10] happens only at reporting time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .attributes import ATTRIBUTES
from .autodiff import Tensor
from .errors import ContractError


@dataclass
class ModelConfig:
    """Dimensions of the full captioner; two presets are provided.

    ``desk`` trains in minutes on a CPU; ``paper_faithful`` uses the
    published sizes (hidden 1000, embedding 50, attention 512) and exists to
    document fidelity, not speed.
    """

    image_size: int = 64
    in_channels: int = 3
    trunk_channels: tuple[int, ...] = (16, 32, 64)
    attr_channels: int = 32
    global_channels: int = 32
    attention_dim: int = 64
    hidden_size: int = 128
    embed_size: int = 32
    max_len: int = 30
    attention_order: str = "channel_first"
    share_decoder: bool = False
    vocab_min_freq: int = 2
    seed: int = 13

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        return cls(**overrides)

    @classmethod
    def paper_faithful(cls, **overrides) -> "ModelConfig":
        base = dict(image_size=224, trunk_channels=(32, 64, 128), attr_channels=512,
                    global_channels=512, attention_dim=512, hidden_size=1000,
                    embed_size=50)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = {k: v for k, v in vars(self).items()}
        d["trunk_channels"] = list(self.trunk_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["trunk_channels"] = tuple(d["trunk_channels"])
        return cls(**d)

    @property
    def map_side(self) -> int:
        side = self.image_size
        for _ in self.trunk_channels:
            side = (side + 2 - 3) // 2 + 1  # 3x3 conv, stride 2, padding 1
        return side

    @property
    def map_locations(self) -> int:
        return self.map_side * self.map_side


@dataclass
class ImageInput:
    image_id: str
    pixels: np.ndarray  # (in_channels, H, W), values in [0, 1]


@dataclass
class EncoderOutput:
    dense_map: Tensor                       # (C, h, w) shared trunk output
    global_features: Tensor                 # (global_channels,) pooled global branch
    attribute_maps: dict[str, Tensor]       # attr -> (attr_channels, h, w)
    global_score: Tensor                    # scalar graph node
    attribute_scores: dict[str, Tensor]     # attr -> scalar graph node

    def attribute_map_flat(self, attr: str) -> Tensor:
        m = self.attribute_maps[attr]
        c = m.shape[0]
        return ad.reshape(m, (c, m.shape[1] * m.shape[2]))


def init_encoder_params(cfg: ModelConfig, rng) -> dict[str, Tensor]:
    """Trunk + six head parameter tensors, keyed by path-style names."""
    def uniform(shape, fan_in):
        s = 1.0 / (fan_in ** 0.5)
        return Tensor(rng.uniform(-s, s, size=shape), requires_grad=True)

    params: dict[str, Tensor] = {}
    c_in = cfg.in_channels
    for i, c_out in enumerate(cfg.trunk_channels, start=1):
        params[f"encoder/conv{i}/weight"] = uniform((c_out, c_in, 3, 3), c_in * 9)
        params[f"encoder/conv{i}/bias"] = Tensor(np.zeros(c_out), requires_grad=True)
        c_in = c_out
    heads = [("global", cfg.global_channels)] + [(f"attr/{a}", cfg.attr_channels) for a in ATTRIBUTES]
    for name, channels in heads:
        params[f"encoder/{name}/conv_weight"] = uniform((channels, c_in, 1, 1), c_in)
        params[f"encoder/{name}/conv_bias"] = Tensor(np.zeros(channels), requires_grad=True)
        params[f"encoder/{name}/score_weight"] = uniform((channels,), channels)
        params[f"encoder/{name}/score_bias"] = Tensor(0.0, requires_grad=True)
    return params


def _branch(dense_map: Tensor, params: dict[str, Tensor], name: str,
            dropout_mask: Tensor | None) -> tuple[Tensor, Tensor, Tensor]:
    """1x1 conv -> tanh map, pooled features, linear score."""
    fmap = ad.tanh(ad.conv2d(dense_map, params[f"encoder/{name}/conv_weight"],
                             params[f"encoder/{name}/conv_bias"]))
    channels = fmap.shape[0]
    flat = ad.reshape(fmap, (channels, fmap.shape[1] * fmap.shape[2]))
    pooled = ad.mul(ad.reduce_sum(flat, axis=1), 1.0 / flat.shape[1])
    scored_input = ad.mul(pooled, dropout_mask) if dropout_mask is not None else pooled
    w = params[f"encoder/{name}/score_weight"]
    score = ad.add(ad.reduce_sum(ad.mul(scored_input, w)), params[f"encoder/{name}/score_bias"])
    return fmap, pooled, score


def encode(image: ImageInput, params: dict[str, Tensor], cfg: ModelConfig,
           dropout_masks: dict[str, Tensor] | None = None) -> EncoderOutput:
    """Pure forward pass; identical inputs and params give identical outputs.

    ``dropout_masks`` (one per head name, pre-scaled) are supplied by the
    trainer; evaluation passes None.
    """
    expected = (cfg.in_channels, cfg.image_size, cfg.image_size)
    if image.pixels.shape != expected:
        raise ContractError(f"image {image.image_id!r} has shape {image.pixels.shape}, expected {expected}")
    x = Tensor(image.pixels)
    for i in range(1, len(cfg.trunk_channels) + 1):
        x = ad.tanh(ad.conv2d(x, params[f"encoder/conv{i}/weight"],
                              params[f"encoder/conv{i}/bias"], stride=2, padding=1))
    dense_map = x

    masks = dropout_masks or {}
    _, global_features, global_score = _branch(dense_map, params, "global", masks.get("global"))
    attribute_maps = {}
    attribute_scores = {}
    for attr in ATTRIBUTES:
        fmap, _, score = _branch(dense_map, params, f"attr/{attr}", masks.get(attr))
        attribute_maps[attr] = fmap
        attribute_scores[attr] = score
    return EncoderOutput(dense_map=dense_map, global_features=global_features,
                         attribute_maps=attribute_maps, global_score=global_score,
                         attribute_scores=attribute_scores)


@dataclass
class ScoreTargets:
    global_score: float | None = None
    attribute_scores: dict[str, float] = field(default_factory=dict)


def mse_loss(preds: list[Tensor], targets: list[float]) -> Tensor:
    """Half mean squared error over a batch: (1/2N) * sum (pred - target)^2."""
    if not preds or len(preds) != len(targets):
        raise ContractError(f"mse_loss: {len(preds)} predictions vs {len(targets)} targets")
    diffs = ad.sub(ad.stack(preds), Tensor(targets))
    return ad.mul(ad.reduce_sum(ad.mul(diffs, diffs)), 0.5 / len(preds))


def total_loss(attr_losses: dict[str, Tensor | None], global_loss: Tensor | None) -> Tensor:
    """Sum of the six loss components; absent (weakly annotated) terms drop out."""
    present = [attr_losses[a] for a in ATTRIBUTES if attr_losses.get(a) is not None]
    if global_loss is not None:
        present.append(global_loss)
    if not present:
        raise ContractError("total_loss: every component is absent")
    out = present[0]
    for term in present[1:]:
        out = ad.add(out, term)
    return out


def average_attribute_score(preds: dict[str, float]) -> float:
    """Arithmetic mean of the five attribute scores (the reported image score)."""
    missing = [a for a in ATTRIBUTES if a not in preds]
    if missing:
        raise ContractError(f"average_attribute_score: missing attributes {missing}")
    return sum(preds[a] for a in ATTRIBUTES) / len(ATTRIBUTES)


def clamp_score(value: float) -> float:
    """Reporting-time clamp to the [0, 10] score range."""
    return min(10.0, max(0.0, value))
