"""Channel and spatial attention over an attribute feature map.

The feature map is a (channels, locations) matrix. Channel attention pools
each channel over locations, embeds the pooled value per channel (an outer
product with a learned direction), fuses in a projection of the decoder's
previous hidden state, squashes with tanh, and scores every channel with a
shared linear layer followed by a softmax over channels. Spatial attention
mirrors this per location. The scoring layers are shared across channels
(resp. locations), so a feature map with identical channels yields uniform
weights.

Both compositions are available: channel-then-spatial (the default) and
spatial-then-channel (kept for ablations).
"""

from __future__ import annotations

from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError

ORDERS = ("channel_first", "spatial_first")


@dataclass
class AttentionParams:
    """Shapes: dim = attention dim, C = map channels, H = decoder hidden size."""

    channel_proj: Tensor          # (dim,)   embeds each channel's pooled value
    channel_bias: Tensor          # (dim,)
    hidden_to_channel: Tensor     # (dim, H)
    channel_score_weight: Tensor  # (dim,)
    channel_score_bias: Tensor    # ()
    spatial_proj: Tensor          # (dim, C) embeds each location's column
    spatial_bias: Tensor          # (dim,)
    hidden_to_spatial: Tensor     # (dim, H)
    spatial_score_weight: Tensor  # (dim,)
    spatial_score_bias: Tensor    # ()


@dataclass
class AttendedFeature:
    """Intermediate maps and the probability weights of one attention pass."""

    input_map: Tensor        # (C, L) incoming feature map
    channel_map: Tensor      # (C, L) after channel weighting
    output_map: Tensor       # (C, L) after both weightings
    channel_weights: Tensor  # (C,) sums to 1
    spatial_weights: Tensor  # (L,) sums to 1


def channel_attention(feature_map: Tensor, hidden_state: Tensor,
                      params: AttentionParams) -> Tensor:
    """Softmax weights over channels, conditioned on the previous hidden state."""
    channels, locations = _map_shape(feature_map)
    pooled = ad.mul(ad.reduce_sum(feature_map, axis=1), 1.0 / locations)   # (C,)
    embedded = ad.outer(params.channel_proj, pooled)                       # (dim, C)
    fused = ad.add(ad.add(embedded, ad.tile_cols(params.channel_bias, channels)),
                   ad.tile_cols(ad.matmul(params.hidden_to_channel, hidden_state), channels))
    activated = ad.tanh(fused)
    scores = ad.add(ad.matmul(params.channel_score_weight, activated),
                    params.channel_score_bias)
    return ad.softmax(scores, axis=0)


def spatial_attention(feature_map: Tensor, hidden_state: Tensor,
                      params: AttentionParams) -> Tensor:
    """Softmax weights over spatial locations, conditioned on the hidden state."""
    channels, locations = _map_shape(feature_map)
    if params.spatial_proj.shape[1] != channels:
        raise ContractError(
            f"spatial projection expects {params.spatial_proj.shape[1]} channels, map has {channels}")
    embedded = ad.matmul(params.spatial_proj, feature_map)                 # (dim, L)
    fused = ad.add(ad.add(embedded, ad.tile_cols(params.spatial_bias, locations)),
                   ad.tile_cols(ad.matmul(params.hidden_to_spatial, hidden_state), locations))
    activated = ad.tanh(fused)
    scores = ad.add(ad.matmul(params.spatial_score_weight, activated),
                    params.spatial_score_bias)
    return ad.softmax(scores, axis=0)


def apply_channel_weights(feature_map: Tensor, weights: Tensor) -> Tensor:
    """Scale each channel (row) of the map by its weight."""
    channels, locations = _map_shape(feature_map)
    if weights.shape != (channels,):
        raise ContractError(f"channel weights shape {weights.shape} does not match {channels} channels")
    return ad.mul(feature_map, ad.tile_cols(weights, locations))


def apply_spatial_weights(feature_map: Tensor, weights: Tensor) -> Tensor:
    """Scale each location (column) of the map by its weight."""
    channels, locations = _map_shape(feature_map)
    if weights.shape != (locations,):
        raise ContractError(f"spatial weights shape {weights.shape} does not match {locations} locations")
    return ad.mul(feature_map, ad.tile_rows(weights, channels))


def attend(feature_map: Tensor, hidden_state: Tensor, params: AttentionParams,
           order: str = "channel_first") -> tuple[Tensor, AttendedFeature]:
    """Full attention pass; returns the per-channel context vector and internals.

    The context is the output map summed over locations: with channel-first
    ordering, context[c] = sum_l spatial_w[l] * channel_map[c, l].
    """
    if order not in ORDERS:
        raise ContractError(f"unknown attention order {order!r}; expected one of {ORDERS}")
    if order == "channel_first":
        channel_w = channel_attention(feature_map, hidden_state, params)
        mid = apply_channel_weights(feature_map, channel_w)
        spatial_w = spatial_attention(mid, hidden_state, params)
        out = apply_spatial_weights(mid, spatial_w)
    else:
        spatial_w = spatial_attention(feature_map, hidden_state, params)
        mid = apply_spatial_weights(feature_map, spatial_w)
        channel_w = channel_attention(mid, hidden_state, params)
        out = apply_channel_weights(mid, channel_w)
    context = ad.reduce_sum(out, axis=1)
    attended = AttendedFeature(input_map=feature_map, channel_map=mid, output_map=out,
                               channel_weights=channel_w, spatial_weights=spatial_w)
    return context, attended


def init_attention_params(channels: int, hidden_size: int, dim: int,
                          rng) -> dict[str, Tensor]:
    """Fresh parameter tensors keyed by field name (uniform +-1/sqrt(fan_in))."""
    def uniform(shape, fan_in):
        s = 1.0 / (fan_in ** 0.5)
        return Tensor(rng.uniform(-s, s, size=shape), requires_grad=True)

    return {
        "channel_proj": uniform((dim,), 1),
        "channel_bias": Tensor([0.0] * dim, requires_grad=True),
        "hidden_to_channel": uniform((dim, hidden_size), hidden_size),
        "channel_score_weight": uniform((dim,), dim),
        "channel_score_bias": Tensor(0.0, requires_grad=True),
        "spatial_proj": uniform((dim, channels), channels),
        "spatial_bias": Tensor([0.0] * dim, requires_grad=True),
        "hidden_to_spatial": uniform((dim, hidden_size), hidden_size),
        "spatial_score_weight": uniform((dim,), dim),
        "spatial_score_bias": Tensor(0.0, requires_grad=True),
    }


def _map_shape(feature_map: Tensor) -> tuple[int, int]:
    if feature_map.data.ndim != 2:
        raise ContractError(f"feature map must be (channels, locations), got shape {feature_map.shape}")
    return feature_map.shape
