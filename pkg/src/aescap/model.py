"""The full attribute captioner: parameters, forward paths, persistence.

Parameters live in one flat name -> Tensor dict (checkpoint-friendly):

    encoder/...                     shared trunk and the six score heads
    attention/<attr>/<field>        one attention block per attribute
    decoder/<attr>/<path>           one LSTM decoder per attribute

With ``share_decoder`` enabled the five attributes read the same
``attention/shared`` and ``decoder/shared`` blocks (an ablation switch).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .attention import AttentionParams, init_attention_params
from .attributes import ATTRIBUTES
from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .decoder import (CaptionSequence, DecoderParams, beam_decode,
                      decoder_params_view, greedy_decode, init_decoder_params,
                      sequence_nll, sequence_prob)
from .encoder import (EncoderOutput, ImageInput, ModelConfig,
                      average_attribute_score, clamp_score, encode)
from .errors import ContractError
from .vocab import Vocab


class AttributeCaptioner:
    """Scores five aesthetic attributes of an image and captions each of them."""

    def __init__(self, cfg: ModelConfig, vocab: Vocab,
                 params: dict[str, Tensor] | None = None):
        self.cfg = cfg
        self.vocab = vocab
        self.params = params if params is not None else self._init_params()

    def _init_params(self) -> dict[str, Tensor]:
        from .encoder import init_encoder_params

        rng = np.random.default_rng(self.cfg.seed)
        params = init_encoder_params(self.cfg, rng)
        blocks = ["shared"] if self.cfg.share_decoder else list(ATTRIBUTES)
        for block in blocks:
            for field, tensor in init_attention_params(
                    self.cfg.attr_channels, self.cfg.hidden_size,
                    self.cfg.attention_dim, rng).items():
                params[f"attention/{block}/{field}"] = tensor
            for path, tensor in init_decoder_params(
                    len(self.vocab), self.cfg.embed_size, self.cfg.hidden_size,
                    self.cfg.attr_channels, rng).items():
                params[f"decoder/{block}/{path}"] = tensor
        return params

    def _block(self, attr: str) -> str:
        if attr not in ATTRIBUTES:
            raise ContractError(f"unknown attribute {attr!r}")
        return "shared" if self.cfg.share_decoder else attr

    def attention_params(self, attr: str) -> AttentionParams:
        prefix = f"attention/{self._block(attr)}/"
        fields = {k[len(prefix):]: v for k, v in self.params.items() if k.startswith(prefix)}
        return AttentionParams(**fields)

    def decoder_params(self, attr: str) -> DecoderParams:
        prefix = f"decoder/{self._block(attr)}/"
        flat = {k[len(prefix):]: v for k, v in self.params.items() if k.startswith(prefix)}
        return decoder_params_view(flat)

    # ------------------------------------------------------------------
    # forward paths

    def encode(self, image: ImageInput,
               dropout_masks: dict[str, Tensor] | None = None) -> EncoderOutput:
        return encode(image, self.params, self.cfg, dropout_masks)

    def score_image(self, image: ImageInput) -> dict[str, float]:
        """Clamped per-attribute scores plus their mean and the global head."""
        out = self.encode(image)
        scores = {a: clamp_score(out.attribute_scores[a].item()) for a in ATTRIBUTES}
        result = dict(scores)
        result["global"] = clamp_score(out.global_score.item())
        result["average"] = average_attribute_score(scores)
        return result

    def caption_nll(self, encoded: EncoderOutput, attr: str, token_ids: list[int],
                    dropout_masks: list[Tensor] | None = None) -> Tensor:
        return sequence_nll(token_ids, encoded.attribute_map_flat(attr),
                            self.decoder_params(attr), self.attention_params(attr),
                            self.cfg.attention_order, dropout_masks)

    def caption_prob(self, encoded: EncoderOutput, attr: str,
                     token_ids: list[int]) -> tuple[float, list[float]]:
        return sequence_prob(token_ids, encoded.attribute_map_flat(attr),
                             self.decoder_params(attr), self.attention_params(attr),
                             self.cfg.attention_order)

    def decode_caption(self, encoded: EncoderOutput, attr: str,
                       beam_width: int = 1) -> CaptionSequence:
        fmap = encoded.attribute_map_flat(attr)
        if beam_width <= 1:
            seq = greedy_decode(fmap, self.decoder_params(attr), self.attention_params(attr),
                                self.cfg.attention_order, self.cfg.max_len, attr)
        else:
            seq = beam_decode(fmap, self.decoder_params(attr), self.attention_params(attr),
                              beam_width, self.cfg.attention_order, self.cfg.max_len, attr)
        return seq

    def caption_tokens(self, seq: CaptionSequence) -> list[str]:
        return self.vocab.decode(seq.tokens)

    # ------------------------------------------------------------------
    # persistence

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = {
            "config": self.cfg.to_dict(),
            "vocab": self.vocab.words[4:],
        }
        meta.update(extra_meta or {})
        save_checkpoint(path, self.params, seed=self.cfg.seed, meta=meta)

    @classmethod
    def load(cls, path) -> tuple["AttributeCaptioner", dict]:
        params, _, meta = load_checkpoint(path)
        if "config" not in meta or "vocab" not in meta:
            from .errors import CheckpointError

            raise CheckpointError(f"checkpoint {path} lacks model config/vocab metadata")
        cfg = ModelConfig.from_dict(meta["config"])
        vocab = Vocab(meta["vocab"])
        return cls(cfg, vocab, params), meta
