"""Per-attribute LSTM caption decoder over attended image features.

Each decode step embeds the previous token, asks the attention module for a
context vector from the attribute's feature map conditioned on the previous
hidden state, feeds [embedding; context] through a standard LSTM cell, and
projects the hidden state to vocabulary logits. Image information therefore
enters at every step, not only at the start.

Sequence probability is the product of teacher-forced per-step softmax
probabilities; the training loss is the corresponding sum of negative log
probabilities. Decoding never emits PAD or BOS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .attention import AttentionParams, attend
from .autodiff import Tensor
from .errors import ContractError
from .vocab import BOS, EOS, PAD

GATES = ("input", "forget", "output", "cell")


@dataclass
class DecoderParams:
    """Gate weights are fused row-blocks in GATES order: shapes (4H, in), (4H, H), (4H,)."""

    embedding: Tensor      # (V, embed)
    gates_w_x: Tensor
    gates_w_h: Tensor
    gates_bias: Tensor
    out_weight: Tensor     # (V, hidden)
    out_bias: Tensor       # (V,)

    @property
    def hidden_size(self) -> int:
        return self.gates_w_h.shape[1]


@dataclass
class DecoderState:
    hidden: Tensor
    cell: Tensor


@dataclass
class CaptionSequence:
    tokens: list[int]                       # BOS ... (EOS unless max_len hit)
    attribute: str | None = None
    step_probs: list[float] = field(default_factory=list)

    @property
    def generated(self) -> list[int]:
        body = self.tokens[1:]
        return body[:-1] if body and body[-1] == EOS else body


def init_decoder_params(vocab_size: int, embed_size: int, hidden_size: int,
                        context_size: int, rng) -> dict[str, Tensor]:
    """Parameter tensors for one attribute's decoder, keyed by field path."""
    def uniform(shape, fan_in):
        s = 1.0 / (fan_in ** 0.5)
        return Tensor(rng.uniform(-s, s, size=shape), requires_grad=True)

    input_size = embed_size + context_size
    params: dict[str, Tensor] = {"embedding": uniform((vocab_size, embed_size), embed_size)}
    params["gates_w_x"] = uniform((4 * hidden_size, input_size), input_size)
    params["gates_w_h"] = uniform((4 * hidden_size, hidden_size), hidden_size)
    params["gates_bias"] = Tensor(np.zeros(4 * hidden_size), requires_grad=True)
    params["out_weight"] = uniform((vocab_size, hidden_size), hidden_size)
    params["out_bias"] = Tensor(np.zeros(vocab_size), requires_grad=True)
    return params


def decoder_params_view(flat: dict[str, Tensor]) -> DecoderParams:
    return DecoderParams(embedding=flat["embedding"], gates_w_x=flat["gates_w_x"],
                         gates_w_h=flat["gates_w_h"], gates_bias=flat["gates_bias"],
                         out_weight=flat["out_weight"], out_bias=flat["out_bias"])


def lstm_step(x: Tensor, state: DecoderState, params: DecoderParams) -> DecoderState:
    """Standard input/forget/output/candidate gating (fused gate projections)."""
    h = params.hidden_size
    z = ad.add(ad.add(ad.matmul(params.gates_w_x, x),
                      ad.matmul(params.gates_w_h, state.hidden)), params.gates_bias)
    i = ad.sigmoid(ad.slice_vector(z, 0, h))
    f = ad.sigmoid(ad.slice_vector(z, h, 2 * h))
    o = ad.sigmoid(ad.slice_vector(z, 2 * h, 3 * h))
    g = ad.tanh(ad.slice_vector(z, 3 * h, 4 * h))
    cell = ad.add(ad.mul(f, state.cell), ad.mul(i, g))
    hidden = ad.mul(o, ad.tanh(cell))
    return DecoderState(hidden=hidden, cell=cell)


def initial_state(hidden_size: int) -> DecoderState:
    return DecoderState(hidden=Tensor(np.zeros(hidden_size)),
                        cell=Tensor(np.zeros(hidden_size)))


def decode_step(prev_token: int, state: DecoderState, feature_map: Tensor,
                params: DecoderParams, att_params: AttentionParams,
                order: str = "channel_first",
                dropout_mask: Tensor | None = None):
    """One step: embed, attend, LSTM, project. Returns (logits, state, attended)."""
    if not 0 <= prev_token < params.embedding.shape[0]:
        raise ContractError(f"token id {prev_token} outside vocabulary of {params.embedding.shape[0]}")
    embedded = ad.take_row(params.embedding, prev_token)
    context, attended = attend(feature_map, state.hidden, att_params, order)
    x = ad.concat([embedded, context])
    if dropout_mask is not None:
        x = ad.mul(x, dropout_mask)
    new_state = lstm_step(x, state, params)
    logits = ad.add(ad.matmul(params.out_weight, new_state.hidden), params.out_bias)
    return logits, new_state, attended


def _teacher_forced_log_probs(tokens: list[int], feature_map: Tensor,
                              params: DecoderParams, att_params: AttentionParams,
                              order: str,
                              dropout_masks: list[Tensor] | None = None) -> list[Tensor]:
    """Per-step log P(token_t | prefix) graph nodes; PAD positions are skipped."""
    if len(tokens) < 2 or tokens[0] != BOS:
        raise ContractError("token sequence must start with BOS and contain at least one step")
    state = initial_state(params.hidden_size)
    log_probs = []
    for t in range(1, len(tokens)):
        if tokens[t] == PAD:
            continue
        mask = dropout_masks[t - 1] if dropout_masks else None
        logits, state, _ = decode_step(tokens[t - 1], state, feature_map, params,
                                       att_params, order, mask)
        log_probs.append(ad.pick(ad.log_softmax(logits, axis=0), tokens[t]))
    return log_probs


def sequence_nll(tokens: list[int], feature_map: Tensor, params: DecoderParams,
                 att_params: AttentionParams, order: str = "channel_first",
                 dropout_masks: list[Tensor] | None = None) -> Tensor:
    """Graph node for -sum_t log P(token_t); the caption training loss."""
    log_probs = _teacher_forced_log_probs(tokens, feature_map, params, att_params,
                                          order, dropout_masks)
    return ad.neg(ad.reduce_sum(ad.stack(log_probs)))


def sequence_prob(tokens: list[int], feature_map: Tensor, params: DecoderParams,
                  att_params: AttentionParams, order: str = "channel_first"
                  ) -> tuple[float, list[float]]:
    """Probability of a BOS/EOS-framed sequence as a product of step softmaxes.

    Returns (probability, per-step probabilities). Computed as a running
    product, so it cross-checks exp(-sequence_nll) rather than restating it.
    """
    state = initial_state(params.hidden_size)
    if len(tokens) < 2 or tokens[0] != BOS:
        raise ContractError("token sequence must start with BOS and contain at least one step")
    prob = 1.0
    steps = []
    for t in range(1, len(tokens)):
        if tokens[t] == PAD:
            continue
        logits, state, _ = decode_step(tokens[t - 1], state, feature_map, params,
                                       att_params, order)
        p = float(ad.softmax(logits, axis=0).data[tokens[t]])
        steps.append(p)
        prob *= p
    return prob, steps


def _step_log_probs(prev_token: int, state: DecoderState, feature_map: Tensor,
                    params: DecoderParams, att_params: AttentionParams,
                    order: str) -> tuple[np.ndarray, DecoderState]:
    logits, state, _ = decode_step(prev_token, state, feature_map, params, att_params, order)
    shifted = logits.data - logits.data.max()
    log_probs = shifted - math.log(np.exp(shifted).sum())
    return log_probs, state


def greedy_decode(feature_map: Tensor, params: DecoderParams,
                  att_params: AttentionParams, order: str = "channel_first",
                  max_len: int = 30, attribute: str | None = None) -> CaptionSequence:
    """Argmax decoding from BOS until EOS or max_len generated tokens.

    PAD and BOS are never emitted; argmax ties resolve to the lowest id.
    """
    state = initial_state(params.hidden_size)
    tokens = [BOS]
    probs = []
    for _ in range(max_len):
        log_probs, state = _step_log_probs(tokens[-1], state, feature_map, params,
                                           att_params, order)
        masked = log_probs.copy()
        masked[PAD] = -np.inf
        masked[BOS] = -np.inf
        token = int(np.argmax(masked))
        probs.append(math.exp(log_probs[token]))
        tokens.append(token)
        if token == EOS:
            break
    return CaptionSequence(tokens=tokens, attribute=attribute, step_probs=probs)


@dataclass
class _Hypothesis:
    tokens: tuple[int, ...]
    log_prob: float
    state: DecoderState | None

    @property
    def score(self) -> float:
        return self.log_prob / (len(self.tokens) - 1)  # normalized per generated token


def beam_decode(feature_map: Tensor, params: DecoderParams,
                att_params: AttentionParams, width: int,
                order: str = "channel_first", max_len: int = 30,
                attribute: str | None = None) -> CaptionSequence:
    """Length-normalized beam search over log sequence probability.

    Expansions are ranked by (normalized score, token ids); hypotheses that
    choose EOS move to the finished pool. Width 1 reproduces greedy decoding.
    """
    if width < 1:
        raise ContractError(f"beam width must be >= 1, got {width}")
    live = [_Hypothesis(tokens=(BOS,), log_prob=0.0,
                        state=initial_state(params.hidden_size))]
    finished: list[_Hypothesis] = []
    for _ in range(max_len):
        if not live:
            break
        candidates = []
        for hyp in live:
            log_probs, state = _step_log_probs(hyp.tokens[-1], hyp.state, feature_map,
                                               params, att_params, order)
            for token in range(len(log_probs)):
                if token in (PAD, BOS):
                    continue
                candidates.append(_Hypothesis(tokens=hyp.tokens + (token,),
                                              log_prob=hyp.log_prob + float(log_probs[token]),
                                              state=state))
        candidates.sort(key=lambda h: (-h.score, h.tokens))
        kept = candidates[:width]
        live = []
        for hyp in kept:
            if hyp.tokens[-1] == EOS:
                finished.append(_Hypothesis(hyp.tokens, hyp.log_prob, None))
            else:
                live.append(hyp)
    pool = finished + [_Hypothesis(h.tokens, h.log_prob, None) for h in live]
    best = min(pool, key=lambda h: (-h.score, h.tokens))
    tokens = list(best.tokens)
    probs = []
    if len(tokens) >= 2:
        _, probs = sequence_prob(tokens, feature_map, params, att_params, order)
    return CaptionSequence(tokens=tokens, attribute=attribute, step_probs=probs)
