"""Two-stage training and evaluation.

Stage one pretrains on a fully annotated corpus (per-attribute captions plus
scores, teacher-shaped); stage two fine-tunes on a weakly annotated corpus
(captions only, student-shaped). Both stages optimize the same joint loss:
the sum of the six score regression terms plus the per-token caption
negative log likelihood, weighted 1:1 by default. Absent annotations simply
drop out of the sum.

Determinism: given (seed, config, corpus) the whole train -> evaluate
pipeline is bit-reproducible. All randomness flows from one seeded generator
per stage, consumed in a fixed order; the persisted log contains no wall
times unless explicitly requested.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .attributes import ATTRIBUTES, MERGE_MAP, SOURCE_ATTRIBUTES
from .autodiff import Tensor
from .corpus import AttributedRecord, atomic_write_text
from .encoder import average_attribute_score, clamp_score, mse_loss, total_loss
from .errors import ContractError, DataError
from .images import load_pixels
from .metrics import EvalPair, MetricReport, compute_attribute_metrics, score_mse
from .model import AttributeCaptioner
from .text import tokenize
from .vocab import Vocab


@dataclass
class TrainConfig:
    lr: float = 0.01
    batch_size_full: int = 16       # fully annotated stage
    batch_size_weak: int = 64       # weakly annotated stage
    epochs_pretrain: int = 1
    epochs_finetune: int = 1
    dropout: float = 0.5
    seed: int = 0
    score_loss_weight: float = 1.0
    caption_loss_weight: float = 1.0
    max_steps_per_stage: int = 0    # 0 = no cap
    freeze_encoder_in_finetune: bool = False
    log_timing: bool = False        # wall times break bit-reproducible logs

    def validate(self) -> None:
        if self.lr <= 0:
            raise ContractError(f"lr must be positive, got {self.lr}")
        if self.batch_size_full < 1 or self.batch_size_weak < 1:
            raise ContractError("batch sizes must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError(f"dropout must lie in [0, 1), got {self.dropout}")


@dataclass
class TrainLog:
    entries: list[dict] = field(default_factory=list)

    def append(self, **entry) -> None:
        self.entries.append(entry)

    def save(self, path) -> None:
        lines = [json.dumps(e, sort_keys=True) for e in self.entries]
        atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))

    def last_step(self) -> int:
        return self.entries[-1]["step"] if self.entries else 0


def merge_source_annotations(record: AttributedRecord) -> AttributedRecord:
    """Fold seven source attributes into the five merged ones.

    Caption lists of merged pairs are concatenated; scores of merged pairs
    are averaged when both are present, otherwise the present one is used.
    """
    captions: dict[str, list[str]] = {}
    pending_scores: dict[str, list[float]] = {}
    for src in SOURCE_ATTRIBUTES:
        target = MERGE_MAP[src]
        if record.captions.get(src):
            captions.setdefault(target, []).extend(record.captions[src])
        if src in record.scores:
            pending_scores.setdefault(target, []).append(record.scores[src])
    # records may already carry merged attributes (weak corpora); keep them
    for attr in ATTRIBUTES:
        if record.captions.get(attr) and attr not in captions:
            captions[attr] = list(record.captions[attr])
        if attr in record.scores and attr not in pending_scores:
            pending_scores[attr] = [record.scores[attr]]
    scores = {a: sum(v) / len(v) for a, v in pending_scores.items()}
    return AttributedRecord(image_id=record.image_id, captions=captions,
                            scores=scores, global_score=record.global_score,
                            image_path=record.image_path)


def build_vocab(record_groups: list[list[AttributedRecord]], min_freq: int = 2) -> Vocab:
    captions = []
    for records in record_groups:
        for record in records:
            for caps in record.captions.values():
                captions.extend(tokenize(c) for c in caps)
    return Vocab.build(captions, min_freq=min_freq)


def _dropout_vector(rng, size: int, rate: float) -> Tensor:
    keep = (rng.random(size) >= rate).astype(np.float64) / (1.0 - rate)
    return Tensor(keep)


def default_pixel_provider(record: AttributedRecord, channels: int, size: int):
    return load_pixels(record.image_id, record.image_path, channels, size)


class _StageRunner:
    def __init__(self, model: AttributeCaptioner, cfg: TrainConfig, stage: str,
                 trainable: dict[str, Tensor], pixel_provider=None):
        self.model = model
        self.cfg = cfg
        self.stage = stage
        self.trainable = trainable
        self.pixel_provider = pixel_provider or default_pixel_provider
        self.rng = np.random.default_rng([cfg.seed, 0 if stage == "pretrain" else 1])

    def _head_masks(self) -> dict[str, Tensor] | None:
        if self.cfg.dropout <= 0.0:
            return None
        cfg = self.model.cfg
        masks = {"global": _dropout_vector(self.rng, cfg.global_channels, self.cfg.dropout)}
        for attr in ATTRIBUTES:
            masks[attr] = _dropout_vector(self.rng, cfg.attr_channels, self.cfg.dropout)
        return masks

    def _step_masks(self, n_steps: int) -> list[Tensor] | None:
        if self.cfg.dropout <= 0.0:
            return None
        size = self.model.cfg.embed_size + self.model.cfg.attr_channels
        return [_dropout_vector(self.rng, size, self.cfg.dropout) for _ in range(n_steps)]

    def batch_loss(self, batch: list[AttributedRecord]) -> tuple[Tensor, dict]:
        model, cfg = self.model, self.cfg
        score_preds: dict[str, list] = {a: [] for a in ATTRIBUTES}
        score_targets: dict[str, list[float]] = {a: [] for a in ATTRIBUTES}
        global_preds: list = []
        global_targets: list[float] = []
        caption_nlls = []
        caption_tokens = 0

        for record in batch:
            image = self.pixel_provider(record, model.cfg.in_channels, model.cfg.image_size)
            encoded = model.encode(image, self._head_masks())
            for attr in ATTRIBUTES:
                if attr in record.scores:
                    score_preds[attr].append(encoded.attribute_scores[attr])
                    score_targets[attr].append(record.scores[attr])
            if record.global_score is not None:
                global_preds.append(encoded.global_score)
                global_targets.append(record.global_score)
            for attr in ATTRIBUTES:
                captions = record.captions.get(attr) or []
                if not captions:
                    continue
                chosen = captions[int(self.rng.integers(len(captions)))]
                ids = model.vocab.frame(tokenize(chosen))
                steps = len(ids) - 1
                nll = model.caption_nll(encoded, attr, ids, self._step_masks(steps))
                caption_nlls.append(nll)
                caption_tokens += steps

        attr_losses = {a: mse_loss(score_preds[a], score_targets[a]) if score_preds[a] else None
                       for a in ATTRIBUTES}
        global_loss = mse_loss(global_preds, global_targets) if global_preds else None
        have_scores = global_loss is not None or any(v is not None for v in attr_losses.values())

        components = {}
        terms = []
        if have_scores:
            score_term = total_loss(attr_losses, global_loss)
            terms.append(ad.mul(score_term, cfg.score_loss_weight))
            components["score_loss"] = score_term.item()
        if caption_nlls:
            caption_term = ad.mul(ad.reduce_sum(ad.stack(caption_nlls)), 1.0 / caption_tokens)
            terms.append(ad.mul(caption_term, cfg.caption_loss_weight))
            components["caption_loss"] = caption_term.item()
            components["caption_tokens"] = caption_tokens
        if not terms:
            raise ContractError("batch contributes neither score nor caption terms")
        loss = terms[0]
        for term in terms[1:]:
            loss = ad.add(loss, term)
        return loss, components

    def run(self, records: list[AttributedRecord], epochs: int, batch_size: int,
            log: TrainLog, start_step: int = 0,
            step_callback: Callable[[int], None] | None = None) -> int:
        step = start_step
        for epoch in range(epochs):
            order = self.rng.permutation(len(records))
            for lo in range(0, len(records), batch_size):
                if self.cfg.max_steps_per_stage and step - start_step >= self.cfg.max_steps_per_stage:
                    return step
                batch = [records[i] for i in order[lo:lo + batch_size]]
                started = time.perf_counter()
                loss, components = self.batch_loss(batch)
                ad.backward(loss)
                ad.sgd_step(self.trainable, lr=self.cfg.lr)
                step += 1
                entry = {"stage": self.stage, "step": step, "epoch": epoch,
                         "loss": loss.item(), **components}
                if self.cfg.log_timing:
                    entry["wall_time"] = time.perf_counter() - started
                log.append(**entry)
                if step_callback is not None:
                    step_callback(step)
        return step


def pretrain(model: AttributeCaptioner, records: list[AttributedRecord],
             cfg: TrainConfig, log: TrainLog | None = None, start_step: int = 0,
             step_callback=None, pixel_provider=None) -> TrainLog:
    """Stage one: joint score + caption optimization on fully annotated data."""
    cfg.validate()
    for record in records:
        if not record.scores and record.global_score is None:
            raise DataError(
                f"pretraining requires fully annotated records; {record.image_id!r} has no scores")
        if not any(record.captions.values()):
            raise DataError(f"record {record.image_id!r} has no captions")
    merged = [merge_source_annotations(r) for r in records]
    log = log if log is not None else TrainLog()
    runner = _StageRunner(model, cfg, "pretrain", model.params, pixel_provider)
    runner.run(merged, cfg.epochs_pretrain, cfg.batch_size_full, log, start_step,
               step_callback)
    return log


def finetune(model: AttributeCaptioner, records: list[AttributedRecord],
             cfg: TrainConfig, log: TrainLog | None = None, start_step: int = 0,
             step_callback=None, pixel_provider=None) -> TrainLog:
    """Stage two: caption-driven fine-tuning; score terms only where targets exist."""
    cfg.validate()
    for record in records:
        if not any(record.captions.values()):
            raise DataError(f"record {record.image_id!r} has no captions")
    merged = [merge_source_annotations(r) for r in records]
    log = log if log is not None else TrainLog()
    if cfg.freeze_encoder_in_finetune:
        trainable = {k: v for k, v in model.params.items() if not k.startswith("encoder/")}
    else:
        trainable = model.params
    runner = _StageRunner(model, cfg, "finetune", trainable, pixel_provider)
    runner.run(merged, cfg.epochs_finetune, cfg.batch_size_weak, log, start_step,
               step_callback)
    return log


def evaluate(model: AttributeCaptioner, records: list[AttributedRecord],
             beam_width: int = 1, pixel_provider=None) -> MetricReport:
    """Decode a caption per (image, attribute), score it against references,
    and report per-attribute metrics plus normalized score MSEs."""
    if not records:
        raise ContractError("evaluate: empty test set")
    pixel_provider = pixel_provider or default_pixel_provider
    merged = [merge_source_annotations(r) for r in records]
    pairs: dict[str, list[EvalPair]] = {a: [] for a in ATTRIBUTES}
    score_pairs: dict[str, tuple[list[float], list[float]]] = {a: ([], []) for a in ATTRIBUTES}
    global_preds: list[float] = []
    global_targets: list[float] = []

    for record in merged:
        image = pixel_provider(record, model.cfg.in_channels, model.cfg.image_size)
        encoded = model.encode(image)
        attr_scores = {a: clamp_score(encoded.attribute_scores[a].item()) for a in ATTRIBUTES}
        for attr in ATTRIBUTES:
            captions = record.captions.get(attr) or []
            if captions:
                seq = model.decode_caption(encoded, attr, beam_width)
                candidate = model.caption_tokens(seq)
                references = [tokenize(c) for c in captions]
                pairs[attr].append(EvalPair(candidate=candidate, references=references,
                                            attribute=attr))
            if attr in record.scores:
                score_pairs[attr][0].append(attr_scores[attr] / 10.0)
                score_pairs[attr][1].append(record.scores[attr] / 10.0)
        if record.global_score is not None:
            global_preds.append(average_attribute_score(attr_scores) / 10.0)
            global_targets.append(record.global_score / 10.0)

    report = MetricReport(num_images=len(merged))
    for attr in ATTRIBUTES:
        if pairs[attr]:
            report.per_attribute[attr] = compute_attribute_metrics(
                pairs[attr], score_pairs[attr] if score_pairs[attr][0] else None)
    if global_preds:
        report.global_score_mse = score_mse(global_preds, global_targets)
    return report
