"""Two-stage trainer: contracts, determinism, masking, overfit behaviour."""

import copy
import math

import numpy as np
import pytest

from aescap import attributes as attrs
from aescap.corpus import AttributedRecord
from aescap.encoder import ModelConfig
from aescap.errors import ContractError, DataError
from aescap.model import AttributeCaptioner
from aescap.text import tokenize
from aescap.training import (TrainConfig, TrainLog, build_vocab, evaluate,
                             finetune, merge_source_annotations, pretrain)
from aescap.vocab import Vocab

TINY = dict(image_size=8, trunk_channels=(2, 3), attr_channels=2,
            global_channels=2, attention_dim=2, hidden_size=6, embed_size=4,
            max_len=8, seed=3)


def tiny_model(vocab_words=("bright", "color", "sharp", "lines", "soft", "sky"), **overrides):
    cfg = ModelConfig(**{**TINY, **overrides})
    return AttributeCaptioner(cfg, Vocab(list(vocab_words)))


def full_corpus(n=3):
    records = []
    for i in range(n):
        records.append(AttributedRecord(
            image_id=f"full{i}",
            captions={
                attrs.COLOR_LIGHTING: [f"bright color {i % 2}"],
                attrs.FOCUS: ["sharp lines"],
            },
            scores={attrs.COLOR_LIGHTING: 6.0 + i, attrs.FOCUS: 5.0},
            global_score=6.5,
        ))
    return records


def weak_corpus(n=3):
    records = []
    for i in range(n):
        records.append(AttributedRecord(
            image_id=f"weak{i}",
            captions={attrs.COLOR_AND_LIGHTING: ["soft sky color"],
                      attrs.COMPOSITION: ["sharp lines"]},
        ))
    return records


def quick_cfg(**overrides):
    base = dict(lr=0.05, batch_size_full=2, batch_size_weak=2, epochs_pretrain=1,
                epochs_finetune=1, dropout=0.0, seed=7)
    base.update(overrides)
    return TrainConfig(**base)


class TestMergeSourceAnnotations:
    def test_caption_concatenation_and_score_average(self):
        record = AttributedRecord(
            image_id="x",
            captions={attrs.DEPTH_OF_FIELD: ["deep field"], attrs.FOCUS: ["sharp"],
                      attrs.COLOR_LIGHTING: ["bright"]},
            scores={attrs.DEPTH_OF_FIELD: 4.0, attrs.FOCUS: 6.0, attrs.COLOR_LIGHTING: 8.0},
            global_score=7.0,
        )
        merged = merge_source_annotations(record)
        assert merged.captions[attrs.DEPTH_AND_FOCUS] == ["deep field", "sharp"]
        assert merged.scores[attrs.DEPTH_AND_FOCUS] == pytest.approx(5.0)
        assert merged.scores[attrs.COLOR_AND_LIGHTING] == 8.0
        assert merged.global_score == 7.0

    def test_single_member_of_pair_passes_through(self):
        record = AttributedRecord(
            image_id="y", captions={attrs.GENERAL_IMPRESSION: ["good"]},
            scores={attrs.GENERAL_IMPRESSION: 9.0})
        merged = merge_source_annotations(record)
        assert merged.scores[attrs.IMPRESSION_AND_SUBJECT] == 9.0
        assert merged.captions[attrs.IMPRESSION_AND_SUBJECT] == ["good"]

    def test_already_merged_records_unchanged(self):
        record = weak_corpus(1)[0]
        merged = merge_source_annotations(record)
        assert merged.captions == record.captions


class TestPretrainContracts:
    def test_refuses_score_free_corpus(self):
        model = tiny_model()
        records = [AttributedRecord(image_id="bad",
                                    captions={attrs.COLOR_LIGHTING: ["bright color"]})]
        with pytest.raises(DataError, match="scores"):
            pretrain(model, records, quick_cfg())

    def test_zero_epochs_leaves_model_unchanged(self):
        model = tiny_model()
        before = {k: v.data.copy() for k, v in model.params.items()}
        log = pretrain(model, full_corpus(), quick_cfg(epochs_pretrain=0))
        assert log.entries == []
        for k, v in model.params.items():
            assert np.array_equal(v.data, before[k])

    def test_invalid_config_rejected(self):
        with pytest.raises(ContractError):
            quick_cfg(lr=0.0).validate()
        with pytest.raises(ContractError):
            quick_cfg(dropout=1.0).validate()

    def test_log_entries_carry_loss_components(self):
        model = tiny_model()
        log = pretrain(model, full_corpus(), quick_cfg())
        assert log.entries
        entry = log.entries[0]
        assert entry["stage"] == "pretrain"
        assert "score_loss" in entry and "caption_loss" in entry
        assert entry["loss"] == pytest.approx(entry["score_loss"] + entry["caption_loss"])


class TestDeterminism:
    def test_bit_identical_runs(self):
        def run():
            model = tiny_model()
            cfg = quick_cfg(dropout=0.5, epochs_pretrain=2, epochs_finetune=2)
            log = pretrain(model, full_corpus(), cfg)
            finetune(model, weak_corpus(), cfg, log=log, start_step=log.last_step())
            return model, log

        m1, l1 = run()
        m2, l2 = run()
        assert l1.entries == l2.entries
        for k in m1.params:
            assert np.array_equal(m1.params[k].data, m2.params[k].data)

    def test_stage_order_observable(self):
        cfg = quick_cfg(epochs_pretrain=1, epochs_finetune=1)
        both = tiny_model()
        pretrain(both, full_corpus(), cfg)
        finetune(both, weak_corpus(), cfg)
        only = tiny_model()
        finetune(only, weak_corpus(), cfg)
        assert any(not np.array_equal(both.params[k].data, only.params[k].data)
                   for k in both.params)


class TestFinetuneMasking:
    def test_caption_only_corpus_has_no_score_terms(self):
        model = tiny_model()
        log = finetune(model, weak_corpus(), quick_cfg())
        assert log.entries
        for entry in log.entries:
            assert "score_loss" not in entry
            assert "caption_loss" in entry

    def test_absent_attribute_skips_its_nll_term(self):
        model = tiny_model()
        records = [AttributedRecord(image_id="one",
                                    captions={attrs.COLOR_AND_LIGHTING: ["bright color"]})]
        log = finetune(model, records, quick_cfg(batch_size_weak=1))
        # [BOS, bright, color, EOS] -> 3 prediction steps, one attribute only
        assert log.entries[0]["caption_tokens"] == 3

    def test_freeze_encoder_flag(self):
        cfg = quick_cfg(freeze_encoder_in_finetune=True)
        model = tiny_model()
        before = {k: v.data.copy() for k, v in model.params.items()}
        finetune(model, weak_corpus(), cfg)
        for k, v in model.params.items():
            if k.startswith("encoder/"):
                assert np.array_equal(v.data, before[k]), k
        assert any(not np.array_equal(model.params[k].data, before[k])
                   for k in model.params if k.startswith("decoder/"))

    def test_partial_scores_in_weak_corpus_contribute(self):
        model = tiny_model()
        records = weak_corpus(2)
        records[0].scores = {attrs.COMPOSITION: 5.5}
        log = finetune(model, records, quick_cfg(batch_size_weak=2))
        assert any("score_loss" in e for e in log.entries)


class TestDropout:
    def test_rate_zero_training_forward_matches_eval(self):
        model = tiny_model()
        from aescap.images import load_pixels
        from aescap.training import _StageRunner

        runner = _StageRunner(model, quick_cfg(dropout=0.0), "pretrain", model.params)
        assert runner._head_masks() is None
        assert runner._step_masks(3) is None
        image = load_pixels("x", None, model.cfg.in_channels, model.cfg.image_size)
        train_fw = model.encode(image, runner._head_masks())
        eval_fw = model.encode(image)
        assert train_fw.global_score.item() == eval_fw.global_score.item()

    def test_nonzero_rate_perturbs_training_forward(self):
        model = tiny_model()
        from aescap.images import load_pixels
        from aescap.training import _StageRunner

        runner = _StageRunner(model, quick_cfg(dropout=0.5), "pretrain", model.params)
        masks = runner._head_masks()
        assert masks is not None and set(masks) == {"global", *attrs.ATTRIBUTES}
        image = load_pixels("x", None, model.cfg.in_channels, model.cfg.image_size)
        dropped = model.encode(image, masks)
        clean = model.encode(image)
        assert dropped.global_score.item() != clean.global_score.item()


class TestOverfit:
    def test_finetune_halves_caption_nll(self):
        model = tiny_model()
        records = weak_corpus(2)
        cfg = quick_cfg(lr=0.3, epochs_finetune=250, batch_size_weak=2)

        def mean_nll():
            total, count = 0.0, 0
            for record in records:
                from aescap.images import load_pixels

                image = load_pixels(record.image_id, None, model.cfg.in_channels,
                                    model.cfg.image_size)
                encoded = model.encode(image)
                for attr, caps in record.captions.items():
                    ids = model.vocab.frame(tokenize(caps[0]))
                    total += model.caption_nll(encoded, attr, ids).item()
                    count += 1
            return total / count

        before = mean_nll()
        finetune(model, records, cfg)
        after = mean_nll()
        assert after <= 0.5 * before


class TestEvaluate:
    def test_empty_testset_rejected(self):
        with pytest.raises(ContractError):
            evaluate(tiny_model(), [])

    def test_report_covers_attributes_present(self):
        model = tiny_model()
        records = weak_corpus(2)
        records[0].scores = {attrs.COLOR_AND_LIGHTING: 6.0}
        records[0].global_score = 7.0
        report = evaluate(model, records)
        assert set(report.per_attribute) == {attrs.COLOR_AND_LIGHTING, attrs.COMPOSITION}
        m = report.per_attribute[attrs.COLOR_AND_LIGHTING]
        assert m.num_pairs == 2
        assert m.score_mse is not None
        assert report.global_score_mse is not None
        assert report.num_images == 2

    def test_memorized_model_gets_bleu_one(self):
        # One caption per attribute decoder, hammered until greedy reproduces it.
        model = tiny_model()
        records = [AttributedRecord(image_id="m0",
                                    captions={attrs.COLOR_AND_LIGHTING: ["bright color"]}),
                   AttributedRecord(image_id="m1",
                                    captions={attrs.COMPOSITION: ["sharp lines"]})]
        finetune(model, records, quick_cfg(lr=0.5, epochs_finetune=200, batch_size_weak=2))
        report = evaluate(model, records)
        assert report.per_attribute[attrs.COLOR_AND_LIGHTING].bleu1 == pytest.approx(1.0)
        assert report.per_attribute[attrs.COMPOSITION].bleu1 == pytest.approx(1.0)

    def test_deterministic_reports(self):
        model = tiny_model()
        records = weak_corpus(2)
        assert evaluate(model, records).to_json() == evaluate(model, records).to_json()


class TestBuildVocab:
    def test_min_freq_and_reserved(self):
        records = [AttributedRecord(image_id="v0",
                                    captions={attrs.COMPOSITION: ["sharp lines", "sharp curve"]})]
        vocab = build_vocab([records], min_freq=2)
        assert "sharp" in vocab.ids
        assert "curve" not in vocab.ids
        assert len(vocab) == 5  # 4 reserved + "sharp"

    def test_log_roundtrip(self, tmp_path):
        log = TrainLog()
        log.append(stage="pretrain", step=1, epoch=0, loss=1.0)
        path = tmp_path / "log.jsonl"
        log.save(path)
        assert path.read_text().strip() == '{"epoch": 0, "loss": 1.0, "stage": "pretrain", "step": 1}'
