"""Flat INI-style configuration for the training pipeline.

Three sections: [paths] (corpora and output locations), [model] (preset name
plus any dimension overrides), [train] (optimization settings). Every value
has a default; ``config-dump`` prints the full default file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

from .encoder import ModelConfig
from .errors import ContractError
from .training import TrainConfig

PRESETS = ("desk", "paper-faithful")

DEFAULT_CONFIG = """\
[paths]
full_corpus = corpora/full.jsonl
weak_corpus = corpora/weak.jsonl
out_dir = runs/latest

[model]
preset = desk
; dimension overrides (defaults shown for the desk preset)
image_size = 64
trunk_channels = 16,32,64
attr_channels = 32
global_channels = 32
attention_dim = 64
hidden_size = 128
embed_size = 32
max_len = 30
attention_order = channel_first
share_decoder = false
vocab_min_freq = 2
seed = 13

[train]
lr = 0.01
batch_size_full = 16
batch_size_weak = 64
epochs_pretrain = 1
epochs_finetune = 1
dropout = 0.5
seed = 0
score_loss_weight = 1.0
caption_loss_weight = 1.0
max_steps_per_stage = 0
freeze_encoder_in_finetune = false
checkpoint_every = 0
log_timing = false
"""


@dataclass
class PipelineConfig:
    full_corpus: str
    weak_corpus: str
    out_dir: str
    model: ModelConfig
    train: TrainConfig
    checkpoint_every: int = 0


def model_config_from_preset(preset: str, **overrides) -> ModelConfig:
    if preset == "desk":
        return ModelConfig.desk(**overrides)
    if preset == "paper-faithful":
        return ModelConfig.paper_faithful(**overrides)
    raise ContractError(f"unknown model preset {preset!r}; expected one of {PRESETS}")


def _model_overrides(section: configparser.SectionProxy) -> dict:
    out = {}
    ints = ("image_size", "attr_channels", "global_channels", "attention_dim",
            "hidden_size", "embed_size", "max_len", "vocab_min_freq", "seed")
    for key in ints:
        if key in section:
            out[key] = section.getint(key)
    if "trunk_channels" in section:
        out["trunk_channels"] = tuple(int(x) for x in section["trunk_channels"].split(","))
    if "attention_order" in section:
        out["attention_order"] = section["attention_order"]
    if "share_decoder" in section:
        out["share_decoder"] = section.getboolean("share_decoder")
    return out


def load_pipeline_config(path) -> PipelineConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ContractError(f"config file not found: {path}")
    try:
        paths = parser["paths"]
        model_sec = parser["model"] if parser.has_section("model") else {}
        train_sec = parser["train"] if parser.has_section("train") else {}

        preset = model_sec.get("preset", "desk") if model_sec else "desk"
        overrides = _model_overrides(model_sec) if model_sec else {}
        model = model_config_from_preset(preset, **overrides)

        defaults = TrainConfig()
        train = TrainConfig(
            lr=float(train_sec.get("lr", defaults.lr)),
            batch_size_full=int(train_sec.get("batch_size_full", defaults.batch_size_full)),
            batch_size_weak=int(train_sec.get("batch_size_weak", defaults.batch_size_weak)),
            epochs_pretrain=int(train_sec.get("epochs_pretrain", defaults.epochs_pretrain)),
            epochs_finetune=int(train_sec.get("epochs_finetune", defaults.epochs_finetune)),
            dropout=float(train_sec.get("dropout", defaults.dropout)),
            seed=int(train_sec.get("seed", defaults.seed)),
            score_loss_weight=float(train_sec.get("score_loss_weight", defaults.score_loss_weight)),
            caption_loss_weight=float(train_sec.get("caption_loss_weight", defaults.caption_loss_weight)),
            max_steps_per_stage=int(train_sec.get("max_steps_per_stage", defaults.max_steps_per_stage)),
            freeze_encoder_in_finetune=_getbool(train_sec, "freeze_encoder_in_finetune",
                                                defaults.freeze_encoder_in_finetune),
            log_timing=_getbool(train_sec, "log_timing", defaults.log_timing),
        )
        train.validate()
        return PipelineConfig(
            full_corpus=paths["full_corpus"],
            weak_corpus=paths["weak_corpus"],
            out_dir=paths.get("out_dir", "runs/latest"),
            model=model,
            train=train,
            checkpoint_every=int(train_sec.get("checkpoint_every", 0)),
        )
    except (KeyError, ValueError) as exc:
        raise ContractError(f"bad config {path}: {exc}") from exc


def _getbool(section, key, default: bool) -> bool:
    if not section or key not in section:
        return default
    value = section.get(key).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{key}: cannot parse boolean from {value!r}")
