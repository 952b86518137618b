"""Command-line surface.

Subcommands: build-dataset, stats, train, caption, evaluate, gradcheck,
config-dump. Exit codes: 0 success, 1 usage or config error, 2 data error,
3 invariant or gradient failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .attributes import ATTRIBUTES
from .config import DEFAULT_CONFIG, load_pipeline_config, model_config_from_preset
from .corpus import (atomic_write_text, read_attributed_records,
                     read_raw_records, write_attributed_records, write_jsonl)
from .dataset import (KeywordTable, build_dataset, dataset_stats,
                      mine_keywords, render_stats_table, split_dataset)
from .encoder import average_attribute_score
from .errors import CheckpointError, ContractError, DataError
from .images import load_pixels
from .metrics import (EvalPair, MetricReport, compute_attribute_metrics,
                      render_report_table)
from .model import AttributeCaptioner
from .text import tokenize
from .training import TrainLog, build_vocab, evaluate, finetune, pretrain
from .verify import TOLERANCE, run_gradcheck

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INVARIANT = 3


def cmd_build_dataset(args) -> int:
    for path in (args.full, args.weak):
        if not os.path.exists(path):
            print(f"error: corpus not found: {path}", file=sys.stderr)
            return EXIT_DATA
    full_records = read_attributed_records(args.full)
    raw_records = read_raw_records(args.weak)

    table = mine_keywords(full_records, k=args.top_k)
    for warning in table.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    records = build_dataset(raw_records, table)
    stats = dataset_stats(records)

    os.makedirs(args.out_dir, exist_ok=True)
    atomic_write_text(os.path.join(args.out_dir, "keyword_table.json"), table.to_json())
    write_attributed_records(os.path.join(args.out_dir, "dataset.jsonl"), records)
    stats_text = render_stats_table(stats)
    atomic_write_text(os.path.join(args.out_dir, "stats.txt"), stats_text)

    if args.val_n or args.test_n:
        splits = split_dataset(records, args.val_n, args.test_n, seed=args.seed)
        for warning in splits.warnings:
            print(f"warning: {warning}", file=sys.stderr)
        for attr, split in splits.per_attribute.items():
            for part in ("train", "val", "test"):
                path = os.path.join(args.out_dir, f"{attr}.{part}.jsonl")
                write_attributed_records(path, getattr(split, part))
    print(stats_text, end="")
    print(f"kept {len(records)} of {len(raw_records)} records -> {args.out_dir}")
    return EXIT_OK


def cmd_stats(args) -> int:
    if not os.path.exists(args.dataset):
        print(f"error: dataset not found: {args.dataset}", file=sys.stderr)
        return EXIT_DATA
    records = read_attributed_records(args.dataset)
    text = render_stats_table(dataset_stats(records))
    if args.out:
        atomic_write_text(args.out, text)
    print(text, end="")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_pipeline_config(args.config)
    full_records = read_attributed_records(cfg.full_corpus)
    weak_records = read_attributed_records(cfg.weak_corpus)
    os.makedirs(cfg.out_dir, exist_ok=True)

    start_step = 0
    if args.resume:
        model, meta = AttributeCaptioner.load(args.resume)
        start_step = int(meta.get("step", 0))
        print(f"resumed from {args.resume} at step {start_step}")
    else:
        vocab = build_vocab([full_records, weak_records], min_freq=cfg.model.vocab_min_freq)
        model = AttributeCaptioner(cfg.model, vocab)

    ckpt_path = os.path.join(cfg.out_dir, "model.ckpt")
    log = TrainLog()

    def checkpoint_callback(step: int) -> None:
        if cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            model.save(ckpt_path, extra_meta={"step": step, "stage": "mid"})

    log = pretrain(model, full_records, cfg.train, log=log, start_step=start_step,
                   step_callback=checkpoint_callback)
    log = finetune(model, weak_records, cfg.train, log=log, start_step=log.last_step() or start_step,
                   step_callback=checkpoint_callback)
    final_step = log.last_step() or start_step
    model.save(ckpt_path, extra_meta={"step": final_step, "stage": "final"})
    log.save(os.path.join(cfg.out_dir, "trainlog.jsonl"))
    print(f"trained {final_step - start_step} steps -> {ckpt_path}")
    return EXIT_OK


def _caption_line(model: AttributeCaptioner, record, beam_width: int) -> dict:
    image = load_pixels(record.image_id, record.image_path,
                        model.cfg.in_channels, model.cfg.image_size)
    encoded = model.encode(image)
    from .encoder import clamp_score

    entries = []
    scores = {}
    for attr in ATTRIBUTES:
        seq = model.decode_caption(encoded, attr, beam_width)
        score = clamp_score(encoded.attribute_scores[attr].item())
        scores[attr] = score
        entries.append({"attribute": attr,
                        "caption": " ".join(model.caption_tokens(seq)),
                        "score": score})
    return {"image_id": record.image_id, "attributes": entries,
            "average_score": average_attribute_score(scores)}


def cmd_caption(args) -> int:
    model, _ = AttributeCaptioner.load(args.checkpoint)
    if not os.path.exists(args.input):
        print(f"error: input not found: {args.input}", file=sys.stderr)
        return EXIT_DATA
    try:
        records = read_attributed_records(args.input)
    except DataError:
        records = read_raw_records(args.input)
    beam_width = 1 if args.greedy else args.beam_width
    lines = [_caption_line(model, record, beam_width) for record in records]
    write_jsonl(args.out, lines)
    print(f"captioned {len(lines)} images -> {args.out}")
    return EXIT_OK


def _precomputed_report(args, records) -> MetricReport:
    by_image = {}
    with open(args.captions, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{args.captions}: line {line_no}: invalid JSON: {exc}") from exc
            if "attributes" in obj:  # cmd_caption output shape
                for entry in obj["attributes"]:
                    by_image[(obj["image_id"], entry["attribute"])] = entry["caption"]
            else:
                by_image[(obj["image_id"], obj["attribute"])] = obj["caption"]
    from .training import merge_source_annotations

    report = MetricReport(num_images=len(records))
    for attr in ATTRIBUTES:
        pairs = []
        for record in (merge_source_annotations(r) for r in records):
            refs = record.captions.get(attr) or []
            caption = by_image.get((record.image_id, attr))
            if refs and caption is not None:
                pairs.append(EvalPair(candidate=tokenize(caption),
                                      references=[tokenize(c) for c in refs],
                                      attribute=attr))
        if pairs:
            report.per_attribute[attr] = compute_attribute_metrics(pairs)
    return report


def cmd_evaluate(args) -> int:
    if not os.path.exists(args.testset):
        print(f"error: testset not found: {args.testset}", file=sys.stderr)
        return EXIT_DATA
    records = read_attributed_records(args.testset)
    if args.captions:
        report = _precomputed_report(args, records)
    else:
        if not args.checkpoint:
            print("error: either --checkpoint or --captions is required", file=sys.stderr)
            return EXIT_USAGE
        model, _ = AttributeCaptioner.load(args.checkpoint)
        report = evaluate(model, records, beam_width=args.beam_width)
    atomic_write_text(args.out, report.to_json() + "\n")
    table = render_report_table(report)
    table_path = os.path.splitext(args.out)[0] + ".txt"
    atomic_write_text(table_path, table)
    print(table, end="")
    print(f"report -> {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    reports = run_gradcheck(instances=args.instances, seed=args.seed,
                            preset=args.preset, fault=args.inject_gradient_fault)
    failed = False
    for r in reports:
        status = "ok" if r.passed else "FAIL"
        print(f"{r.block:<10} instances={r.instances:<4} max_rel_error={r.max_error:.3e}  {status}")
        failed = failed or not r.passed
    if failed:
        print(f"gradient check failed (tolerance {TOLERANCE})", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_config_dump(_args) -> int:
    print(DEFAULT_CONFIG, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aescap",
        description="Aesthetic attribute captioning toolkit: build keyword-transfer "
                    "datasets, train the attribute captioner, and evaluate captions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dataset", help="mine keywords and build the attributed dataset")
    p.add_argument("--full", required=True, help="fully annotated corpus (JSON-lines)")
    p.add_argument("--weak", required=True, help="weakly annotated raw corpus (JSON-lines)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--top-k", type=int, default=5, help="keywords per attribute (default 5)")
    p.add_argument("--val-n", type=int, default=0, help="validation records per attribute")
    p.add_argument("--test-n", type=int, default=0, help="test records per attribute")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("stats", help="per-attribute image/comment statistics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="two-stage training from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("caption", help="caption and score every image of a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="attributed or raw JSON-lines corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--beam-width", type=int, default=1)
    p.add_argument("--greedy", action="store_true", help="force greedy decoding")
    p.set_defaults(func=cmd_caption)

    p = sub.add_parser("evaluate", help="decode a test set and report caption metrics")
    p.add_argument("--checkpoint")
    p.add_argument("--testset", required=True)
    p.add_argument("--out", required=True, help="metric report JSON path")
    p.add_argument("--beam-width", type=int, default=1)
    p.add_argument("--captions", help="precomputed captions JSON-lines (bypasses the model)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference check of all model gradients")
    p.add_argument("--preset", default="desk", choices=("desk", "paper-faithful"))
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-gradient-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("config-dump", help="print the default config file")
    p.set_defaults(func=cmd_config_dump)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
