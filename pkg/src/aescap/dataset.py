"""Keyword-transfer dataset construction.

Mines the top-k keywords per source attribute from a fully annotated corpus,
labels each comment of a weakly annotated corpus with every attribute whose
keyword list it hits (a comment can land in several attributes), merges the
seven source attributes down to five, drops images with no labelled comment,
and produces per-attribute train/val/test splits plus summary statistics.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field

from .attributes import ATTRIBUTES, DISPLAY_NAMES, SOURCE_ATTRIBUTES, merge_attribute
from .corpus import AttributedRecord, RawRecord
from .errors import ContractError, DataError
from .text import tokenize


@dataclass
class KeywordTable:
    """Ranked (keyword, frequency) lists per source attribute."""

    entries: dict[str, list[tuple[str, int]]]
    warnings: list[str] = field(default_factory=list)

    def keywords(self, attribute: str) -> set[str]:
        return {kw for kw, _ in self.entries.get(attribute, [])}

    def to_json(self) -> str:
        payload = {attr: [[kw, n] for kw, n in rows] for attr, rows in self.entries.items()}
        return json.dumps(payload, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "KeywordTable":
        try:
            payload = json.loads(text)
            entries = {attr: [(str(kw), int(n)) for kw, n in rows] for attr, rows in payload.items()}
        except (ValueError, TypeError) as exc:
            raise DataError(f"bad keyword table: {exc}") from exc
        return cls(entries=entries)


def mine_keywords(records: list[AttributedRecord], k: int = 5,
                  stopwords=None, synonyms=None) -> KeywordTable:
    """Top-k tokens by frequency per source attribute; ties break lexicographically."""
    if k < 0:
        raise ContractError(f"mine_keywords: k must be >= 0, got {k}")
    counts: dict[str, Counter] = {attr: Counter() for attr in SOURCE_ATTRIBUTES}
    for record in records:
        for attr, captions in record.captions.items():
            if attr not in counts:
                continue
            for caption in captions:
                counts[attr].update(tokenize(caption, stopwords, synonyms))
    entries = {}
    warnings = []
    for attr in SOURCE_ATTRIBUTES:
        counter = counts[attr]
        if not counter:
            warnings.append(f"attribute {attr!r} has no captions; omitted from keyword table")
            continue
        ranked = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
        entries[attr] = ranked[:k]
    return KeywordTable(entries=entries, warnings=warnings)


def assign_attributes(comment: str, table: KeywordTable,
                      stopwords=None, synonyms=None) -> set[str]:
    """Merged attributes whose keyword lists intersect the comment's tokens."""
    tokens = set(tokenize(comment, stopwords, synonyms))
    assigned = set()
    for attr in table.entries:
        if tokens & table.keywords(attr):
            assigned.add(merge_attribute(attr))
    return assigned


def build_dataset(raw_records: list[RawRecord], table: KeywordTable,
                  stopwords=None, synonyms=None) -> list[AttributedRecord]:
    """Label comments and keep only images with at least one labelled comment.

    A comment assigned to n attributes appears in all n caption lists. Output
    order follows input order.
    """
    seen: set[str] = set()
    out = []
    for record in raw_records:
        if record.image_id in seen:
            raise DataError(f"duplicate image_id {record.image_id!r}")
        seen.add(record.image_id)
        captions: dict[str, list[str]] = {}
        for comment in record.comments:
            for attr in sorted(assign_attributes(comment, table, stopwords, synonyms)):
                captions.setdefault(attr, []).append(comment)
        if not captions:
            continue
        out.append(AttributedRecord(
            image_id=record.image_id,
            captions=captions,
            global_score=record.global_score,
            image_path=record.image_path,
        ))
    return out


@dataclass
class AttributeSplit:
    train: list[AttributedRecord]
    val: list[AttributedRecord]
    test: list[AttributedRecord]


@dataclass
class DatasetSplits:
    per_attribute: dict[str, AttributeSplit]
    warnings: list[str] = field(default_factory=list)


def split_dataset(records: list[AttributedRecord], val_n: int, test_n: int,
                  seed: int = 0) -> DatasetSplits:
    """Per-attribute random splits: val_n validation, test_n test, rest train.

    Splits are independent per attribute (the same image may sit in different
    slots for different attributes). When an attribute has fewer than
    val_n + test_n records the requested sizes are scaled down, keeping the
    val:test ratio and reserving at least half the records for training; the
    fallback is reported in ``warnings``.
    """
    if val_n < 0 or test_n < 0:
        raise ContractError(f"split sizes must be non-negative, got val={val_n} test={test_n}")
    per_attribute = {}
    warnings = []
    for attr in ATTRIBUTES:
        members = [r for r in records if r.captions.get(attr)]
        n = len(members)
        want = val_n + test_n
        if n < want:
            budget = n // 2
            scale = budget / want if want else 0.0
            v, t = int(val_n * scale), int(test_n * scale)
            warnings.append(
                f"attribute {attr!r} has {n} records < requested {want}; "
                f"falling back to val={v} test={t}")
        else:
            v, t = val_n, test_n
        order = list(range(n))
        random.Random(f"{seed}:{attr}").shuffle(order)
        val = [members[i] for i in order[:v]]
        test = [members[i] for i in order[v:v + t]]
        train = [members[i] for i in order[v + t:]]
        per_attribute[attr] = AttributeSplit(train=train, val=val, test=test)
    return DatasetSplits(per_attribute=per_attribute, warnings=warnings)


@dataclass
class AttributeStats:
    images: int
    comments: int
    average: float  # comments per image, rounded to 2 decimals


@dataclass
class DatasetStats:
    per_attribute: dict[str, AttributeStats]
    total_images: int
    total_comments: int
    total_average: float


def dataset_stats(records: list[AttributedRecord]) -> DatasetStats:
    """Per-attribute image/comment counts; comments count once per attribute list."""
    per_attribute = {}
    total_comments = 0
    for attr in ATTRIBUTES:
        images = 0
        comments = 0
        for record in records:
            caps = record.captions.get(attr) or []
            if caps:
                images += 1
                comments += len(caps)
        per_attribute[attr] = AttributeStats(
            images=images,
            comments=comments,
            average=round(comments / images, 2) if images else 0.0,
        )
        total_comments += comments
    total_images = len(records)
    return DatasetStats(
        per_attribute=per_attribute,
        total_images=total_images,
        total_comments=total_comments,
        total_average=round(total_comments / total_images, 2) if total_images else 0.0,
    )


def render_stats_table(stats: DatasetStats) -> str:
    header = f"{'Attribute':<24} {'Images':>10} {'Comments':>10} {'Average':>9}"
    rows = [header, "-" * len(header)]
    for attr, s in stats.per_attribute.items():
        rows.append(f"{DISPLAY_NAMES.get(attr, attr):<24} {s.images:>10} {s.comments:>10} {s.average:>9.2f}")
    rows.append("-" * len(header))
    rows.append(f"{'Total':<24} {stats.total_images:>10} {stats.total_comments:>10} {stats.total_average:>9.2f}")
    return "\n".join(rows) + "\n"
