"""Corpus record types and JSON-lines I/O.

Two record shapes flow through the toolkit:

* ``RawRecord`` — an image with unlabelled comments (and optionally a global
  score), the input to attribute assignment.
* ``AttributedRecord`` — an image with per-attribute caption lists, optional
  per-attribute scores, and an optional global score. Fully annotated corpora
  key captions by the seven source attributes; weakly annotated ones by the
  five merged attributes.

All files are UTF-8 JSON-lines, one record per line. Writers are atomic
(temp file + rename) so interrupted runs never leave truncated output.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Iterable

from .attributes import is_known_attribute
from .errors import DataError


@dataclass
class RawRecord:
    image_id: str
    comments: list[str]
    image_path: str | None = None
    global_score: float | None = None


@dataclass
class AttributedRecord:
    image_id: str
    captions: dict[str, list[str]]
    scores: dict[str, float] = field(default_factory=dict)
    global_score: float | None = None
    image_path: str | None = None

    def attributes(self) -> list[str]:
        return [a for a, caps in self.captions.items() if caps]


def _check_score(value, what: str, line_no: int | None):
    score = float(value)
    if not 0.0 <= score <= 10.0:
        where = f" (line {line_no})" if line_no else ""
        raise DataError(f"{what} {score} outside [0, 10]{where}")
    return score


def _parse_raw(obj: dict, line_no: int) -> RawRecord:
    try:
        image_id = str(obj["image_id"])
        comments = [str(c) for c in obj.get("comments", [])]
    except (KeyError, TypeError) as exc:
        raise DataError(f"line {line_no}: bad raw record: {exc}") from exc
    score = obj.get("global_score")
    return RawRecord(
        image_id=image_id,
        comments=comments,
        image_path=obj.get("image_path"),
        global_score=_check_score(score, "global_score", line_no) if score is not None else None,
    )


def _parse_attributed(obj: dict, line_no: int) -> AttributedRecord:
    try:
        image_id = str(obj["image_id"])
        captions_raw = obj["captions"]
    except (KeyError, TypeError) as exc:
        raise DataError(f"line {line_no}: bad attributed record: {exc}") from exc
    captions: dict[str, list[str]] = {}
    for attr, caps in captions_raw.items():
        if not is_known_attribute(attr):
            raise DataError(f"line {line_no}: unknown attribute {attr!r}")
        captions[attr] = [str(c) for c in caps]
    if not any(captions.values()):
        raise DataError(f"line {line_no}: record {image_id!r} has no captions")
    scores = {}
    for attr, value in (obj.get("scores") or {}).items():
        if not is_known_attribute(attr):
            raise DataError(f"line {line_no}: unknown attribute {attr!r} in scores")
        scores[attr] = _check_score(value, f"score for {attr}", line_no)
    gscore = obj.get("global_score")
    return AttributedRecord(
        image_id=image_id,
        captions=captions,
        scores=scores,
        global_score=_check_score(gscore, "global_score", line_no) if gscore is not None else None,
        image_path=obj.get("image_path"),
    )


def _read_jsonl(path, parse):
    records = []
    seen: set[str] = set()
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open corpus {path}: {exc}") from exc
    with handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {line_no}: invalid JSON: {exc}") from exc
            record = parse(obj, line_no)
            if record.image_id in seen:
                raise DataError(f"{path}: line {line_no}: duplicate image_id {record.image_id!r}")
            seen.add(record.image_id)
            records.append(record)
    return records


def read_raw_records(path) -> list[RawRecord]:
    return _read_jsonl(path, _parse_raw)


def read_attributed_records(path) -> list[AttributedRecord]:
    return _read_jsonl(path, _parse_attributed)


def atomic_write_text(path, text: str) -> None:
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _record_to_obj(record: AttributedRecord) -> dict:
    obj: dict = {"image_id": record.image_id, "captions": record.captions}
    if record.scores:
        obj["scores"] = record.scores
    if record.global_score is not None:
        obj["global_score"] = record.global_score
    if record.image_path is not None:
        obj["image_path"] = record.image_path
    return obj


def write_attributed_records(path, records: Iterable[AttributedRecord]) -> None:
    lines = [json.dumps(_record_to_obj(r), ensure_ascii=False) for r in records]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def write_jsonl(path, objects: Iterable[dict]) -> None:
    lines = [json.dumps(o, ensure_ascii=False) for o in objects]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
