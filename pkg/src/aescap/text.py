"""Shared comment tokenizer.

One tokenizer serves keyword mining, comment labelling, caption training and
metric evaluation: lowercase, strip punctuation, split on whitespace, drop
stopwords, then normalize synonyms (colour -> color and the like). The
stopword list ships as a data file and both lists are overridable.
"""

from __future__ import annotations

import importlib.resources
from functools import lru_cache

DEFAULT_SYNONYMS = {
    "colour": "color",
    "colours": "color",
    "colors": "color",
}

_APOSTROPHES = str.maketrans("", "", "'’")


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    text = importlib.resources.files("aescap.data").joinpath("stopwords.txt").read_text("utf-8")
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


def tokenize(text: str,
             stopwords: frozenset[str] | set[str] | None = None,
             synonyms: dict[str, str] | None = None) -> list[str]:
    """Tokenize a raw comment; empty input yields an empty list."""
    if stopwords is None:
        stopwords = default_stopwords()
    if synonyms is None:
        synonyms = DEFAULT_SYNONYMS
    lowered = text.lower().translate(_APOSTROPHES)
    cleaned = "".join(ch if ch.isalnum() else " " for ch in lowered)
    tokens = []
    for raw in cleaned.split():
        word = synonyms.get(raw, raw)
        if word not in stopwords:
            tokens.append(word)
    return tokens
