"""Token vocabulary with reserved ids for padding and sequence framing."""

from __future__ import annotations

from collections import Counter
from typing import Iterable

from .errors import ContractError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")


class Vocab:
    """Bijective token <-> id map; ids 0..3 are PAD/BOS/EOS/UNK."""

    def __init__(self, tokens: list[str]):
        for reserved in RESERVED:
            if reserved in tokens:
                raise ContractError(f"reserved token {reserved} cannot be a vocabulary word")
        if len(set(tokens)) != len(tokens):
            raise ContractError("vocabulary words must be unique")
        self.words = list(RESERVED) + list(tokens)
        self.ids = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    @classmethod
    def build(cls, captions: Iterable[list[str]], min_freq: int = 2) -> "Vocab":
        """Vocabulary from tokenized captions; tokens rarer than min_freq become UNK."""
        counts = Counter()
        for tokens in captions:
            counts.update(tokens)
        kept = sorted(w for w, c in counts.items() if c >= min_freq)
        return cls(kept)

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.ids.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.words[i] for i in ids if i >= len(RESERVED)]

    def frame(self, tokens: list[str]) -> list[int]:
        """Encode and wrap in BOS/EOS."""
        return [BOS] + self.encode(tokens) + [EOS]

    def save(self, path) -> None:
        # token per line; line number (0-based) + reserved count = id
        from .corpus import atomic_write_text
        atomic_write_text(path, "\n".join(self.words[len(RESERVED):]) + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as handle:
            tokens = [line.rstrip("\n") for line in handle if line.strip()]
        return cls(tokens)
