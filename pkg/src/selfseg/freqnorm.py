"""Word-frequency extraction and normalization.

Training time scales with the materialized word list, so raw counts are
squashed before the list is built: floor division by a threshold, integer
square root, floor log2, or the constant one. Words whose normalized count
reaches zero are dropped. All arithmetic is exact integer arithmetic.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .vocab import WordFreqTable

NORM_KINDS = ("threshold", "sqrt", "log", "one")


@dataclass(frozen=True)
class NormStrategy:
    kind: str
    d: int = 10

    def __post_init__(self):
        if self.kind not in NORM_KINDS:
            raise ValueError(f"unknown normalization strategy {self.kind!r}")
        if self.kind == "threshold" and self.d <= 0:
            raise ValueError(f"threshold divisor must be positive, got {self.d}")

    @classmethod
    def threshold(cls, d: int = 10) -> "NormStrategy":
        return cls("threshold", d)

    @classmethod
    def sqrt(cls) -> "NormStrategy":
        return cls("sqrt")

    @classmethod
    def log(cls) -> "NormStrategy":
        return cls("log")

    @classmethod
    def one(cls) -> "NormStrategy":
        return cls("one")

    def apply(self, q: int) -> int:
        if q <= 0:
            return 0
        if self.kind == "threshold":
            return q // self.d
        if self.kind == "sqrt":
            return math.isqrt(q)
        if self.kind == "log":
            # floor(log2 q) without float error
            return q.bit_length() - 1
        return 1


def count_words(corpus_path) -> WordFreqTable:
    """Exact token counts of a whitespace-tokenized, one-sentence-per-line corpus."""
    counts: Counter[str] = Counter()
    with open(corpus_path, "r", encoding="utf-8") as fh:
        for line in fh:
            counts.update(line.split())
    return WordFreqTable(list(counts.items()))


def normalize(table: WordFreqTable, strategy: NormStrategy) -> WordFreqTable:
    """Apply the strategy to every count and drop words that reach zero."""
    rows = []
    for word, freq in table:
        nq = strategy.apply(freq)
        if nq > 0:
            rows.append((word, nq))
    return WordFreqTable(rows)


def materialize(table: WordFreqTable, rng: np.random.Generator) -> list[str]:
    """Repeat every word by its count and shuffle into a flat training list."""
    words: list[str] = []
    for word, freq in table:
        words.extend([word] * freq)
    rng.shuffle(words)
    return words


def save_freq_table(table: WordFreqTable, path) -> None:
    """Write `<word><TAB><count>` rows, highest count first."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for word, freq in table:
            fh.write(f"{word}\t{freq}\n")


def load_freq_table(path) -> WordFreqTable:
    rows: list[tuple[str, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not fields[0]:
                raise DataError(f"{path}: malformed frequency row at line {lineno}")
            try:
                rows.append((fields[0], int(fields[1])))
            except ValueError:
                raise DataError(f"{path}: non-integer count at line {lineno}") from None
    return WordFreqTable(rows)
