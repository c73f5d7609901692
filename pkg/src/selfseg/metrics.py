"""Disagreement metrics between two segmenters' outputs.

The word-level rate compares every occurrence from one segmenter against
every occurrence from the other (the full cross product, normalized by the
squared occurrence count); the corpus-level rate is the frequency-weighted
mean over distinct words. Comparison is exact boundary equality, independent
of the marker rendering.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import DataError
from .lattice import Segmentation
from .vocab import WordFreqTable


def dif_word(s1: Sequence[Segmentation], s2: Sequence[Segmentation], nword: int) -> float:
    """Cross-product disagreement rate between two occurrence lists of one word."""
    if nword == 0:
        raise ValueError("nword must be positive")
    if len(s1) != nword or len(s2) != nword:
        raise ValueError(
            f"expected {nword} occurrences per segmenter, got {len(s1)} and {len(s2)}"
        )
    counts1 = Counter(s1)
    counts2 = Counter(s2)
    agreements = sum(n1 * counts2.get(seg, 0) for seg, n1 in counts1.items())
    return (nword * nword - agreements) / (nword * nword)


def dif_corpus(
    per_word_rates: Mapping[str, float], freqs: Mapping[str, int] | WordFreqTable
) -> float:
    """Frequency-weighted mean of per-word rates."""
    if isinstance(freqs, WordFreqTable):
        freqs = freqs.as_dict()
    total = 0.0
    weight = 0
    for word, rate in per_word_rates.items():
        n = freqs[word]
        total += rate * n
        weight += n
    if weight == 0:
        raise ValueError("total word frequency is zero")
    return total / weight


@dataclass
class WordDiff:
    word: str
    freq: int
    rate: float
    example_a: Segmentation
    example_b: Segmentation

    def band(self, split: int) -> str:
        if self.freq == 1:
            return "one-shot"
        if self.freq <= split:
            return "rare"
        return "frequent"


@dataclass
class DiffReport:
    corpus_rate: float
    high_rate: float | None
    low_rate: float | None
    freq_split: int
    total_words: int
    diffs: list[WordDiff]

    def to_markdown(self) -> str:
        out = io.StringIO()
        out.write("# Segmentation diff\n\n")
        out.write(f"- corpus difference rate: {self.corpus_rate:.6f}\n")
        if self.high_rate is not None:
            out.write(
                f"- frequent words (n > {self.freq_split}): {self.high_rate:.6f}\n"
            )
        if self.low_rate is not None:
            out.write(f"- rare words (n <= {self.freq_split}): {self.low_rate:.6f}\n")
        out.write(f"- distinct words compared: {self.total_words}\n")
        out.write(f"- words with differing segmentations: {len(self.diffs)}\n")
        for label in ("frequent", "rare", "one-shot"):
            rows = [d for d in self.diffs if d.band(self.freq_split) == label]
            if not rows:
                continue
            out.write(f"\n## {label} words\n\n")
            out.write("| word | freq | rate | A | B |\n|---|---|---|---|---|\n")
            for d in rows:
                out.write(
                    f"| {d.word} | {d.freq} | {d.rate:.4f} "
                    f"| {d.example_a} | {d.example_b} |\n"
                )
        return out.getvalue()

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["word", "freq", "band", "rate", "segmentation_a", "segmentation_b"])
        for d in self.diffs:
            writer.writerow(
                [d.word, d.freq, d.band(self.freq_split), f"{d.rate:.6f}",
                 str(d.example_a), str(d.example_b)]
            )
        return out.getvalue()


def diff_report(
    seg_a: list[list[Segmentation]],
    seg_b: list[list[Segmentation]],
    freq_split: int = 5,
) -> DiffReport:
    """Compare two line-aligned segmented corpora word by word.

    Inputs are per-line lists of word segmentations; both sides must spell the
    same words in the same order. Words are grouped into frequent / rare /
    one-shot bands, and the corpus rate is additionally split at freq_split.
    """
    occurrences_a: dict[str, list[Segmentation]] = {}
    occurrences_b: dict[str, list[Segmentation]] = {}
    if len(seg_a) != len(seg_b):
        raise DataError(f"corpora differ in length: {len(seg_a)} vs {len(seg_b)} lines")
    for lineno, (line_a, line_b) in enumerate(zip(seg_a, seg_b), start=1):
        if len(line_a) != len(line_b):
            raise DataError(f"line {lineno}: word counts differ")
        for seg1, seg2 in zip(line_a, line_b):
            if seg1.word != seg2.word:
                raise DataError(
                    f"line {lineno}: words differ ({seg1.word!r} vs {seg2.word!r})"
                )
            occurrences_a.setdefault(seg1.word, []).append(seg1)
            occurrences_b.setdefault(seg2.word, []).append(seg2)

    rates: dict[str, float] = {}
    freqs: dict[str, int] = {}
    diffs: list[WordDiff] = []
    for word, occ_a in occurrences_a.items():
        occ_b = occurrences_b[word]
        n = len(occ_a)
        rate = dif_word(occ_a, occ_b, n)
        rates[word] = rate
        freqs[word] = n
        if rate > 0.0:
            diffs.append(
                WordDiff(
                    word=word,
                    freq=n,
                    rate=rate,
                    example_a=Counter(occ_a).most_common(1)[0][0],
                    example_b=Counter(occ_b).most_common(1)[0][0],
                )
            )
    diffs.sort(key=lambda d: (-d.freq, d.word))

    corpus_rate = dif_corpus(rates, freqs)
    high = {w: r for w, r in rates.items() if freqs[w] > freq_split}
    low = {w: r for w, r in rates.items() if freqs[w] <= freq_split}
    return DiffReport(
        corpus_rate=corpus_rate,
        high_rate=dif_corpus(high, freqs) if high else None,
        low_rate=dif_corpus(low, freqs) if low else None,
        freq_split=freq_split,
        total_words=len(rates),
        diffs=diffs,
    )
