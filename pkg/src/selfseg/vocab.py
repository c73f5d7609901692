"""Sub-word vocabulary: construction, persistence and lattice membership.

The vocabulary is the closed set of units a word may be segmented into. It
always contains every single character seen at build time, so any word over
known characters has at least the all-characters segmentation. Four special
symbols (pad, bos, eos, mask) occupy the lowest ids; they are never valid
lattice segments.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass

from .errors import DataError, UnknownCharactersError, VocabFormatError

PAD_TOKEN = "<pad>"
BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"
MASK_TOKEN = "<mask>"
SPECIAL_TOKENS = (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, MASK_TOKEN)

_FILE_HEADER = "#selfseg-vocab v1"


@dataclass(frozen=True)
class SpecialIds:
    pad: int
    bos: int
    eos: int
    mask: int

    def as_set(self) -> frozenset[int]:
        return frozenset((self.pad, self.bos, self.eos, self.mask))


@dataclass
class WordFreqTable:
    """Word -> frequency rows, sorted by descending frequency then word."""

    rows: list[tuple[str, int]]

    def __post_init__(self):
        seen = set()
        for word, freq in self.rows:
            if not word:
                raise DataError("frequency table contains an empty word")
            if word in seen:
                raise DataError(f"duplicate word in frequency table: {word!r}")
            if freq < 0:
                raise DataError(f"negative frequency for word {word!r}")
            seen.add(word)
        self.rows = sorted(self.rows, key=lambda r: (-r[1], r[0]))

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def total(self) -> int:
        return sum(freq for _, freq in self.rows)

    def as_dict(self) -> dict[str, int]:
        return dict(self.rows)


class SubwordVocab:
    """Immutable ordered vocabulary with O(max_subword_len) segment lookup."""

    def __init__(self, entries: list[str]):
        if len(entries) != len(set(entries)):
            dupes = [e for e, n in Counter(entries).items() if n > 1]
            raise DataError(f"duplicate vocabulary entries: {dupes[:5]}")
        for tok in entries:
            if not tok:
                raise DataError("empty vocabulary entry")
            if any(ch in tok for ch in "\t\n\r"):
                raise DataError(f"vocabulary entry contains whitespace control char: {tok!r}")
        self.entries: tuple[str, ...] = tuple(entries)
        self._ids: dict[str, int] = {tok: i for i, tok in enumerate(self.entries)}
        missing = [t for t in SPECIAL_TOKENS if t not in self._ids]
        if missing:
            raise DataError(f"vocabulary is missing special symbols: {missing}")
        self.special = SpecialIds(
            pad=self._ids[PAD_TOKEN],
            bos=self._ids[BOS_TOKEN],
            eos=self._ids[EOS_TOKEN],
            mask=self._ids[MASK_TOKEN],
        )
        self._special_ids = self.special.as_set()
        ordinary = [t for t in self.entries if t not in SPECIAL_TOKENS]
        if not ordinary:
            raise DataError("vocabulary has no ordinary entries")
        # The cap only has to bound lattice segments, and specials never are.
        self.max_subword_len: int = max(len(t) for t in ordinary)
        self._chars = frozenset(t for t in ordinary if len(t) == 1)
        closure = {c for t in ordinary for c in t}
        uncovered = closure - self._chars
        if uncovered:
            raise DataError(
                f"character closure violated, missing single-char entries: {sorted(uncovered)[:5]}"
            )

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, SubwordVocab) and self.entries == other.entries

    def id_of(self, token: str) -> int:
        return self._ids[token]

    def segment_id(self, piece: str) -> int | None:
        """Id usable as a lattice segment, or None (specials excluded)."""
        idx = self._ids.get(piece)
        if idx is None or idx in self._special_ids:
            return None
        return idx

    def is_segment(self, piece: str) -> bool:
        return self.segment_id(piece) is not None

    def chars(self) -> frozenset[str]:
        return self._chars

    def unknown_chars(self, word: str) -> set[str]:
        return {c for c in word if c not in self._chars}

    def serialize(self) -> str:
        lines = [_FILE_HEADER]
        lines.extend(f"{tok}\t{i}" for i, tok in enumerate(self.entries))
        return "\n".join(lines) + "\n"

    @property
    def vocab_hash(self) -> str:
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()


def valid_segments(vocab: SubwordVocab, word: str, end: int) -> list[int]:
    """All 1-based starts j such that word[j..end] is a vocabulary segment.

    Positions are 1-based and inclusive, so the candidate piece for start j
    is ``word[j-1:end]``. Raises UnknownCharactersError if the word contains
    characters outside the vocabulary (the caller decides on fallback).
    """
    if not 1 <= end <= len(word):
        raise ValueError(f"end={end} out of range for word of length {len(word)}")
    unknown = vocab.unknown_chars(word)
    if unknown:
        raise UnknownCharactersError(word, unknown)
    lo = max(1, end - vocab.max_subword_len + 1)
    return [j for j in range(lo, end + 1) if vocab.is_segment(word[j - 1 : end])]


def build_bpe_vocab(table: WordFreqTable, target_size: int) -> SubwordVocab:
    """Learn a merge-based sub-word vocabulary of at most target_size entries.

    Starts from the special symbols plus every character in the table, then
    repeatedly merges the adjacent symbol pair with the highest corpus
    frequency. Ties are broken by lexicographic order of the merged string so
    construction is deterministic. Stops early if no pair occurs anymore.
    """
    if len(table) == 0:
        raise DataError("cannot build a vocabulary from an empty frequency table")
    chars = sorted({c for word, _ in table for c in word})
    floor = len(SPECIAL_TOKENS) + len(chars)
    if target_size < floor:
        raise DataError(
            f"target_size {target_size} below minimum {floor} "
            f"({len(SPECIAL_TOKENS)} specials + {len(chars)} characters)"
        )
    entries: list[str] = list(SPECIAL_TOKENS) + chars
    known = set(entries)

    words: list[tuple[list[str], int]] = [(list(word), freq) for word, freq in table]
    pair_counts: Counter[tuple[str, str]] = Counter()
    pair_words: dict[tuple[str, str], set[int]] = {}
    for wi, (syms, freq) in enumerate(words):
        for pair in zip(syms, syms[1:]):
            pair_counts[pair] += freq
            pair_words.setdefault(pair, set()).add(wi)

    while len(entries) < target_size and pair_counts:
        best = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0][0] + kv[0][1]))[0]
        merged = best[0] + best[1]
        for wi in sorted(pair_words.get(best, ())):
            syms, freq = words[wi]
            old_pairs = Counter(zip(syms, syms[1:]))
            new_syms: list[str] = []
            k = 0
            while k < len(syms):
                if k + 1 < len(syms) and syms[k] == best[0] and syms[k + 1] == best[1]:
                    new_syms.append(merged)
                    k += 2
                else:
                    new_syms.append(syms[k])
                    k += 1
            words[wi] = (new_syms, freq)
            for pair, n in (Counter(zip(new_syms, new_syms[1:])) - old_pairs).items():
                pair_counts[pair] += n * freq
                pair_words.setdefault(pair, set()).add(wi)
            for pair, n in (old_pairs - Counter(zip(new_syms, new_syms[1:]))).items():
                pair_counts[pair] -= n * freq
                if pair_counts[pair] <= 0:
                    del pair_counts[pair]
                    pair_words.pop(pair, None)
        # A merged string can coincide with an existing entry when two
        # different pairs concatenate to the same surface form; keep ids unique.
        if merged not in known:
            entries.append(merged)
            known.add(merged)
    return SubwordVocab(entries)


def save_vocab(vocab: SubwordVocab, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(vocab.serialize())


def load_vocab(path) -> SubwordVocab:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != _FILE_HEADER:
        raise VocabFormatError(f"expected header {_FILE_HEADER!r}", line=1)
    seen: dict[str, int] = {}
    pairs: list[tuple[str, int]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0]:
            raise VocabFormatError(f"malformed entry {line!r}", line=lineno)
        tok, raw_id = fields
        if tok in seen:
            raise VocabFormatError(
                f"duplicate subword {tok!r} (first seen at line {seen[tok]})", line=lineno
            )
        try:
            idx = int(raw_id)
        except ValueError:
            raise VocabFormatError(f"non-integer id {raw_id!r}", line=lineno) from None
        seen[tok] = lineno
        pairs.append((tok, idx))
    if not pairs:
        raise VocabFormatError("vocabulary file has no entries", line=1)
    ids = sorted(idx for _, idx in pairs)
    if ids != list(range(len(pairs))):
        raise VocabFormatError("ids are not contiguous from 0", line=1)
    pairs.sort(key=lambda p: p[1])
    try:
        return SubwordVocab([tok for tok, _ in pairs])
    except DataError as exc:
        raise VocabFormatError(str(exc), line=1) from exc
