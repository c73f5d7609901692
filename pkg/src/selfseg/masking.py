"""Masked encoder inputs for self-supervised training.

Four strategies: a consecutive (or shuffled) character span, a consecutive
span of sub-word pieces from an initial segmentation, per-piece Bernoulli
masking, and no masking at all. Masking only ever affects the encoder side;
the decoder always conditions on the clean character prefix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnknownCharactersError
from .lattice import Segmentation
from .vocab import MASK_TOKEN, SubwordVocab

STRATEGIES = ("charmass", "subwordmass", "subwordmask", "none")


@dataclass(frozen=True)
class MaskedWord:
    original: str
    masked_chars: tuple[str, ...]
    mask_positions: frozenset[int]

    def __post_init__(self):
        assert len(self.masked_chars) == len(self.original)

    @classmethod
    def from_positions(cls, word: str, positions: set[int]) -> "MaskedWord":
        slots = tuple(MASK_TOKEN if k in positions else c for k, c in enumerate(word))
        return cls(original=word, masked_chars=slots, mask_positions=frozenset(positions))


@dataclass(frozen=True)
class MaskConfig:
    strategy: str = "charmass"
    ratio: float = 0.5
    consecutive: bool = True
    subword_mask_prob: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown masking strategy {self.strategy!r}")
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must be in [0,1], got {self.ratio}")
        if not 0.0 <= self.subword_mask_prob <= 1.0:
            raise ValueError(f"subword_mask_prob must be in [0,1], got {self.subword_mask_prob}")


def span_starts(length: int, span: int) -> list[int]:
    """Legal 1-based start positions for a span of the given length.

    Starts are drawn from the first half of the positions, intersected with
    the starts that let the span fit. If the intersection is empty the start
    clamps to 1 so the mask count stays exact.
    """
    first_half = range(1, math.ceil(length / 2) + 1)
    feasible = range(1, length - span + 2)
    legal = [s for s in first_half if s in feasible]
    return legal or [1]


def mask_char_mass(word: str, cfg: MaskConfig, rng: np.random.Generator) -> MaskedWord:
    """Mask exactly floor(ratio * len(word)) characters of the word."""
    T = len(word)
    m = int(cfg.ratio * T)
    if m == 0:
        return no_mask(word)
    if cfg.consecutive:
        starts = span_starts(T, m)
        start = starts[int(rng.integers(len(starts)))]
        positions = set(range(start - 1, start - 1 + m))
    else:
        flags = np.array([1] * m + [0] * (T - m))
        rng.shuffle(flags)
        positions = {k for k, f in enumerate(flags) if f}
    return MaskedWord.from_positions(word, positions)


def mask_subword_mass(seg: Segmentation, rng: np.random.Generator) -> MaskedWord:
    """Mask floor(tau/2) consecutive pieces of an initial segmentation."""
    tau = len(seg)
    word = seg.word
    k = tau // 2
    if k == 0:
        return no_mask(word)
    starts = span_starts(tau, k)
    first = starts[int(rng.integers(len(starts)))]
    return MaskedWord.from_positions(word, _piece_span(seg, first, k))


def mask_subword_mask(seg: Segmentation, cfg: MaskConfig, rng: np.random.Generator) -> MaskedWord:
    """Mask each piece independently with probability cfg.subword_mask_prob."""
    word = seg.word
    positions: set[int] = set()
    for idx in range(1, len(seg) + 1):
        if rng.random() < cfg.subword_mask_prob:
            positions |= _piece_span(seg, idx, 1)
    return MaskedWord.from_positions(word, positions)


def no_mask(word: str) -> MaskedWord:
    return MaskedWord(original=word, masked_chars=tuple(word), mask_positions=frozenset())


def initial_segmentation(vocab: SubwordVocab, word: str) -> Segmentation:
    """Deterministic greedy longest-match segmentation over the vocabulary.

    Used to seed the sub-word-level masking strategies; single characters
    guarantee it always succeeds for words over known characters.
    """
    unknown = vocab.unknown_chars(word)
    if unknown:
        raise UnknownCharactersError(word, unknown)
    pieces: list[str] = []
    pos = 0
    while pos < len(word):
        for length in range(min(vocab.max_subword_len, len(word) - pos), 0, -1):
            piece = word[pos : pos + length]
            if vocab.is_segment(piece):
                pieces.append(piece)
                pos += length
                break
    return Segmentation(tuple(pieces))


def apply_mask(
    word: str,
    cfg: MaskConfig,
    rng: np.random.Generator,
    vocab: SubwordVocab | None = None,
) -> MaskedWord:
    """Dispatch to the configured strategy; sub-word strategies need a vocab."""
    if cfg.strategy == "none":
        return no_mask(word)
    if cfg.strategy == "charmass":
        return mask_char_mass(word, cfg, rng)
    if vocab is None:
        raise ValueError(f"strategy {cfg.strategy!r} requires a vocabulary")
    seg = initial_segmentation(vocab, word)
    if cfg.strategy == "subwordmass":
        return mask_subword_mass(seg, rng)
    return mask_subword_mask(seg, cfg, rng)


def _piece_span(seg: Segmentation, first: int, count: int) -> set[int]:
    """0-based character positions covered by pieces first..first+count-1 (1-based)."""
    ends = seg.boundaries
    start_char = ends[first - 2] if first >= 2 else 0
    end_char = ends[min(first + count - 1, len(ends)) - 1]
    return set(range(start_char, end_char))
