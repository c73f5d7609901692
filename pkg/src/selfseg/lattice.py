"""Exact dynamic programming over all segmentations of a single word.

Positions are 1-based and inclusive: the pair (j, i) names the piece
``word[j-1:i]``. Prefix scores are accumulated left to right; marginal mode
sums path weights with a streaming logsumexp, decode mode maximizes, and
sampling draws a start index at every position from a temperature softmax
before retracing. Everything here is pure: scores come in as a finished
table and no neural code is touched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoSegmentationError, OracleLimitError, WordTooLongError
from .vocab import SubwordVocab

MAX_WORD_LEN = 512
_ENUM_LIMIT = 16
_DIST_LIMIT = 12


@dataclass(frozen=True)
class Segmentation:
    """An ordered tuple of sub-word pieces whose concatenation is the word."""

    segments: tuple[str, ...]

    def __post_init__(self):
        if not self.segments or any(not s for s in self.segments):
            raise ValueError("segmentation must consist of non-empty pieces")

    @property
    def word(self) -> str:
        return "".join(self.segments)

    @property
    def boundaries(self) -> tuple[int, ...]:
        """Cumulative end positions of each piece (the last equals len(word))."""
        out, total = [], 0
        for seg in self.segments:
            total += len(seg)
            out.append(total)
        return tuple(out)

    def __len__(self) -> int:
        return len(self.segments)

    def __str__(self) -> str:
        return "+".join(self.segments)


@dataclass
class SegmentScores:
    """Log-probability table for every valid (start, end) piece of one word.

    Values are log p(piece | encoder input, characters before start) taken
    from a full-vocabulary softmax; keys are 1-based inclusive positions.
    """

    word: str
    logp: dict[tuple[int, int], float] = field(default_factory=dict)

    def by_end(self) -> list[list[tuple[int, float]]]:
        """Candidate (start, score) lists indexed by end position 1..T."""
        table: list[list[tuple[int, float]]] = [[] for _ in range(len(self.word) + 1)]
        for (j, i), score in self.logp.items():
            table[i].append((j, score))
        for row in table:
            row.sort()
        return table


def _check_word_len(word: str) -> None:
    if len(word) > MAX_WORD_LEN:
        raise WordTooLongError(
            f"word of length {len(word)} exceeds the {MAX_WORD_LEN}-character limit"
        )


def enumerate_segmentations(word: str, vocab: SubwordVocab) -> list[Segmentation]:
    """Brute-force list of all valid segmentations, in boundary-bitmask order.

    Bit k of the mask means "cut after character k+1". Guarded to short words;
    this is the test oracle for the polynomial-time recursions, not a decoder.
    """
    T = len(word)
    if T == 0:
        return []
    if T > _ENUM_LIMIT:
        raise OracleLimitError(f"oracle limit: word length {T} > {_ENUM_LIMIT}")
    out: list[Segmentation] = []
    for mask in range(1 << (T - 1)):
        cuts = [0] + [k + 1 for k in range(T - 1) if mask >> k & 1] + [T]
        pieces = [word[a:b] for a, b in zip(cuts, cuts[1:])]
        if all(vocab.is_segment(p) for p in pieces):
            out.append(Segmentation(tuple(pieces)))
    return out


def log_marginal(word: str, scores: SegmentScores) -> float:
    """Log of the summed weight of every segmentation path.

    Returns -inf when no path covers the word (callers treat that as an
    error condition; it cannot happen for words over known characters).
    """
    _check_word_len(word)
    by_end = scores.by_end()
    prefix = [0.0] + [-math.inf] * len(word)
    for i in range(1, len(word) + 1):
        best = -math.inf
        acc = 0.0
        for j, score in by_end[i]:
            cand = prefix[j - 1] + score
            if cand == -math.inf:
                continue
            # streaming logsumexp keyed on the running maximum
            if cand > best:
                acc = acc * math.exp(best - cand) + 1.0
                best = cand
            else:
                acc += math.exp(cand - best)
        prefix[i] = best + math.log(acc) if acc > 0.0 else -math.inf
    return prefix[len(word)]


def viterbi_decode(word: str, scores: SegmentScores) -> tuple[Segmentation, float]:
    """Highest-scoring segmentation and its log-probability.

    Ties at any position resolve toward the smaller start index, i.e. the
    longer final piece.
    """
    _check_word_len(word)
    by_end = scores.by_end()
    T = len(word)
    prefix = [0.0] + [-math.inf] * T
    back: list[int | None] = [None] * (T + 1)
    for i in range(1, T + 1):
        for j, score in by_end[i]:
            cand = prefix[j - 1] + score
            if cand > prefix[i]:
                prefix[i] = cand
                back[i] = j
    if back[T] is None:
        raise NoSegmentationError(f"no valid segmentation for word {word!r}")
    return _retrace(word, back), prefix[T]


def sample_decode(
    word: str, scores: SegmentScores, temperature: float, rng: np.random.Generator
) -> Segmentation:
    """Draw one segmentation by locally sampling a start index per position.

    At each end position the candidate scores are pushed through a softmax
    with the given temperature and a start is drawn; the prefix score becomes
    the drawn candidate's score. The final segmentation is read off by
    retracing the drawn indices from the end of the word. Sampling happens at
    every position, including ones the retrace never visits.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    _check_word_len(word)
    by_end = scores.by_end()
    T = len(word)
    prefix = [0.0] + [-math.inf] * T
    chosen: list[int | None] = [None] * (T + 1)
    for i in range(1, T + 1):
        if not by_end[i]:
            continue
        cand = np.array([prefix[j - 1] + s for j, s in by_end[i]], dtype=float)
        if not np.isfinite(cand).any():
            continue
        pick = int(rng.choice(len(cand), p=_softmax(cand / temperature)))
        chosen[i] = by_end[i][pick][0]
        prefix[i] = cand[pick]
    if chosen[T] is None:
        raise NoSegmentationError(f"no valid segmentation for word {word!r}")
    return _retrace(word, chosen)


def sample_distribution(
    word: str, scores: SegmentScores, temperature: float
) -> dict[Segmentation, float]:
    """Exact distribution over segmentations induced by sample_decode.

    Enumerates every full vector of per-position draws (off-path draws shift
    the prefix scores that later softmaxes see, so they cannot be skipped),
    retraces each vector and accumulates its probability. This is the induced
    sampler distribution, not the posterior over segmentations. The returned
    probabilities sum to 1 because every draw vector retraces successfully.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    T = len(word)
    if T > _DIST_LIMIT:
        raise OracleLimitError(f"oracle limit: word length {T} > {_DIST_LIMIT}")
    by_end = scores.by_end()
    for i in range(1, T + 1):
        if not by_end[i]:
            raise NoSegmentationError(f"no valid segmentation for word {word!r}")
    out: dict[Segmentation, float] = {}
    prefix = [0.0] + [-math.inf] * T
    chosen: list[int | None] = [None] * (T + 1)
    leaves = 0

    def descend(i: int, prob: float) -> None:
        nonlocal leaves
        if i > T:
            leaves += 1
            if leaves > 2_000_000:
                raise OracleLimitError("oracle limit: too many draw vectors to enumerate")
            seg = _retrace(word, chosen)
            out[seg] = out.get(seg, 0.0) + prob
            return
        cand = np.array([prefix[j - 1] + s for j, s in by_end[i]], dtype=float)
        weights = _softmax(cand / temperature)
        for (j, _), w, c in zip(by_end[i], weights, cand):
            if w == 0.0:
                continue
            chosen[i] = j
            prefix[i] = float(c)
            descend(i + 1, prob * float(w))
        chosen[i] = None
        prefix[i] = -math.inf

    descend(1, 1.0)
    total = sum(out.values())
    assert abs(total - 1.0) <= 1e-9, f"induced distribution sums to {total}"
    return out


def _retrace(word: str, chosen: list[int | None]) -> Segmentation:
    pieces: list[str] = []
    i = len(word)
    while i > 0:
        j = chosen[i]
        if j is None:
            raise NoSegmentationError(f"retrace hit a dead end in word {word!r} at {i}")
        pieces.append(word[j - 1 : i])
        i = j - 1
    pieces.reverse()
    return Segmentation(tuple(pieces))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    w = np.exp(z)
    return w / w.sum()
