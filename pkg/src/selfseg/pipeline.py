"""End-to-end corpus workflows: MAP and sampled segmentation with caching.

Segmentation depends only on the word, so every distinct word is scored
exactly once per corpus and the result is reused for all its occurrences.
Output uses the ``@@ `` continuation-marker convention: non-final pieces are
suffixed with ``@@`` so ``sed 's/@@ //g'`` restores the original text.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataError,
    MarkerCollisionError,
    UnknownCharactersError,
    WordTooLongError,
)
from .lattice import Segmentation, sample_decode, viterbi_decode
from .masking import no_mask
from .scorer import ScorerParams, params_digest, score_segments

MARKER = "@@"


@dataclass(frozen=True)
class SamplerConfig:
    n: int = 10
    temperature: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


class DecodeCache:
    """Write-once map from distinct word to its decoded segmentation(s)."""

    def __init__(self):
        self._entries: dict[str, object] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, word: str) -> bool:
        return word in self._entries

    def get(self, word: str):
        return self._entries.get(word)

    def insert(self, word: str, value) -> None:
        if word in self._entries:
            raise ValueError(f"cache entry for {word!r} already exists")
        self._entries[word] = value

    def items(self):
        return self._entries.items()


@dataclass
class SegmentStats:
    lines: int = 0
    tokens: int = 0
    distinct_words: int = 0
    scorer_calls: int = 0
    fallback_words: int = 0
    subword_tokens: int = 0
    wall_time: float = 0.0

    def subwords_per_line(self) -> float:
        return self.subword_tokens / self.lines if self.lines else 0.0


class Segmenter:
    """A loaded model plus its decode cache; reusable across corpora/requests."""

    def __init__(self, params: ScorerParams, sampler: SamplerConfig | None = None):
        self.params = params
        self.vocab = params.vocab
        self.sampler = sampler
        self.cache = DecodeCache()
        self.scorer_calls = 0
        self.fallback_words = 0

    def _map_decode(self, word: str) -> Segmentation:
        scores = score_segments(self.params, no_mask(word), word)
        self.scorer_calls += 1
        seg, _ = viterbi_decode(word, scores)
        return seg

    def _sampled_decode(self, word: str) -> list[Segmentation]:
        cfg = self.sampler
        scores = score_segments(self.params, no_mask(word), word)
        self.scorer_calls += 1
        rng = np.random.default_rng([cfg.seed, _digest_int(word)])
        return [sample_decode(word, scores, cfg.temperature, rng) for _ in range(cfg.n)]

    def _decode(self, word: str):
        try:
            if self.sampler is None:
                return self._map_decode(word)
            return self._sampled_decode(word)
        except (UnknownCharactersError, WordTooLongError):
            # character fallback; unknown characters map to themselves
            self.fallback_words += 1
            fallback = Segmentation(tuple(word))
            return fallback if self.sampler is None else [fallback] * self.sampler.n

    def lookup(self, word: str):
        """Cached segmentation (MAP mode) or list of samples (sampler mode)."""
        hit = self.cache.get(word)
        if hit is None:
            hit = self._decode(word)
            self.cache.insert(word, hit)
        return hit

    def segment_word(self, word: str) -> Segmentation:
        if self.sampler is not None:
            raise ValueError("segment_word is only valid in MAP mode")
        return self.lookup(word)

    def sample_word(self, word: str) -> list[Segmentation]:
        if self.sampler is None:
            raise ValueError("sample_word requires a sampler configuration")
        return self.lookup(word)


def render_segments(seg: Segmentation) -> str:
    return f"{MARKER} ".join(seg.segments)


def parse_marked_tokens(tokens: list[str]) -> list[Segmentation]:
    """Inverse of rendering: merge ``@@``-continued pieces back into words."""
    words: list[Segmentation] = []
    pieces: list[str] = []
    for tok in tokens:
        if tok.endswith(MARKER) and len(tok) > len(MARKER):
            pieces.append(tok[: -len(MARKER)])
        else:
            pieces.append(tok)
            words.append(Segmentation(tuple(pieces)))
            pieces = []
    if pieces:
        raise DataError("line ends with a dangling continuation marker")
    return words


def _check_token(token: str, lineno: int) -> None:
    if MARKER in token:
        raise MarkerCollisionError(
            f"line {lineno}: token {token!r} already contains {MARKER!r}; "
            "segment output would not round-trip"
        )


def _digest_int(*parts) -> int:
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def segment_corpus(
    corpus_path,
    params: ScorerParams,
    out_path,
    cache_path=None,
) -> SegmentStats:
    """Replace every token with its MAP segmentation, one scorer call per distinct word."""
    segmenter = Segmenter(params)
    mode_key = "map"
    _load_sidecar(segmenter, cache_path, params, mode_key)
    stats = _run(segmenter, corpus_path, out_path, choose=None)
    _write_sidecar(segmenter, cache_path, params, mode_key)
    return stats


def segment_corpus_regularized(
    corpus_path,
    params: ScorerParams,
    cfg: SamplerConfig,
    epoch: int,
    out_path,
    cache_path=None,
) -> SegmentStats:
    """Sampled segmentation: each distinct word gets a list of n draws, and each
    token occurrence picks one of them keyed on (seed, epoch, line, token index).

    The per-word sample lists do not depend on the epoch, so a persisted cache
    is reusable across epochs; only the per-occurrence choice varies.
    """
    segmenter = Segmenter(params, sampler=cfg)
    mode_key = f"reg n={cfg.n} t={cfg.temperature!r} seed={cfg.seed}"

    def choose(samples: list[Segmentation], lineno: int, tok_idx: int) -> Segmentation:
        pick = _digest_int(cfg.seed, epoch, lineno, tok_idx) % len(samples)
        return samples[pick]

    _load_sidecar(segmenter, cache_path, params, mode_key)
    stats = _run(segmenter, corpus_path, out_path, choose=choose)
    _write_sidecar(segmenter, cache_path, params, mode_key)
    return stats


def _run(segmenter: Segmenter, corpus_path, out_path, choose) -> SegmentStats:
    stats = SegmentStats()
    start = time.perf_counter()
    with open(corpus_path, "r", encoding="utf-8") as src, open(
        out_path, "w", encoding="utf-8", newline="\n"
    ) as dst:
        for lineno, line in enumerate(src, start=1):
            tokens = line.split()
            stats.lines += 1
            rendered = []
            for tok_idx, token in enumerate(tokens):
                _check_token(token, lineno)
                stats.tokens += 1
                value = segmenter.lookup(token)
                seg = value if choose is None else choose(value, lineno, tok_idx)
                stats.subword_tokens += len(seg)
                rendered.append(render_segments(seg))
            dst.write(" ".join(rendered) + "\n")
    stats.distinct_words = len(segmenter.cache)
    stats.scorer_calls = segmenter.scorer_calls
    stats.fallback_words = segmenter.fallback_words
    stats.wall_time = time.perf_counter() - start
    return stats


@dataclass
class CorpusStats:
    lines: int = 0
    word_tokens: int = 0
    subword_tokens: int = 0
    distinct_words: set = field(default_factory=set)

    def subwords_per_line(self) -> float:
        return self.subword_tokens / self.lines if self.lines else 0.0


def corpus_stats(segmented_path) -> CorpusStats:
    """Summary of an already-segmented corpus file."""
    stats = CorpusStats()
    with open(segmented_path, "r", encoding="utf-8") as fh:
        for line in fh:
            stats.lines += 1
            tokens = line.split()
            stats.subword_tokens += len(tokens)
            for seg in parse_marked_tokens(tokens):
                stats.word_tokens += 1
                stats.distinct_words.add(seg.word)
    return stats


_SIDECAR_HEADER = "#selfseg-cache v1"


def _sidecar_key(params: ScorerParams, mode_key: str) -> str:
    return f"#key params={params_digest(params)} vocab={params.vocab_hash} mode={mode_key}"


def _write_sidecar(segmenter: Segmenter, cache_path, params: ScorerParams, mode_key: str) -> None:
    if cache_path is None:
        return
    with open(cache_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_SIDECAR_HEADER + "\n")
        fh.write(_sidecar_key(params, mode_key) + "\n")
        for word, value in sorted(segmenter.cache.items()):
            segs = [value] if isinstance(value, Segmentation) else value
            cols = "\t".join(" ".join(seg.segments) for seg in segs)
            fh.write(f"{word}\t{cols}\n")


def _load_sidecar(segmenter: Segmenter, cache_path, params: ScorerParams, mode_key: str) -> None:
    """Warm the cache from a sidecar file; silently ignored when the key differs."""
    if cache_path is None:
        return
    try:
        with open(cache_path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError:
        return
    if len(lines) < 2 or lines[0] != _SIDECAR_HEADER:
        return
    if lines[1] != _sidecar_key(params, mode_key):
        return
    for lineno, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) < 2:
            raise DataError(f"{cache_path}: malformed cache line {lineno}")
        word = fields[0]
        segs = [Segmentation(tuple(col.split(" "))) for col in fields[1:]]
        for seg in segs:
            if seg.word != word:
                raise DataError(f"{cache_path}: cache line {lineno} does not spell {word!r}")
        value = segs[0] if segmenter.sampler is None else segs
        if segmenter.sampler is not None and len(segs) != segmenter.sampler.n:
            raise DataError(f"{cache_path}: cache line {lineno} has wrong sample count")
        segmenter.cache.insert(word, value)
