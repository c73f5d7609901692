import numpy as np
import pytest

from selfseg.vocab import SPECIAL_TOKENS, SubwordVocab


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ab_vocab():
    return SubwordVocab(list(SPECIAL_TOKENS) + ["a", "b", "ab"])


@pytest.fixture
def watching_vocab():
    extras = ["watch", "ing", "wat", "ching", "w", "a", "t", "c", "h", "i", "n", "g"]
    return SubwordVocab(list(SPECIAL_TOKENS) + sorted(set(extras), key=extras.index))


def make_vocab(*subwords: str) -> SubwordVocab:
    chars = sorted({c for s in subwords for c in s})
    multi = [s for s in subwords if len(s) > 1]
    return SubwordVocab(list(SPECIAL_TOKENS) + chars + multi)
