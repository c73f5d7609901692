"""Exception hierarchy shared across the toolkit.

CLI exit codes map onto these classes: usage errors exit 1, DataError and
subclasses exit 2, ModelVocabMismatchError exits 3.
"""


class SelfSegError(Exception):
    """Base class for all toolkit errors."""


class DataError(SelfSegError):
    """Malformed or unusable input data (corpus, vocab file, frequency table)."""


class VocabFormatError(DataError):
    """Vocabulary file violates the on-disk format."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownCharactersError(DataError):
    """A word contains characters that are not in the vocabulary."""

    def __init__(self, word: str, chars: set[str]):
        self.word = word
        self.chars = frozenset(chars)
        listed = ", ".join(repr(c) for c in sorted(chars))
        super().__init__(f"word {word!r} contains characters not in vocabulary: {listed}")


class WordTooLongError(DataError):
    """Word exceeds the maximum decodable length."""


class MarkerCollisionError(DataError):
    """A corpus token already contains the '@@' continuation marker."""


class NoSegmentationError(DataError):
    """No valid segmentation exists for a word under the given scores."""


class OracleLimitError(SelfSegError):
    """Brute-force oracle invoked beyond its size guard."""


class ModelVocabMismatchError(SelfSegError):
    """Checkpoint was trained against a different vocabulary."""

    def __init__(self, expected: str, found: str):
        self.expected = expected
        self.found = found
        super().__init__(
            f"checkpoint vocabulary hash {found} does not match loaded vocabulary {expected}"
        )


class TrainingDivergedError(SelfSegError):
    """Loss became non-finite during training."""

    def __init__(self, word: str, value: float):
        self.word = word
        self.value = value
        super().__init__(f"non-finite loss ({value}) on word {word!r}")
