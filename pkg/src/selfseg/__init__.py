"""selfseg: self-supervised neural sub-word segmentation."""

from .errors import (
    DataError,
    MarkerCollisionError,
    ModelVocabMismatchError,
    OracleLimitError,
    SelfSegError,
    UnknownCharactersError,
    VocabFormatError,
    WordTooLongError,
)
from .freqnorm import NormStrategy, count_words, materialize, normalize
from .lattice import (
    Segmentation,
    SegmentScores,
    enumerate_segmentations,
    log_marginal,
    sample_decode,
    sample_distribution,
    viterbi_decode,
)
from .masking import MaskConfig, MaskedWord, apply_mask, no_mask
from .metrics import dif_corpus, dif_word, diff_report
from .pipeline import (
    SamplerConfig,
    Segmenter,
    corpus_stats,
    segment_corpus,
    segment_corpus_regularized,
)
from .scorer import (
    ScorerConfig,
    ScorerParams,
    Trainer,
    init_params,
    load_params,
    loss,
    make_batch,
    save_params,
    score_segments,
    train,
    train_step,
)
from .vocab import SubwordVocab, WordFreqTable, build_bpe_vocab, load_vocab, save_vocab, valid_segments

__version__ = "0.1.0"
