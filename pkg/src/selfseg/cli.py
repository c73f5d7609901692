"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 model/vocab mismatch.
Thread count comes from --threads or the SELFSEG_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .errors import DataError, ModelVocabMismatchError, SelfSegError
from .freqnorm import (
    NORM_KINDS,
    NormStrategy,
    count_words,
    load_freq_table,
    materialize,
    normalize,
    save_freq_table,
)
from .masking import MaskConfig
from .metrics import diff_report
from .pipeline import (
    SamplerConfig,
    corpus_stats,
    parse_marked_tokens,
    segment_corpus,
    segment_corpus_regularized,
)
from .scorer import ScorerConfig, load_params, save_params, train
from .vocab import build_bpe_vocab, load_vocab, save_vocab


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _threads(args) -> int | None:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("SELFSEG_THREADS")
    return int(env) if env else None


def _set_threads(args) -> None:
    n = _threads(args)
    if n:
        import torch

        torch.set_num_threads(n)


def build_parser() -> _Parser:
    parser = _Parser(prog="selfseg", description="Neural sub-word segmentation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="learn a merge-based sub-word vocabulary")
    p.add_argument("--input", required=True, help="frequency table (word<TAB>count)")
    p.add_argument("--size", required=True, type=int, help="total entries incl. specials")
    p.add_argument("--out", required=True)

    p = sub.add_parser("normalize", help="count and normalize word frequencies")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", help="tokenized corpus, one sentence per line")
    src.add_argument("--freq", help="existing frequency table")
    p.add_argument("--strategy", choices=NORM_KINDS + ("none",), default="threshold")
    p.add_argument("--d", type=int, default=10, help="threshold divisor")
    p.add_argument("--out-freq", required=True)
    p.add_argument("--out-words", help="also materialize a shuffled word list")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train the segmenter on a word list")
    p.add_argument("--corpus", required=True, help="materialized words, one per line")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask", choices=("charmass", "subwordmass", "subwordmask", "none"),
                   default="charmass")
    p.add_argument("--mask-ratio", type=float, default=0.5)
    p.add_argument("--non-consecutive", action="store_true")
    p.add_argument("--subword-mask-prob", type=float, default=0.15)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--light", action="store_true", help="1-layer encoder and decoder")
    p.add_argument("--enc-layers", type=int)
    p.add_argument("--dec-layers", type=int)
    p.add_argument("--model-dim", type=int, default=256)
    p.add_argument("--ff-dim", type=int, default=1024)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--warmup-steps", type=int, default=4000)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--batch-tokens", type=int, default=4096)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--checkpoint-dir")
    p.add_argument("--threads", type=int)

    p = sub.add_parser("segment", help="MAP-segment a corpus")
    _segment_args(p)

    p = sub.add_parser("segment-reg", help="sampled segmentation for regularized training data")
    _segment_args(p)
    p.add_argument("--n", type=int, default=10, help="samples per distinct word")
    p.add_argument("--temperature", type=float, default=10.0)
    p.add_argument("--epoch", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("stats", help="report statistics of a segmented corpus")
    p.add_argument("--input", required=True)

    p = sub.add_parser("diff", help="compare two segmentations of the same corpus")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--orig", required=True)
    p.add_argument("--freq-split", type=int, default=5)
    p.add_argument("--out-md")
    p.add_argument("--out-csv")

    p = sub.add_parser("serve", help="run the segmentation HTTP service")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _segment_args(p) -> None:
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cache", help="sidecar TSV reused across runs with the same model")
    p.add_argument("--threads", type=int)


def _cmd_build_vocab(args) -> int:
    table = load_freq_table(args.input)
    vocab = build_bpe_vocab(table, args.size)
    save_vocab(vocab, args.out)
    print(f"wrote {len(vocab)} entries to {args.out} (hash {vocab.vocab_hash[:12]})")
    return 0


def _cmd_normalize(args) -> int:
    table = count_words(args.corpus) if args.corpus else load_freq_table(args.freq)
    before = table.total()
    if args.strategy != "none":
        table = normalize(table, NormStrategy(args.strategy, args.d))
    save_freq_table(table, args.out_freq)
    print(f"{len(table)} words, {table.total()} total count (raw total {before})")
    if args.out_words:
        words = materialize(table, np.random.default_rng(args.seed))
        with open(args.out_words, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(w + "\n" for w in words)
        print(f"materialized {len(words)} words to {args.out_words}")
    return 0


def _cmd_train(args) -> int:
    _set_threads(args)
    vocab = load_vocab(args.vocab)
    with open(args.corpus, "r", encoding="utf-8") as fh:
        words = [line.strip() for line in fh if line.strip()]
    enc_layers = args.enc_layers or (1 if args.light else 4)
    dec_layers = args.dec_layers or (1 if args.light else 4)
    cfg = ScorerConfig(
        enc_layers=enc_layers,
        dec_layers=dec_layers,
        model_dim=args.model_dim,
        ff_dim=args.ff_dim,
        heads=args.heads,
        dropout=args.dropout,
        warmup_steps=args.warmup_steps,
        peak_lr=args.lr,
        epochs=args.epochs,
        batch_tokens=args.batch_tokens,
        seed=args.seed,
        threads=_threads(args),
        checkpoint_dir=args.checkpoint_dir,
    )
    mask_cfg = MaskConfig(
        strategy=args.mask,
        ratio=args.mask_ratio,
        consecutive=not args.non_consecutive,
        subword_mask_prob=args.subword_mask_prob,
        seed=args.seed,
    )
    params = train(
        words, cfg, mask_cfg, vocab,
        on_epoch=lambda e, loss: print(f"epoch {e}: loss {loss:.4f}"),
    )
    save_params(params, args.out)
    print(f"saved model to {args.out}")
    return 0


def _cmd_segment(args) -> int:
    _set_threads(args)
    vocab = load_vocab(args.vocab)
    params = load_params(args.model, vocab)
    stats = segment_corpus(args.corpus, params, args.out, cache_path=args.cache)
    _print_run_stats(stats)
    return 0


def _cmd_segment_reg(args) -> int:
    _set_threads(args)
    vocab = load_vocab(args.vocab)
    params = load_params(args.model, vocab)
    cfg = SamplerConfig(n=args.n, temperature=args.temperature, seed=args.seed)
    stats = segment_corpus_regularized(
        args.corpus, params, cfg, args.epoch, args.out, cache_path=args.cache
    )
    _print_run_stats(stats)
    return 0


def _print_run_stats(stats) -> None:
    print(
        f"lines={stats.lines} tokens={stats.tokens} distinct={stats.distinct_words} "
        f"scorer_calls={stats.scorer_calls} fallbacks={stats.fallback_words} "
        f"subwords/line={stats.subwords_per_line():.2f} wall={stats.wall_time:.2f}s"
    )


def _cmd_stats(args) -> int:
    stats = corpus_stats(args.input)
    print(f"lines: {stats.lines}")
    print(f"word tokens: {stats.word_tokens}")
    print(f"distinct words: {len(stats.distinct_words)}")
    print(f"subword tokens: {stats.subword_tokens}")
    print(f"subwords per line: {stats.subwords_per_line():.4f}")
    return 0


def _read_segmented(path) -> list:
    lines = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            lines.append(parse_marked_tokens(line.split()))
    return lines


def _cmd_diff(args) -> int:
    seg_a = _read_segmented(args.a)
    seg_b = _read_segmented(args.b)
    with open(args.orig, "r", encoding="utf-8") as fh:
        orig = [line.split() for line in fh]
    if len(orig) != len(seg_a):
        raise DataError(f"{args.orig}: line count differs from segmented input")
    for lineno, (words, segs) in enumerate(zip(orig, seg_a), start=1):
        if words != [s.word for s in segs]:
            raise DataError(f"line {lineno}: segmented file does not spell the original corpus")
    report = diff_report(seg_a, seg_b, freq_split=args.freq_split)
    print(f"corpus difference rate: {report.corpus_rate:.6f}")
    if report.high_rate is not None:
        print(f"frequent (n > {args.freq_split}): {report.high_rate:.6f}")
    if report.low_rate is not None:
        print(f"rare (n <= {args.freq_split}): {report.low_rate:.6f}")
    print(f"differing words: {len(report.diffs)} / {report.total_words}")
    if args.out_md:
        with open(args.out_md, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(report.to_markdown())
    if args.out_csv:
        with open(args.out_csv, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(report.to_csv())
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app_from_files

    app = create_app_from_files(args.model, args.vocab)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "build-vocab": _cmd_build_vocab,
    "normalize": _cmd_normalize,
    "train": _cmd_train,
    "segment": _cmd_segment,
    "segment-reg": _cmd_segment_reg,
    "stats": _cmd_stats,
    "diff": _cmd_diff,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ModelVocabMismatchError as exc:
        print(f"selfseg: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"selfseg: {exc}", file=sys.stderr)
        return 2
    except (SelfSegError, ValueError) as exc:
        print(f"selfseg: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"selfseg: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
