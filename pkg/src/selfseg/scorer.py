"""Mixed character-to-sub-word neural scorer.

The encoder reads a (possibly masked) character sequence; the decoder reads
the clean character prefix behind a causal mask and emits, at every prefix
length, a full-vocabulary log-softmax over the next sub-word. Training
maximizes the log of the summed weight of all segmentation paths, computed
with the same prefix recursion the lattice module uses but batched in torch
so gradients flow through the logsumexp.

Attention, feed-forward and layer norm are written out explicitly rather
than taken from ``nn.Transformer`` so the forward pass has a small, fixed
semantics that an independent matrix-arithmetic oracle can reproduce.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from torch import nn

from .errors import (
    DataError,
    ModelVocabMismatchError,
    TrainingDivergedError,
    UnknownCharactersError,
    WordTooLongError,
)
from .lattice import MAX_WORD_LEN, SegmentScores
from .masking import MaskConfig, MaskedWord, apply_mask
from .vocab import MASK_TOKEN, SubwordVocab

_MAGIC = b"SSEG"
_FORMAT_VERSION = 1
_ATTN_NEG = -1e9
_DP_NEG = -1e30


@dataclass(frozen=True)
class ScorerConfig:
    enc_layers: int = 4
    dec_layers: int = 4
    model_dim: int = 256
    ff_dim: int = 1024
    heads: int = 4
    dropout: float = 0.3
    warmup_steps: int = 4000
    peak_lr: float = 5e-4
    adam_betas: tuple[float, float] = (0.9, 0.98)
    epochs: int = 50
    batch_tokens: int = 4096
    seed: int = 1
    threads: int | None = None
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if min(self.enc_layers, self.dec_layers) < 1:
            raise ValueError("need at least one encoder and one decoder layer")
        if self.model_dim < 2 or self.model_dim % 2:
            raise ValueError("model_dim must be even and >= 2")
        if self.model_dim % self.heads:
            raise ValueError("heads must divide model_dim")
        if self.ff_dim < 1 or self.batch_tokens < 1 or self.warmup_steps < 1:
            raise ValueError("ff_dim, batch_tokens and warmup_steps must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0,1), got {self.dropout}")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        object.__setattr__(self, "adam_betas", tuple(self.adam_betas))

    @classmethod
    def light(cls, **overrides) -> "ScorerConfig":
        """Single-layer variant; everything else is shared with the full model."""
        overrides.setdefault("enc_layers", 1)
        overrides.setdefault("dec_layers", 1)
        return cls(**overrides)


def position_codes(length: int, dim: int, dtype=torch.float32, device=None) -> torch.Tensor:
    """Sinusoidal position table of shape [length, dim]."""
    pos = torch.arange(length, dtype=dtype, device=device).unsqueeze(1)
    idx = torch.arange(0, dim, 2, dtype=dtype, device=device)
    denom = torch.pow(torch.tensor(10000.0, dtype=dtype, device=device), idx / dim)
    codes = torch.zeros(length, dim, dtype=dtype, device=device)
    codes[:, 0::2] = torch.sin(pos / denom)
    codes[:, 1::2] = torch.cos(pos / denom)
    return codes


class MultiHeadAttention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, query: torch.Tensor, memory: torch.Tensor, bias: torch.Tensor | None):
        b, q_len, dim = query.shape
        k_len = memory.shape[1]
        q = self.q_proj(query).view(b, q_len, self.heads, self.head_dim).transpose(1, 2)
        k = self.k_proj(memory).view(b, k_len, self.heads, self.head_dim).transpose(1, 2)
        v = self.v_proj(memory).view(b, k_len, self.heads, self.head_dim).transpose(1, 2)
        logits = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        if bias is not None:
            logits = logits + bias
        attn = self.drop(torch.softmax(logits, dim=-1))
        ctx = (attn @ v).transpose(1, 2).reshape(b, q_len, dim)
        return self.out_proj(ctx)


class FeedForward(nn.Module):
    def __init__(self, dim: int, ff_dim: int, dropout: float):
        super().__init__()
        self.lin1 = nn.Linear(dim, ff_dim)
        self.lin2 = nn.Linear(ff_dim, dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.lin2(self.drop(torch.relu(self.lin1(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ScorerConfig):
        super().__init__()
        self.attn = MultiHeadAttention(cfg.model_dim, cfg.heads, cfg.dropout)
        self.ffn = FeedForward(cfg.model_dim, cfg.ff_dim, cfg.dropout)
        self.norm1 = nn.LayerNorm(cfg.model_dim)
        self.norm2 = nn.LayerNorm(cfg.model_dim)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x: torch.Tensor, bias: torch.Tensor | None) -> torch.Tensor:
        x = self.norm1(x + self.drop(self.attn(x, x, bias)))
        return self.norm2(x + self.drop(self.ffn(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ScorerConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.model_dim, cfg.heads, cfg.dropout)
        self.cross_attn = MultiHeadAttention(cfg.model_dim, cfg.heads, cfg.dropout)
        self.ffn = FeedForward(cfg.model_dim, cfg.ff_dim, cfg.dropout)
        self.norm1 = nn.LayerNorm(cfg.model_dim)
        self.norm2 = nn.LayerNorm(cfg.model_dim)
        self.norm3 = nn.LayerNorm(cfg.model_dim)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, memory, causal_bias, memory_bias):
        x = self.norm1(x + self.drop(self.self_attn(x, x, causal_bias)))
        x = self.norm2(x + self.drop(self.cross_attn(x, memory, memory_bias)))
        return self.norm3(x + self.drop(self.ffn(x)))


class SegmentScorer(nn.Module):
    """Character encoder + prefix decoder emitting next-sub-word log-probs."""

    def __init__(self, cfg: ScorerConfig, vocab_size: int, pad_id: int):
        super().__init__()
        self.cfg = cfg
        self.pad_id = pad_id
        self.embed = nn.Embedding(vocab_size, cfg.model_dim, padding_idx=pad_id)
        self.enc_layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.enc_layers))
        self.dec_layers = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.dec_layers))
        self.out_proj = nn.Linear(cfg.model_dim, vocab_size)
        self.drop = nn.Dropout(cfg.dropout)

    def _embed(self, ids: torch.Tensor) -> torch.Tensor:
        dim = self.cfg.model_dim
        x = self.embed(ids) * math.sqrt(dim)
        x = x + position_codes(ids.shape[1], dim, dtype=x.dtype, device=x.device)
        return self.drop(x)

    def forward(self, enc_ids: torch.Tensor, dec_ids: torch.Tensor) -> torch.Tensor:
        """Log-probs [batch, dec_len, vocab]; decoder position p conditions on prefix length p."""
        dtype = self.embed.weight.dtype
        pad_key = (enc_ids == self.pad_id).to(dtype) * _ATTN_NEG
        enc_bias = pad_key[:, None, None, :]
        memory = self._embed(enc_ids)
        for layer in self.enc_layers:
            memory = layer(memory, enc_bias)

        p = dec_ids.shape[1]
        causal = torch.full((p, p), _ATTN_NEG, dtype=dtype, device=dec_ids.device).triu(1)
        causal_bias = causal[None, None, :, :]
        x = self._embed(dec_ids)
        for layer in self.dec_layers:
            x = layer(x, memory, causal_bias, enc_bias)
        return torch.log_softmax(self.out_proj(x), dim=-1)


@dataclass
class ScorerParams:
    """Trained weights plus the config and vocabulary they are bound to."""

    config: ScorerConfig
    vocab: SubwordVocab
    state: "OrderedDict[str, torch.Tensor]"
    version: str = "1"
    _module: SegmentScorer | None = field(default=None, repr=False, compare=False)

    @property
    def vocab_hash(self) -> str:
        return self.vocab.vocab_hash

    def module(self) -> SegmentScorer:
        """Inference module (eval mode, dropout off), built once and cached."""
        if self._module is None:
            module = SegmentScorer(self.config, len(self.vocab), self.vocab.special.pad)
            module.load_state_dict(self.state)
            module.eval()
            self._module = module
        return self._module


def init_params(cfg: ScorerConfig, vocab: SubwordVocab) -> ScorerParams:
    torch.manual_seed(cfg.seed)
    module = SegmentScorer(cfg, len(vocab), vocab.special.pad)
    return _snapshot(module, cfg, vocab)


def _snapshot(module: SegmentScorer, cfg: ScorerConfig, vocab: SubwordVocab) -> ScorerParams:
    state = OrderedDict(
        (name, tensor.detach().to(torch.float32).clone())
        for name, tensor in module.state_dict().items()
    )
    return ScorerParams(config=cfg, vocab=vocab, state=state)


def _char_ids(vocab: SubwordVocab, word: str) -> list[int]:
    unknown = vocab.unknown_chars(word)
    if unknown:
        raise UnknownCharactersError(word, unknown)
    return [vocab.id_of(c) for c in word]


def _encoder_ids(vocab: SubwordVocab, masked: MaskedWord) -> list[int]:
    mask_id = vocab.special.mask
    ids = _char_ids(vocab, masked.original)
    return [mask_id if slot == MASK_TOKEN else i for slot, i in zip(masked.masked_chars, ids)]


@dataclass
class TrainBatch:
    """A padded batch of (word, masked word) pairs plus lattice index tensors."""

    pairs: list[tuple[str, MaskedWord]]
    enc_ids: torch.Tensor
    dec_ids: torch.Tensor
    lengths: torch.Tensor
    seg_ids: torch.Tensor
    seg_valid: torch.Tensor


def make_batch(vocab: SubwordVocab, pairs: list[tuple[str, MaskedWord]]) -> TrainBatch:
    if not pairs:
        raise DataError("empty batch")
    for word, masked in pairs:
        if not word:
            raise DataError("batch contains an empty word")
        if masked.original != word:
            raise DataError(f"masked word {masked.original!r} does not match {word!r}")
        if len(word) > MAX_WORD_LEN:
            raise WordTooLongError(f"word of length {len(word)} exceeds {MAX_WORD_LEN}")
    pad = vocab.special.pad
    bos = vocab.special.bos
    b = len(pairs)
    t_max = max(len(word) for word, _ in pairs)
    span = min(vocab.max_subword_len, t_max)

    enc = torch.full((b, t_max), pad, dtype=torch.long)
    dec = torch.full((b, t_max), pad, dtype=torch.long)
    seg_ids = torch.zeros((b, t_max, span), dtype=torch.long)
    seg_valid = torch.zeros((b, t_max, span), dtype=torch.bool)
    lengths = torch.zeros(b, dtype=torch.long)
    for row, (word, masked) in enumerate(pairs):
        t = len(word)
        lengths[row] = t
        char_ids = _char_ids(vocab, word)
        enc[row, :t] = torch.tensor(_encoder_ids(vocab, masked))
        dec[row, 0] = bos
        if t > 1:
            dec[row, 1:t] = torch.tensor(char_ids[:-1])
        for i in range(1, t + 1):
            for k in range(min(span, i)):
                sid = vocab.segment_id(word[i - 1 - k : i])
                if sid is not None:
                    seg_ids[row, i - 1, k] = sid
                    seg_valid[row, i - 1, k] = True
    return TrainBatch(pairs, enc, dec, lengths, seg_ids, seg_valid)


def _batch_marginals(module: SegmentScorer, batch: TrainBatch) -> torch.Tensor:
    """Per-word log-marginal [batch]; differentiable through the recursion.

    Invalid candidates are clamped to a large negative constant instead of
    -inf so logsumexp never sees an all--inf row (which would poison the
    backward pass with NaNs).
    """
    log_probs = module(batch.enc_ids, batch.dec_ids)
    b, t_max, span = batch.seg_ids.shape
    neg = torch.tensor(_DP_NEG, dtype=log_probs.dtype)
    prefix = [torch.zeros(b, dtype=log_probs.dtype)]
    for i in range(1, t_max + 1):
        cands = []
        for k in range(min(span, i)):
            scores = log_probs[:, i - 1 - k, :].gather(
                1, batch.seg_ids[:, i - 1, k].unsqueeze(1)
            ).squeeze(1)
            beta = prefix[i - 1 - k] + scores
            cands.append(torch.where(batch.seg_valid[:, i - 1, k], beta, neg))
        prefix.append(torch.logsumexp(torch.stack(cands, dim=1), dim=1))
    stacked = torch.stack(prefix, dim=0)
    return stacked[batch.lengths, torch.arange(b)]


def loss(params: ScorerParams, batch: TrainBatch) -> float:
    """Mean negative log-marginal of the batch under the (eval-mode) model."""
    module = params.module()
    with torch.no_grad():
        marginals = _batch_marginals(module, batch)
    return float((-marginals).mean())


def score_segments(params: ScorerParams, masked: MaskedWord, word: str) -> SegmentScores:
    """Score every valid piece of one word in a single encoder+decoder pass."""
    if masked.original != word:
        raise DataError(f"masked word {masked.original!r} does not match {word!r}")
    if not word:
        raise DataError("cannot score an empty word")
    if len(word) > MAX_WORD_LEN:
        raise WordTooLongError(f"word of length {len(word)} exceeds {MAX_WORD_LEN}")
    vocab = params.vocab
    module = params.module()
    char_ids = _char_ids(vocab, word)
    enc = torch.tensor([_encoder_ids(vocab, masked)], dtype=torch.long)
    dec = torch.tensor([[vocab.special.bos] + char_ids[:-1]], dtype=torch.long)
    with torch.no_grad():
        log_probs = module(enc, dec)[0]
    table: dict[tuple[int, int], float] = {}
    for i in range(1, len(word) + 1):
        for j in range(max(1, i - vocab.max_subword_len + 1), i + 1):
            sid = vocab.segment_id(word[j - 1 : i])
            if sid is not None:
                table[(j, i)] = float(log_probs[j - 1, sid])
    return SegmentScores(word, table)


class Trainer:
    """Owns the module and optimizer; one logical writer of the parameters."""

    def __init__(self, cfg: ScorerConfig, vocab: SubwordVocab):
        torch.manual_seed(cfg.seed)
        self.cfg = cfg
        self.vocab = vocab
        self.module = SegmentScorer(cfg, len(vocab), vocab.special.pad)
        self.optimizer = torch.optim.Adam(
            self.module.parameters(), lr=cfg.peak_lr, betas=cfg.adam_betas
        )
        self.step_num = 0

    def _lr(self) -> float:
        # linear warmup then inverse square-root decay
        step = max(1, self.step_num)
        scale = min(step / self.cfg.warmup_steps, math.sqrt(self.cfg.warmup_steps / step))
        return self.cfg.peak_lr * scale

    def step(self, batch: TrainBatch) -> float:
        self.step_num += 1
        for group in self.optimizer.param_groups:
            group["lr"] = self._lr()
        self.module.train()
        marginals = _batch_marginals(self.module, batch)
        per_word = -marginals
        if not torch.isfinite(per_word).all():
            idx = int((~torch.isfinite(per_word)).nonzero()[0])
            raise TrainingDivergedError(batch.pairs[idx][0], per_word[idx].item())
        objective = per_word.mean()
        self.optimizer.zero_grad()
        objective.backward()
        self.optimizer.step()
        return objective.item()

    def params(self) -> ScorerParams:
        return _snapshot(self.module, self.cfg, self.vocab)


def train_step(trainer: Trainer, batch: TrainBatch) -> float:
    """One optimizer update; returns the batch loss before the update."""
    return trainer.step(batch)


def train(
    corpus: list[str],
    cfg: ScorerConfig,
    mask_cfg: MaskConfig,
    vocab: SubwordVocab,
    on_epoch: Callable[[int, float], None] | None = None,
) -> ScorerParams:
    """Run the full training loop over a materialized word list.

    Every epoch reshuffles the list and re-masks every word with a stream
    seeded from (mask seed, epoch, shard); checkpoints are written per epoch
    when a checkpoint directory is configured.
    """
    if not corpus:
        raise DataError("training corpus is empty")
    if cfg.threads:
        torch.set_num_threads(cfg.threads)
    trainer = Trainer(cfg, vocab)
    for epoch in range(cfg.epochs):
        mask_rng = np.random.default_rng([mask_cfg.seed, epoch, 0])
        order_rng = np.random.default_rng([cfg.seed, epoch])
        epoch_losses = []
        for words in _pack_batches(corpus, cfg.batch_tokens, order_rng):
            pairs = [(w, apply_mask(w, mask_cfg, mask_rng, vocab)) for w in words]
            epoch_losses.append(trainer.step(make_batch(vocab, pairs)))
        mean_loss = sum(epoch_losses) / len(epoch_losses)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)
        if cfg.checkpoint_dir is not None:
            ckpt = Path(cfg.checkpoint_dir) / f"epoch{epoch:03d}.bin"
            save_params(trainer.params(), ckpt)
    return trainer.params()


def _pack_batches(
    corpus: list[str], batch_tokens: int, rng: np.random.Generator
) -> list[list[str]]:
    """Bucket words by length, batch up to a character budget, shuffle batch order."""
    buckets: dict[int, list[str]] = {}
    for word in corpus:
        buckets.setdefault(len(word), []).append(word)
    batches: list[list[str]] = []
    for length in sorted(buckets):
        words = buckets[length]
        rng.shuffle(words)
        per_batch = max(1, batch_tokens // max(1, length))
        for k in range(0, len(words), per_batch):
            batches.append(words[k : k + per_batch])
    order = rng.permutation(len(batches))
    return [batches[int(k)] for k in order]


def _serialize_params(params: ScorerParams) -> bytes:
    tensors = [
        {"name": name, "shape": list(tensor.shape)} for name, tensor in params.state.items()
    ]
    header = {
        "model_version": params.version,
        "config": asdict(params.config),
        "vocab_hash": params.vocab_hash,
        "tensors": tensors,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<I", _FORMAT_VERSION)
    blob += struct.pack("<I", len(head))
    blob += head
    for name, tensor in params.state.items():
        arr = tensor.detach().to(torch.float32).numpy()
        blob += arr.astype("<f4", copy=False).tobytes(order="C")
    return bytes(blob)


def params_digest(params: ScorerParams) -> str:
    return hashlib.blake2b(_serialize_params(params), digest_size=16).hexdigest()


def save_params(params: ScorerParams, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(_serialize_params(params))


def load_params(path, vocab: SubwordVocab) -> ScorerParams:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != _MAGIC:
        raise DataError(f"{path}: not a scorer checkpoint (bad magic bytes)")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != _FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint format version {version}")
    head_len = struct.unpack("<I", raw[8:12])[0]
    try:
        header = json.loads(raw[12 : 12 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt checkpoint header: {exc}") from exc
    if header["vocab_hash"] != vocab.vocab_hash:
        raise ModelVocabMismatchError(expected=vocab.vocab_hash, found=header["vocab_hash"])
    cfg_dict = dict(header["config"])
    cfg_dict["adam_betas"] = tuple(cfg_dict["adam_betas"])
    cfg = ScorerConfig(**cfg_dict)
    state: "OrderedDict[str, torch.Tensor]" = OrderedDict()
    offset = 12 + head_len
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if offset + nbytes > len(raw):
            raise DataError(f"{path}: checkpoint truncated at tensor {entry['name']!r}")
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape)
        state[entry["name"]] = torch.from_numpy(arr.copy())
        offset += nbytes
    if offset != len(raw):
        raise DataError(f"{path}: {len(raw) - offset} trailing bytes after tensors")
    return ScorerParams(config=cfg, vocab=vocab, state=state, version=header["model_version"])
