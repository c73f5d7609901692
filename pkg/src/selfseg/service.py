"""HTTP service around a loaded segmenter.

The model and vocabulary load once at startup; the MAP decode cache then
persists across requests, so repeated words cost a dictionary lookup. Batch
preprocessing jobs belong in the CLI; this service is for online callers that
want segmentations without paying the model load per invocation.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .errors import DataError
from .lattice import sample_decode
from .masking import no_mask
from .pipeline import MARKER, Segmenter, _digest_int, render_segments
from .scorer import ScorerParams, load_params, score_segments
from .vocab import load_vocab

import numpy as np


class SegmentRequest(BaseModel):
    lines: list[str] = Field(description="whitespace-tokenized sentences")


class SegmentResponse(BaseModel):
    lines: list[str]
    scorer_calls: int
    cache_size: int
    fallback_words: int


class WordsRequest(BaseModel):
    words: list[str]


class WordSegmentation(BaseModel):
    word: str
    pieces: list[str]


class WordsResponse(BaseModel):
    segmentations: list[WordSegmentation]


class SampleRequest(BaseModel):
    word: str
    n: int = Field(default=10, ge=1)
    temperature: float = Field(default=10.0, gt=0)
    seed: int = 0


class SampleResponse(BaseModel):
    word: str
    samples: list[list[str]]


class InfoResponse(BaseModel):
    vocab_size: int
    vocab_hash: str
    max_subword_len: int
    enc_layers: int
    dec_layers: int
    model_dim: int
    cache_size: int
    scorer_calls: int


def create_app(params: ScorerParams) -> FastAPI:
    app = FastAPI(title="selfseg", version="0.1.0")
    session = Segmenter(params)
    app.state.session = session

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/info", response_model=InfoResponse)
    def info():
        vocab = params.vocab
        return InfoResponse(
            vocab_size=len(vocab),
            vocab_hash=vocab.vocab_hash,
            max_subword_len=vocab.max_subword_len,
            enc_layers=params.config.enc_layers,
            dec_layers=params.config.dec_layers,
            model_dim=params.config.model_dim,
            cache_size=len(session.cache),
            scorer_calls=session.scorer_calls,
        )

    @app.post("/segment", response_model=SegmentResponse)
    def segment(req: SegmentRequest):
        out = []
        for line in req.lines:
            rendered = []
            for token in line.split():
                if MARKER in token:
                    raise HTTPException(
                        status_code=422,
                        detail=f"token {token!r} already contains {MARKER!r}",
                    )
                rendered.append(render_segments(session.segment_word(token)))
            out.append(" ".join(rendered))
        return SegmentResponse(
            lines=out,
            scorer_calls=session.scorer_calls,
            cache_size=len(session.cache),
            fallback_words=session.fallback_words,
        )

    @app.post("/segment/words", response_model=WordsResponse)
    def segment_words(req: WordsRequest):
        segs = []
        for word in req.words:
            if not word or " " in word:
                raise HTTPException(status_code=422, detail=f"not a single word: {word!r}")
            seg = session.segment_word(word)
            segs.append(WordSegmentation(word=word, pieces=list(seg.segments)))
        return WordsResponse(segmentations=segs)

    @app.post("/segment/sample", response_model=SampleResponse)
    def segment_sample(req: SampleRequest):
        try:
            scores = score_segments(params, no_mask(req.word), req.word)
        except DataError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        rng = np.random.default_rng([req.seed, _digest_int(req.word)])
        samples = [
            list(sample_decode(req.word, scores, req.temperature, rng).segments)
            for _ in range(req.n)
        ]
        return SampleResponse(word=req.word, samples=samples)

    return app


def create_app_from_files(model_path, vocab_path) -> FastAPI:
    vocab = load_vocab(vocab_path)
    params = load_params(model_path, vocab)
    return create_app(params)
