"""HTTP inference service: POST /generate, GET /health, GET /model-info."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from .classifiers import StyleScorer
from .corpus import tokenize
from .errors import InputError
from .inference import SampleSpec, generate_candidates
from .model import DialogueModel

logger = logging.getLogger(__name__)

EOU_SEPARATOR = " <EOU> "


@dataclass
class ModelBundle:
    model: DialogueModel
    scorer: StyleScorer
    sigma: float
    model_id: str
    variant: str


class GenerateRequest(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    context: str
    rho: float = Field(0.0, ge=0)
    lam: float = Field(0.5, ge=0, le=1, alias="lambda")
    direction_sentence: str | None = None
    n_candidates: int = Field(100, ge=1, le=500)
    seed: int | None = None


class Candidate(BaseModel):
    text: str
    relevance: float
    style_prob: float
    score: float


class GenerateResponse(BaseModel):
    candidates: list[Candidate]
    model_id: str
    timing_ms: int


def create_app(bundle: ModelBundle | None) -> FastAPI:
    """Build the service around an immutable model snapshot (may be absent)."""
    app = FastAPI(title="styledial")
    app.state.bundle = bundle

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/model-info")
    def model_info() -> dict:
        b: ModelBundle | None = app.state.bundle
        if b is None:
            raise HTTPException(status_code=503, detail={"reason": "model not loaded"})
        return {
            "model_id": b.model_id,
            "l": b.model.config.latent_dim,
            "vocab_size": b.model.config.vocab_size,
            "variant": b.variant,
        }

    @app.post("/generate", response_model=GenerateResponse)
    def generate(request: GenerateRequest) -> GenerateResponse:
        b: ModelBundle | None = app.state.bundle
        if b is None:
            raise HTTPException(status_code=503, detail={"reason": "model not loaded"})
        started = time.perf_counter()
        vocab = b.scorer.vocab
        utterances = [tokenize(u) for u in request.context.split(EOU_SEPARATOR)]
        if not utterances or any(len(u) == 0 for u in utterances):
            raise HTTPException(
                status_code=400, detail={"reason": "context must contain non-empty utterances"}
            )
        context_ids = [vocab.encode(u) for u in utterances]
        target_ids = None
        mode = "random"
        if request.direction_sentence is not None:
            direction_tokens = tokenize(request.direction_sentence)
            if not direction_tokens:
                raise HTTPException(
                    status_code=400, detail={"reason": "direction_sentence must be non-empty"}
                )
            target_ids = vocab.encode(direction_tokens)
            mode = "towards"
        seed = request.seed
        if seed is None:
            import os

            seed = int.from_bytes(os.urandom(4), "little")
        spec = SampleSpec(
            rho=request.rho,
            mode=mode,
            n_candidates=request.n_candidates,
            lam=request.lam,
            seed=seed,
        )
        try:
            ranked = generate_candidates(
                context_ids, b.model, b.scorer, spec, b.sigma, target_sentence=target_ids
            )
        except InputError as exc:
            raise HTTPException(status_code=400, detail={"reason": str(exc)})
        candidates = [
            Candidate(
                text=" ".join(vocab.decode(h.tokens)),
                relevance=h.relevance,
                style_prob=h.style_prob,
                score=h.score,
            )
            for h in ranked
        ]
        elapsed_ms = int((time.perf_counter() - started) * 1000)
        return GenerateResponse(candidates=candidates, model_id=b.model_id, timing_ms=elapsed_ms)

    return app
