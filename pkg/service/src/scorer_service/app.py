"""HTTP surface: /v1/score, /v1/tokenize, /v1/health.

JSON over HTTP; the wire format is what the audit toolkit's remote backend
speaks. Handlers hold no per-request state, so concurrent requests over the
shared read-only model are fine.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .models import BadQuery, ModelLoadFailure, ModelNotFound, ModelRegistry


class ScoreRequest(BaseModel):
    model: str
    text: str
    candidates: list[str] = Field(min_length=1)


class CandidateResult(BaseModel):
    candidate: str
    probability: float | None
    compatible: bool
    token_id: int | None


class ScoreResponse(BaseModel):
    model: str
    model_mask_token: str
    normalized: bool
    results: list[CandidateResult]


class TokenizeResponse(BaseModel):
    model: str
    word: str
    pieces: list[str]
    single_token: bool


def create_app(model_dir: Path | str | None = None, max_models: int | None = None) -> FastAPI:
    app = FastAPI(title="masked-LM scorer", version="0.1.0")
    registry = ModelRegistry(model_dir=model_dir, max_models=max_models)
    app.state.registry = registry

    def load(name: str):
        try:
            return registry.get(name)
        except ModelNotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ModelLoadFailure as exc:
            raise HTTPException(status_code=503, detail=str(exc))

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "models_loaded": registry.loaded_names()}

    @app.post("/v1/score", response_model=ScoreResponse)
    def score(request: ScoreRequest):
        model = load(request.model)
        try:
            return model.score(request.text, request.candidates)
        except BadQuery as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/v1/tokenize", response_model=TokenizeResponse)
    def tokenize(model: str, word: str):
        loaded = load(model)
        pieces = loaded.word_pieces(word)
        return {
            "model": model,
            "word": word,
            "pieces": pieces,
            "single_token": loaded.is_usable_single_token(pieces),
        }

    return app
