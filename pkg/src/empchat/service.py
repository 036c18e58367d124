"""HTTP inference service over a frozen checkpoint: reply generation plus
next-emotion prediction, with the browser UI served as same-origin statics.

Stateless by design: the full conversation history travels in every request,
each request owns its sampling RNG, and parameters are shared read-only.
"""

from __future__ import annotations

import hashlib
import logging
from typing import Literal, Optional

from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, ConfigDict, Field
from starlette.exceptions import HTTPException as StarletteHTTPException

from .bpe import Vocabulary
from .corpus import ContextOverflowError, Turn
from .decoder import SamplingParams, generate
from .labels import ACTS, EMOTIONS, NEUTRAL, TOPICS
from .model import load_model, predict_emotion

log = logging.getLogger(__name__)

EmotionLabel = Literal[EMOTIONS]
ActLabel = Literal[ACTS]
TopicLabel = Literal[TOPICS]


class HistoryEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")
    speaker: Literal[1, 2]
    text: str = Field(min_length=1)
    emotion: Optional[EmotionLabel] = None
    act: Optional[ActLabel] = None


class SamplingBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    p: float = Field(default=0.9, gt=0.0, le=1.0)
    temperature: float = Field(default=0.7, gt=0.0)
    max_new_tokens: int = Field(default=48, ge=1, le=512)
    seed: Optional[int] = None


class ChatRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    topic: TopicLabel
    history: list[HistoryEntry] = Field(default_factory=list)
    sampling: SamplingBody = Field(default_factory=SamplingBody)
    force_emotion: Optional[EmotionLabel] = None


class ChatResponse(BaseModel):
    reply: str
    predicted_emotion: str
    emotion_scores: dict[str, float]
    act_used: str
    token_count: int
    model_hash: str


class ModelBundle:
    def __init__(self, ckpt_path, vocab_path=None):
        self.params, self.config, sidecar = load_model(ckpt_path)
        vp = vocab_path or sidecar.get("vocab_path")
        if not vp:
            raise ValueError("no vocabulary path given or recorded in the sidecar")
        self.vocab = Vocabulary.load(vp)
        # mirror the training-time context: only the last window turns feed
        # the model, even though the full history travels in every request
        self.history_window = int(sidecar.get("history_window") or 2)
        with open(ckpt_path, "rb") as f:
            self.model_hash = hashlib.sha256(f.read()).hexdigest()[:16]


def _field_path(loc):
    parts = []
    for item in loc:
        if item == "body":
            continue
        if isinstance(item, int):
            parts[-1] += f"[{item}]"
        else:
            parts.append(str(item))
    return ".".join(parts)


def create_app(ckpt_path=None, vocab_path=None, static_dir=None):
    """FastAPI app; a missing checkpoint yields 503 on inference routes."""
    app = FastAPI(title="empchat", docs_url=None, redoc_url=None)
    bundle = ModelBundle(ckpt_path, vocab_path) if ckpt_path else None

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request, exc):
        first = exc.errors()[0]
        return JSONResponse(
            status_code=400,
            content={"error": first.get("msg", "invalid request"),
                     "field": _field_path(first.get("loc", []))},
        )

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(request, exc):
        body = {"error": str(exc.detail)}
        return JSONResponse(status_code=exc.status_code, content=body)

    @app.get("/api/meta")
    def meta():
        if bundle is None:
            return JSONResponse(status_code=503, content={"error": "model not loaded"})
        return {
            "emotions": list(EMOTIONS),
            "acts": list(ACTS),
            "topics": list(TOPICS),
            "sampling_defaults": {"p": 0.9, "temperature": 0.7, "max_new_tokens": 48},
            "model_hash": bundle.model_hash,
            "max_positions": bundle.config.max_positions,
        }

    @app.post("/api/chat", response_model=ChatResponse)
    def chat(req: ChatRequest):
        if bundle is None:
            return JSONResponse(status_code=503, content={"error": "model not loaded"})
        history = [
            (entry.speaker, Turn(entry.text, entry.emotion, entry.act))
            for entry in req.history[-bundle.history_window :]
        ]
        try:
            ranked = predict_emotion(
                history, req.topic, bundle.params, bundle.vocab, bundle.config
            )
            predicted = ranked[0][0]
            conditioning = req.force_emotion or predicted
            sampling = SamplingParams(
                p=req.sampling.p,
                temperature=req.sampling.temperature,
                max_new_tokens=req.sampling.max_new_tokens,
                rng_seed=req.sampling.seed,
            )
            reply, ids = generate(
                history, req.topic, bundle.params, bundle.vocab, bundle.config,
                sampling, candidate_emotion=conditioning,
            )
        except ContextOverflowError as exc:
            return JSONResponse(status_code=413, content={"error": str(exc)})
        return ChatResponse(
            reply=reply,
            predicted_emotion=predicted,
            emotion_scores={label: score for label, score in ranked},
            act_used=NEUTRAL,
            token_count=len(ids),
            model_hash=bundle.model_hash,
        )

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
