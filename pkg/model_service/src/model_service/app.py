"""HTTP surface: POST /v1/generate and GET /healthz.

Schema violations return 400; both endpoints return 503 until the model
has finished loading. Generation is greedy and serialized internally, so
responses do not depend on request arrival order.
"""
from __future__ import annotations

import logging
import threading
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .engine import GenerationEngine, ServiceConfig

logger = logging.getLogger(__name__)


class GenerateRequest(BaseModel):
    question: str = Field(min_length=1)
    context: str = Field(min_length=1)
    max_new_tokens: int = Field(default=32, ge=1)
    repetition_penalty_disabled: bool = True

    model_config = {"extra": "forbid"}


class GenerateResponse(BaseModel):
    text: str


def create_app(
    config: ServiceConfig | None = None,
    engine: GenerationEngine | None = None,
    load_in_background: bool = True,
) -> FastAPI:
    """Build the service app.

    With ``engine`` given, the app is ready immediately (test mode).
    Otherwise the engine loads from ``config`` on startup; while it loads,
    both endpoints answer 503.
    """
    config = config or ServiceConfig()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if app.state.engine is None:
            def load() -> None:
                logger.info("loading model %r", config.model)
                app.state.engine = GenerationEngine.from_config(config)
                logger.info("model ready")

            if load_in_background:
                thread = threading.Thread(target=load, daemon=True)
                thread.start()
            else:
                load()
        yield

    app = FastAPI(title="adeqa-model-service", lifespan=lifespan)
    app.state.engine = engine

    @app.exception_handler(RequestValidationError)
    async def validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": exc.errors()})

    def not_ready() -> JSONResponse:
        return JSONResponse(status_code=503, content={"error": "model loading"})

    @app.get("/healthz")
    async def healthz():
        if app.state.engine is None:
            return not_ready()
        return {"status": "ok"}

    @app.post("/v1/generate", response_model=GenerateResponse)
    async def generate(request: GenerateRequest):
        engine = app.state.engine
        if engine is None:
            return not_ready()
        text = engine.generate_text(
            question=request.question,
            context=request.context,
            max_new_tokens=request.max_new_tokens,
            repetition_penalty_disabled=request.repetition_penalty_disabled,
        )
        return {"text": text}

    return app
