"""HTTP layer: routes, validation, locking, and the error contract.

Every error leaves as {"error": str} with a non-2xx status, including
framework-raised validation failures and unexpected exceptions, so
clients never have to parse two shapes.
"""

from __future__ import annotations

import math

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from starlette.exceptions import HTTPException as StarletteHTTPException

from .backends import LmBackend
from .config import PROTOCOL_VERSION, ServiceConfig
from .locks import ReadWriteLock


class ScorePair(BaseModel):
    input: str
    target: str


class EmbedRequest(BaseModel):
    texts: list[str]


class ScoreRequest(BaseModel):
    pairs: list[ScorePair]


class GenerateRequest(BaseModel):
    input: str
    candidates: list[str] | None = None
    max_new_tokens: int = 32


class TrainStepRequest(BaseModel):
    pairs: list[ScorePair]
    lr: float = 1e-4


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(backend: LmBackend, config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="auglm-service", docs_url=None, redoc_url=None)
    lock = ReadWriteLock()

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        where = ".".join(str(part) for part in first.get("loc", ()))
        return _error(400, f"invalid request: {where}: {first.get('msg', 'validation failed')}")

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(request: Request, exc: StarletteHTTPException):
        return _error(exc.status_code, str(exc.detail))

    @app.exception_handler(Exception)
    async def on_unexpected_error(request: Request, exc: Exception):
        return _error(500, f"{type(exc).__name__}: {exc}")

    def check_batch(n: int, what: str) -> JSONResponse | None:
        if n > config.max_batch:
            return _error(413, f"{what} batch of {n} exceeds the limit of {config.max_batch}")
        return None

    @app.get("/v1/info")
    def info() -> dict:
        return {
            "protocol": PROTOCOL_VERSION,
            "model": backend.name,
            "embed_dim": backend.embed_dim,
        }

    @app.post("/v1/embed")
    def embed(req: EmbedRequest):
        if (resp := check_batch(len(req.texts), "embed")) is not None:
            return resp
        with lock.read():
            rows = backend.embed(req.texts)
        return {"dim": backend.embed_dim, "embeddings": rows}

    @app.post("/v1/score")
    def score(req: ScoreRequest):
        if (resp := check_batch(len(req.pairs), "score")) is not None:
            return resp
        with lock.read():
            scored = backend.score([(p.input, p.target) for p in req.pairs])
        return {
            "scores": [
                {"log_likelihood": ll, "n_target_tokens": n} for ll, n in scored
            ]
        }

    @app.post("/v1/generate")
    def generate(req: GenerateRequest):
        if req.max_new_tokens < 1:
            return _error(400, f"max_new_tokens must be >= 1, got {req.max_new_tokens}")
        if req.candidates is not None:
            if not req.candidates:
                return _error(400, "candidates must be non-empty when provided")
            if (resp := check_batch(len(req.candidates), "candidate")) is not None:
                return resp
        with lock.read():
            text = backend.generate(req.input, req.candidates, req.max_new_tokens)
        return {"text": text}

    @app.post("/v1/train_step")
    def train_step(req: TrainStepRequest):
        if not req.pairs:
            return _error(400, "train_step needs at least one pair")
        if (resp := check_batch(len(req.pairs), "train_step")) is not None:
            return resp
        if not math.isfinite(req.lr) or not config.lr_min <= req.lr <= config.lr_max:
            return _error(
                400, f"lr {req.lr} outside [{config.lr_min}, {config.lr_max}]"
            )
        with lock.write():
            loss = backend.train_step([(p.input, p.target) for p in req.pairs], req.lr)
        return {"loss": loss}

    return app
