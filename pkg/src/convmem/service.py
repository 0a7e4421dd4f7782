"""HTTP service: session ingestion, querying, health.

Thin JSON layer over the store, pipeline, and engine. Request bodies
are validated by the same schema code the corpus loader uses, so error
messages carry field paths. Handlers are synchronous on purpose: the
framework runs them on a thread pool and the store's reader-writer
lease does the actual coordination, so a long ingest never blocks
queries beyond the final commit swap.
"""

from __future__ import annotations

import logging
import os
from dataclasses import replace
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .answer import AnswerComposer
from .embedding import Embedder, embedder_from_env
from .errors import (
    CorpusFormatError,
    EmptyGraph,
    InvalidInput,
    ProviderRejected,
    ProviderUnavailable,
    StructuredOutputError,
)
from .evaluation import session_record_from_dict
from .gateway import LlmGateway, gateway_from_env
from .ingest import IngestPipeline
from .model import RetrievalConfig
from .retrieval import RetrievalEngine
from .store import GraphStore

logger = logging.getLogger(__name__)

API_KEY_ENV = "CONVMEM_SERVICE_TOKEN"
API_KEY_HEADER = "X-API-Key"

_CONFIG_FIELDS = frozenset(RetrievalConfig.__dataclass_fields__)


def _error(status: int, message: str, *, field: str | None = None) -> JSONResponse:
    body: dict[str, Any] = {"error": message}
    if field is not None:
        body["field"] = field
    return JSONResponse(status_code=status, content=body)


def config_with_overrides(base: RetrievalConfig, overrides: dict) -> RetrievalConfig:
    """Apply per-request config overrides, rejecting unknown fields."""
    if not isinstance(overrides, dict):
        raise InvalidInput("config must be an object")
    unknown = set(overrides) - _CONFIG_FIELDS
    if unknown:
        raise InvalidInput(f"unknown config fields: {', '.join(sorted(unknown))}")
    try:
        return replace(base, **overrides)
    except (TypeError, ValueError) as exc:
        raise InvalidInput(f"invalid config override: {exc}") from exc


def create_app(
    store: GraphStore | None = None,
    gateway: LlmGateway | None = None,
    embedder: Embedder | None = None,
    config: RetrievalConfig | None = None,
) -> FastAPI:
    """Build the service; omitted collaborators come from the environment."""
    embedder = embedder or embedder_from_env()
    store = store or GraphStore(embedder)
    gateway = gateway or gateway_from_env()
    config = config or RetrievalConfig()

    pipeline = IngestPipeline(store, gateway, config)
    engine = RetrievalEngine(store, embedder, config)
    composer = AnswerComposer(gateway)

    def require_key(request: Request) -> JSONResponse | None:
        expected = os.environ.get(API_KEY_ENV)
        if expected and request.headers.get(API_KEY_HEADER) != expected:
            return _error(401, "missing or invalid API key")
        return None

    app = FastAPI(title="convmem", version="0.1.0")

    @app.middleware("http")
    async def check_key(request: Request, call_next):
        denied = require_key(request)
        if denied is not None:
            return denied
        return await call_next(request)

    async def read_json(request: Request) -> Any:
        try:
            return await request.json()
        except Exception as exc:
            raise CorpusFormatError("$", f"body is not valid JSON: {exc}") from exc

    @app.post("/v1/sessions")
    async def ingest_session(request: Request):
        try:
            body = await read_json(request)
            if not isinstance(body, dict):
                raise CorpusFormatError("$", "expected a session object")
            record = session_record_from_dict(body, "$")
        except CorpusFormatError as exc:
            return _error(400, exc.message, field=exc.path)
        try:
            report = pipeline.ingest_session(list(record.turns))
        except InvalidInput as exc:
            return _error(400, str(exc))
        except ProviderUnavailable as exc:
            return _error(503, str(exc))
        return JSONResponse(status_code=202, content=report.as_dict())

    @app.post("/v1/query")
    async def query(request: Request):
        try:
            body = await read_json(request)
        except CorpusFormatError as exc:
            return _error(400, exc.message, field=exc.path)
        if not isinstance(body, dict):
            return _error(400, "expected a query object")
        query_text = body.get("query")
        if not isinstance(query_text, str) or not query_text.strip():
            return _error(400, "query must be a non-empty string", field="$.query")
        generate = body.get("generate", False)
        if not isinstance(generate, bool):
            return _error(400, "generate must be a boolean", field="$.generate")
        try:
            cfg = config_with_overrides(config, body.get("config", {}))
        except InvalidInput as exc:
            return _error(400, str(exc), field="$.config")
        try:
            bundle = engine.retrieve(query_text, cfg)
        except EmptyGraph as exc:
            return _error(409, str(exc))
        except ProviderUnavailable as exc:
            return _error(502, str(exc))
        payload = bundle.to_dict()
        payload["latency_ms"] = bundle.stats.pagerank_ms
        if generate:
            try:
                payload["answer"] = composer.answer(bundle)
            except (ProviderUnavailable, ProviderRejected, StructuredOutputError) as exc:
                return _error(502, f"answer generation failed: {exc}")
        return JSONResponse(status_code=200, content=payload)

    @app.get("/v1/health")
    async def health():
        return JSONResponse(
            status_code=200,
            content={
                "status": "ok",
                "graph": store.stats().as_dict(),
                "llm_provider": gateway.provider_kind,
                "embedder": type(embedder).__name__,
            },
        )

    return app
