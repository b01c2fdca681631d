"""HTTP chat API: in-memory sessions over the generation pipeline.

JSON over HTTP/1.1, no streaming. Sessions live in an LRU-capped map;
each session is serialized FIFO by its own lock while different sessions
generate concurrently against the read-only model parameters. All error
bodies use the shape {"error": {"code": ..., "message": ...}}.
"""

from __future__ import annotations

import hashlib
import threading
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field

import anyio
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .corpus import Vocabulary, encode_utterance_text
from .inference import GenerationOptions, Session, generate_response
from .model import DialogueModel

MAX_CANDIDATES = 10
DEFAULT_SESSION_CAPACITY = 1000


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"code": code, "message": message}})


@dataclass
class ApiSession:
    """One chat session: shared inference Session plus last options snapshot."""

    session: Session
    options: dict = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)


@dataclass
class ServiceRuntime:
    """Loaded model shared by all request handlers."""

    model: DialogueModel
    vocabulary: Vocabulary
    checkpoint_hash: str = ""
    session_capacity: int = DEFAULT_SESSION_CAPACITY
    sessions: "OrderedDict[str, ApiSession]" = field(default_factory=OrderedDict)
    registry_lock: threading.Lock = field(default_factory=threading.Lock)

    @classmethod
    def from_checkpoint(cls, checkpoint_path, vocab_path=None, session_capacity: int = DEFAULT_SESSION_CAPACITY) -> "ServiceRuntime":
        from .training import load_model_for_inference

        model, vocabulary, _ = load_model_for_inference(checkpoint_path, vocab_path)
        with open(checkpoint_path, "rb") as f:
            digest = hashlib.sha256(f.read()).hexdigest()
        return cls(model=model, vocabulary=vocabulary, checkpoint_hash=digest,
                   session_capacity=session_capacity)

    def create_session(self) -> ApiSession:
        sess = Session(
            vocabulary=self.vocabulary,
            max_conv_length=self.model.config.max_conv_length,
            id=uuid.uuid4().hex,
        )
        wrapped = ApiSession(session=sess)
        with self.registry_lock:
            self.sessions[sess.id] = wrapped
            while len(self.sessions) > self.session_capacity:
                self.sessions.popitem(last=False)
        return wrapped

    def get_session(self, session_id: str) -> ApiSession:
        with self.registry_lock:
            wrapped = self.sessions.get(session_id)
            if wrapped is None:
                raise ApiError(404, "not_found", f"unknown session {session_id!r}")
            self.sessions.move_to_end(session_id)
            return wrapped


def _parse_options(body: dict, defaults: dict | None = None) -> dict:
    opts = dict(defaults or {})
    for key in ("temperature", "num_candidates", "latent_mode", "seed", "strategy"):
        if key in body and body[key] is not None:
            opts[key] = body[key]
    temperature = opts.get("temperature", 1.0)
    if not isinstance(temperature, (int, float)) or temperature <= 0:
        raise ApiError(422, "validation_error", "temperature must be > 0")
    num_candidates = opts.get("num_candidates", 1)
    if not isinstance(num_candidates, int) or not (1 <= num_candidates <= MAX_CANDIDATES):
        raise ApiError(422, "validation_error", f"num_candidates must be in [1, {MAX_CANDIDATES}]")
    latent_mode = opts.get("latent_mode", "sample")
    if latent_mode not in ("sample", "mean"):
        raise ApiError(422, "validation_error", "latent_mode must be 'sample' or 'mean'")
    strategy = opts.get("strategy", "greedy")
    if strategy not in ("greedy", "sample"):
        raise ApiError(422, "validation_error", "strategy must be 'greedy' or 'sample'")
    seed = opts.get("seed")
    if seed is not None and not isinstance(seed, int):
        raise ApiError(422, "validation_error", "seed must be an integer")
    return {
        "temperature": float(temperature),
        "num_candidates": num_candidates,
        "latent_mode": latent_mode,
        "strategy": strategy,
        "seed": seed,
    }


def _generate_for_session(runtime: ServiceRuntime, wrapped: ApiSession, options: dict) -> dict:
    opts = GenerationOptions(
        strategy=options["strategy"],
        temperature=options["temperature"],
        latent_mode=options["latent_mode"],
        num_candidates=options["num_candidates"],
        seed=options["seed"],
    )
    candidates = generate_response(
        wrapped.session.utterances(), runtime.model, runtime.vocabulary, opts
    )
    return {
        "candidates": [
            {"text": c.text, "tokens": c.tokens, "token_logprobs": c.token_logprobs}
            for c in candidates
        ],
        "chosen_index": 0,
        "latent_sources": candidates[0].latent_sources,
    }


def create_app(runtime: ServiceRuntime | None = None) -> FastAPI:
    app = FastAPI(title="csrr chat service")
    app.state.runtime = runtime

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return _error_response(exc.status, exc.code, exc.message)

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return _error_response(422, "validation_error", str(exc.errors()))

    def need_runtime() -> ServiceRuntime:
        rt = app.state.runtime
        if rt is None:
            raise ApiError(503, "model_not_loaded", "no checkpoint is loaded")
        return rt

    @app.get("/healthz")
    def healthz():
        rt = app.state.runtime
        if rt is None:
            return _error_response(503, "model_not_loaded", "no checkpoint is loaded")
        return {"status": "ok", "checkpoint_hash": rt.checkpoint_hash}

    @app.post("/sessions", status_code=201)
    def create_session():
        rt = need_runtime()
        wrapped = rt.create_session()
        return {"id": wrapped.session.id}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        rt = need_runtime()
        wrapped = rt.get_session(session_id)
        with wrapped.lock:
            history = [
                {"speaker": turn.speaker, "text": turn.utterance.raw_text}
                for turn in wrapped.session.history
            ]
        return {"id": session_id, "history": history}

    @app.post("/sessions/{session_id}/messages")
    async def post_message(session_id: str, request: Request):
        rt = need_runtime()
        wrapped = rt.get_session(session_id)
        body = await request.json() if await _has_body(request) else {}
        text = body.get("text")
        if not isinstance(text, str) or not text.strip():
            raise ApiError(422, "validation_error", "text must be a nonempty string")
        options = _parse_options(body)
        return await anyio.to_thread.run_sync(_handle_message, rt, wrapped, text, options)

    @app.post("/sessions/{session_id}/resample")
    async def resample(session_id: str, request: Request):
        rt = need_runtime()
        wrapped = rt.get_session(session_id)
        body = await request.json() if await _has_body(request) else {}
        return await anyio.to_thread.run_sync(_handle_resample, rt, wrapped, body)

    return app


async def _has_body(request: Request) -> bool:
    return bool(await request.body())


def _handle_message(rt: ServiceRuntime, wrapped: ApiSession, text: str, options: dict) -> dict:
    with wrapped.lock:  # FIFO per session
        sess = wrapped.session
        sess.append("user", encode_utterance_text(text, rt.vocabulary, rt.model.config.pad_length))
        result = _generate_for_session(rt, wrapped, options)
        chosen = result["candidates"][result["chosen_index"]]
        sess.append(
            "model",
            encode_utterance_text(chosen["text"], rt.vocabulary, rt.model.config.pad_length),
        )
        wrapped.options = options
        return result


def _handle_resample(rt: ServiceRuntime, wrapped: ApiSession, body: dict) -> dict:
    with wrapped.lock:
        sess = wrapped.session
        if not sess.history or sess.history[-1].speaker != "model":
            raise ApiError(409, "conflict", "no model turn to resample")
        options = _parse_options(body, defaults={**wrapped.options, "seed": None})
        old_last = sess.history.pop()
        try:
            result = _generate_for_session(rt, wrapped, options)
        except Exception:
            sess.history.append(old_last)
            raise
        chosen = result["candidates"][result["chosen_index"]]
        sess.append(
            "model",
            encode_utterance_text(chosen["text"], rt.vocabulary, rt.model.config.pad_length),
        )
        return result
