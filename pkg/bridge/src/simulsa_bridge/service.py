"""FastAPI app implementing the scoring wire protocol.

Routes:
    POST /v1/score_next -> {"candidate_logprob", "strictly_greater_count",
                            "eos_logprob", "vocab_size"}
    POST /v1/generate   -> {"tokens", "finished"}
    GET  /healthz       -> {"status": "ok", "vocab_size": int}

Every error body is {"error": str}: 400 for malformed requests or unknown
tokens, 413 for over-long audio, 500 for model failures.  Decoding is
greedy and stateless per request; identical requests get identical
responses.
"""

from __future__ import annotations

import math

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .adapters import AdapterError, ModelAdapter, UnknownToken
from .config import BridgeConfig
from .wav import AudioPayloadError, decode_b64_wav, to_model_waveform

# float32 softmax tails can underflow to exactly 0; clamp before log so
# logprobs stay finite as the wire contract requires
_MIN_PROB = 1e-300


class ScoreBody(BaseModel):
    prompt: str
    audio_b64_wav: str
    prefix_tokens: list[str] = Field(default_factory=list)
    candidate_token: str = Field(min_length=1)


class GenerateBody(BaseModel):
    prompt: str
    audio_b64_wav: str
    prefix_tokens: list[str] = Field(default_factory=list)
    max_new_tokens: int = Field(ge=1)


class RequestProblem(Exception):
    def __init__(self, status_code: int, message: str) -> None:
        super().__init__(message)
        self.status_code = status_code
        self.message = message


def create_app(adapter: ModelAdapter, config: BridgeConfig | None = None) -> FastAPI:
    config = config or BridgeConfig()
    app = FastAPI(title="simulsa-bridge", version="0.1.0")

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": f"malformed body: {exc.errors()}"})

    @app.exception_handler(RequestProblem)
    async def on_request_problem(request: Request, exc: RequestProblem):
        return JSONResponse(status_code=exc.status_code, content={"error": exc.message})

    @app.exception_handler(AdapterError)
    async def on_adapter_error(request: Request, exc: AdapterError):
        return JSONResponse(status_code=500, content={"error": str(exc)})

    def decode_audio(payload: str) -> np.ndarray:
        try:
            samples, rate = decode_b64_wav(payload)
        except AudioPayloadError as exc:
            raise RequestProblem(400, str(exc)) from exc
        if len(samples) / rate > config.max_audio_s:
            raise RequestProblem(
                413, f"audio longer than the {config.max_audio_s}s limit"
            )
        return to_model_waveform(samples, rate, adapter.expected_sample_rate)

    def distribution(prompt: str, waveform: np.ndarray, prefix: list[str]) -> np.ndarray:
        try:
            probs = np.asarray(
                adapter.next_token_probs(prompt, waveform, prefix), dtype=np.float64
            )
        except UnknownToken as exc:
            raise RequestProblem(400, str(exc)) from exc
        if probs.ndim != 1 or len(probs) != adapter.vocab_size:
            raise AdapterError(
                f"adapter returned shape {probs.shape}, expected ({adapter.vocab_size},)"
            )
        return probs

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "vocab_size": int(adapter.vocab_size)}

    @app.post("/v1/score_next")
    async def score_next(body: ScoreBody):
        waveform = decode_audio(body.audio_b64_wav)
        candidate_id = adapter.token_id(body.candidate_token)
        if candidate_id is None:
            raise RequestProblem(400, f"unknown candidate token {body.candidate_token!r}")
        probs = distribution(body.prompt, waveform, body.prefix_tokens)
        p_candidate = float(probs[candidate_id])
        # strict inequality: ties do not outrank the candidate
        strictly_greater = int(np.count_nonzero(probs > p_candidate))
        return {
            "candidate_logprob": math.log(max(p_candidate, _MIN_PROB)),
            "strictly_greater_count": strictly_greater,
            "eos_logprob": math.log(max(float(probs[adapter.eos_id]), _MIN_PROB)),
            "vocab_size": int(adapter.vocab_size),
        }

    @app.post("/v1/generate")
    async def generate(body: GenerateBody):
        waveform = decode_audio(body.audio_b64_wav)
        sequence = list(body.prefix_tokens)
        tokens: list[str] = []
        finished = False  # budget exhaustion leaves the continuation unfinished
        for _ in range(body.max_new_tokens):
            probs = distribution(body.prompt, waveform, sequence)
            top = int(np.argmax(probs))  # first index wins ties: deterministic
            if top == adapter.eos_id:
                finished = True
                break
            token = adapter.token_string(top)
            tokens.append(token)
            sequence.append(token)
        return {"tokens": tokens, "finished": finished}

    return app
