"""HTTP/JSON client for an external next-token scoring service.

Wire protocol (all bodies JSON, audio as base64 16-bit PCM mono WAV):

    POST /v1/score_next {"prompt", "audio_b64_wav", "prefix_tokens", "candidate_token"}
        -> 200 {"candidate_logprob", "strictly_greater_count", "eos_logprob", "vocab_size"}
    POST /v1/generate   {"prompt", "audio_b64_wav", "prefix_tokens", "max_new_tokens"}
        -> 200 {"tokens", "finished"}

Errors come back as 4xx with {"error": str}.  Transport failures and 5xx
map to BackendUnavailable, malformed 200 bodies to ProtocolViolation, and
audio rejections (413 or an audio-flavoured 4xx) to AudioDecode.
"""

from __future__ import annotations

import os
import threading
from typing import Optional

import httpx

from .audio import clip_to_b64_wav
from .backend import GenerateRequest, ScoreRequest
from .domain import AudioDecode, BackendUnavailable, ProtocolViolation, TokenScore

TOKEN_ENV_VAR = "SIMULSA_BACKEND_TOKEN"


class HttpBackend:
    """Thread-safe client with a configurable in-flight request cap."""

    def __init__(
        self,
        base_url: str,
        *,
        token: Optional[str] = None,
        timeout: float = 60.0,
        max_concurrency: int = 4,
    ) -> None:
        if max_concurrency < 1:
            raise ValueError(f"max_concurrency must be >= 1, got {max_concurrency}")
        headers = {}
        token = token if token is not None else os.environ.get(TOKEN_ENV_VAR)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(base_url=base_url.rstrip("/"), headers=headers, timeout=timeout)
        self._gate = threading.BoundedSemaphore(max_concurrency)

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "HttpBackend":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def provider_for(self, sample_id: str) -> "HttpBackend":
        return self

    def _post(self, path: str, body: dict) -> dict:
        try:
            with self._gate:
                response = self._client.post(path, json=body)
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"{path}: {exc}") from exc
        if response.status_code >= 500:
            raise BackendUnavailable(f"{path}: server error {response.status_code}")
        if response.status_code >= 400:
            try:
                message = response.json().get("error", response.text)
            except ValueError:
                message = response.text
            if response.status_code == 413 or "audio" in str(message).lower():
                raise AudioDecode(f"{path}: {response.status_code} {message}")
            raise ProtocolViolation(f"{path}: {response.status_code} {message}")
        try:
            payload = response.json()
        except ValueError as exc:
            raise ProtocolViolation(f"{path}: non-JSON response body") from exc
        if not isinstance(payload, dict):
            raise ProtocolViolation(f"{path}: expected a JSON object, got {type(payload).__name__}")
        return payload

    def score_next(self, req: ScoreRequest) -> TokenScore:
        payload = self._post(
            "/v1/score_next",
            {
                "prompt": req.prompt,
                "audio_b64_wav": clip_to_b64_wav(req.audio),
                "prefix_tokens": list(req.prefix_tokens),
                "candidate_token": req.candidate_token,
            },
        )
        try:
            score = TokenScore(
                candidate_logprob=float(payload["candidate_logprob"]),
                strictly_greater_count=int(payload["strictly_greater_count"]),
                eos_logprob=float(payload["eos_logprob"]),
                vocab_size=int(payload["vocab_size"]),
            )
        except ProtocolViolation:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolViolation(f"/v1/score_next: malformed body: {exc}") from exc
        return score

    def generate(self, req: GenerateRequest) -> tuple[list[str], bool]:
        payload = self._post(
            "/v1/generate",
            {
                "prompt": req.prompt,
                "audio_b64_wav": clip_to_b64_wav(req.audio),
                "prefix_tokens": list(req.prefix_tokens),
                "max_new_tokens": req.max_new_tokens,
            },
        )
        try:
            tokens = payload["tokens"]
            finished = payload["finished"]
        except KeyError as exc:
            raise ProtocolViolation(f"/v1/generate: missing field {exc}") from exc
        if (
            not isinstance(tokens, list)
            or not all(isinstance(t, str) for t in tokens)
            or not isinstance(finished, bool)
        ):
            raise ProtocolViolation("/v1/generate: tokens must be [str] and finished a bool")
        return tokens, finished


def healthcheck(base_url: str, *, timeout: float = 10.0) -> dict:
    """GET /healthz; returns the parsed body or raises BackendUnavailable."""
    try:
        response = httpx.get(base_url.rstrip("/") + "/healthz", timeout=timeout)
        response.raise_for_status()
        payload = response.json()
    except (httpx.HTTPError, ValueError) as exc:
        raise BackendUnavailable(f"/healthz: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("status") != "ok":
        raise ProtocolViolation(f"/healthz: unexpected body {payload!r}")
    if not isinstance(payload.get("vocab_size"), int):
        raise ProtocolViolation("/healthz: vocab_size missing or not an int")
    return payload
