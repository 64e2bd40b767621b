"""HTTP bridge exposing an audio-language model as a next-token scoring service.

Implements the wire protocol the streaming-translation toolkit consumes:
POST /v1/score_next, POST /v1/generate, GET /healthz, with audio payloads
as base64 16-bit PCM mono WAV.
"""

from .config import BridgeConfig
from .service import create_app

__all__ = ["BridgeConfig", "create_app"]

__version__ = "0.1.0"
