"""Service configuration."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BridgeConfig:
    """Which model to serve and the service limits.

    model_id is either "toy" (built-in scripted model), "toy:FILE" (scripted
    model from a JSON spec), or a HuggingFace checkpoint id.
    """

    model_id: str = "toy"
    device: str = "cpu"
    max_audio_s: float = 120.0
    port: int = 8080
    host: str = "127.0.0.1"

    def __post_init__(self) -> None:
        if not 0 < self.port < 65536:
            raise ValueError(f"port {self.port} out of range")
        if self.max_audio_s <= 0:
            raise ValueError(f"max_audio_s must be positive, got {self.max_audio_s}")
