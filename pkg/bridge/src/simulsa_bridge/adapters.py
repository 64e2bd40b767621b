"""Model adapters: anything that maps (prompt, waveform, prefix) to a
next-token probability vector over its own vocabulary.

The scripted adapter is a deterministic stand-in with an explicit
audio-readiness schedule, good for integration tests and for driving the
full pipeline without a GPU.  The checkpoint adapter wraps a HuggingFace
audio-language model; it is loaded lazily and needs the `model` extra.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence, runtime_checkable

import numpy as np


class AdapterError(RuntimeError):
    """Model-side failure while computing a distribution."""


class UnknownToken(ValueError):
    """A request token is not in the model's vocabulary."""


@runtime_checkable
class ModelAdapter(Protocol):
    vocab_size: int
    expected_sample_rate: int
    eos_id: int

    def token_id(self, token: str) -> Optional[int]: ...

    def token_string(self, token_id: int) -> str: ...

    def next_token_probs(
        self, prompt: str, waveform: np.ndarray, prefix_tokens: Sequence[str]
    ) -> np.ndarray: ...


# ---------------------------------------------------------------------------
# Scripted adapter
# ---------------------------------------------------------------------------

_DEMO_SPEC = {
    "target_tokens": ["今", "天", "天", "气", "真", "好"],
    "ready_at_ms": [300, 600, 900, 1500, 2200, 3000],
    "high_prob": 0.9,
    "vocab_size": 1000,
}


@dataclass
class ScriptedAdapter:
    """Deterministic model: token j of the target becomes emittable once the
    audio covers ready_at_ms[j]; the next emittable token takes high_prob and
    the rest of the vocabulary shares the remainder uniformly."""

    target_tokens: tuple[str, ...]
    ready_at_ms: tuple[int, ...]
    high_prob: float = 0.9
    vocab_size: int = 1000
    expected_sample_rate: int = 16000
    eos_token: str = "<eos>"
    _token_to_id: dict = field(init=False, repr=False)
    _id_to_token: list = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.target_tokens = tuple(self.target_tokens)
        self.ready_at_ms = tuple(int(a) for a in self.ready_at_ms)
        if len(self.target_tokens) != len(self.ready_at_ms):
            raise ValueError("target_tokens and ready_at_ms must have equal length")
        if any(a > b for a, b in zip(self.ready_at_ms, self.ready_at_ms[1:])):
            raise ValueError("ready_at_ms must be non-decreasing")
        if not 0.0 < self.high_prob < 1.0:
            raise ValueError("high_prob must lie in (0, 1)")
        vocabulary = [self.eos_token]
        for token in self.target_tokens:
            if token not in vocabulary:
                vocabulary.append(token)
        filler = 0
        while len(vocabulary) < self.vocab_size:
            candidate = f"tok{filler}"
            filler += 1
            if candidate not in vocabulary:
                vocabulary.append(candidate)
        if len(vocabulary) > self.vocab_size:
            raise ValueError(
                f"vocab_size {self.vocab_size} too small for {len(vocabulary)} distinct tokens"
            )
        self._id_to_token = vocabulary
        self._token_to_id = {token: i for i, token in enumerate(vocabulary)}

    @property
    def eos_id(self) -> int:
        return 0

    def token_id(self, token: str) -> Optional[int]:
        return self._token_to_id.get(token)

    def token_string(self, token_id: int) -> str:
        return self._id_to_token[token_id]

    def _next_emittable(self, duration_ms: int, prefix_tokens: Sequence[str]) -> int:
        """Vocabulary id of the argmax token for this state."""
        i = len(prefix_tokens)
        if i >= len(self.target_tokens) or tuple(prefix_tokens) != self.target_tokens[:i]:
            return self.eos_id
        if self.ready_at_ms[i] <= duration_ms:
            return self._token_to_id[self.target_tokens[i]]
        return self.eos_id

    def next_token_probs(
        self, prompt: str, waveform: np.ndarray, prefix_tokens: Sequence[str]
    ) -> np.ndarray:
        duration_ms = int(len(waveform) * 1000 // self.expected_sample_rate)
        argmax = self._next_emittable(duration_ms, prefix_tokens)
        probs = np.full(self.vocab_size, (1.0 - self.high_prob) / (self.vocab_size - 1))
        probs[argmax] = self.high_prob
        return probs

    @classmethod
    def from_spec(cls, spec: dict) -> "ScriptedAdapter":
        return cls(
            target_tokens=tuple(spec["target_tokens"]),
            ready_at_ms=tuple(spec["ready_at_ms"]),
            high_prob=float(spec.get("high_prob", 0.9)),
            vocab_size=int(spec.get("vocab_size", 1000)),
        )


# ---------------------------------------------------------------------------
# Checkpoint adapter
# ---------------------------------------------------------------------------

class CheckpointAdapter:
    """Wraps an audio-language checkpoint (e.g. an audio-conditioned chat
    model) behind the adapter interface.

    One forward pass per distribution: the prompt and resampled waveform go
    through the processor, the committed prefix is appended as token ids,
    and the last-position logits are softmaxed in float64.  Token strings
    on the wire are the tokenizer's own piece strings.  Requires the
    `model` extra and a local or downloadable checkpoint.
    """

    def __init__(self, model_id: str, device: str = "cpu") -> None:
        try:
            import torch
            from transformers import AutoProcessor, Qwen2AudioForConditionalGeneration
        except ImportError as exc:
            raise AdapterError(
                "checkpoint adapter needs the 'model' extra (transformers + torch)"
            ) from exc
        self._torch = torch
        self.processor = AutoProcessor.from_pretrained(model_id)
        self.model = Qwen2AudioForConditionalGeneration.from_pretrained(
            model_id,
            dtype="auto",
        ).to(device)
        self.model.eval()
        self.device = device
        tokenizer = self.processor.tokenizer
        self.vocab_size = int(self.model.get_output_embeddings().weight.shape[0])
        eos = self.model.generation_config.eos_token_id
        self.eos_id = int(eos[0] if isinstance(eos, (list, tuple)) else eos)
        self.expected_sample_rate = int(
            getattr(self.processor.feature_extractor, "sampling_rate", 16000)
        )
        self._tokenizer = tokenizer

    def token_id(self, token: str) -> Optional[int]:
        token_id = self._tokenizer.convert_tokens_to_ids(token)
        unk = self._tokenizer.unk_token_id
        if token_id is None or (unk is not None and token_id == unk and token != self._tokenizer.unk_token):
            return None
        return int(token_id)

    def token_string(self, token_id: int) -> str:
        return self._tokenizer.convert_ids_to_tokens(int(token_id))

    def next_token_probs(
        self, prompt: str, waveform: np.ndarray, prefix_tokens: Sequence[str]
    ) -> np.ndarray:
        torch = self._torch
        try:
            inputs = self.processor(
                text=prompt,
                audio=[waveform],
                sampling_rate=self.expected_sample_rate,
                return_tensors="pt",
            )
            if prefix_tokens:
                ids = []
                for token in prefix_tokens:
                    token_id = self.token_id(token)
                    if token_id is None:
                        raise UnknownToken(f"prefix token {token!r} not in vocabulary")
                    ids.append(token_id)
                prefix = torch.tensor([ids], dtype=inputs["input_ids"].dtype)
                inputs["input_ids"] = torch.cat([inputs["input_ids"], prefix], dim=1)
                inputs["attention_mask"] = torch.cat(
                    [inputs["attention_mask"], torch.ones_like(prefix)], dim=1
                )
            inputs = inputs.to(self.device)
            with torch.no_grad():
                logits = self.model(**inputs).logits[0, -1]
            probs = torch.softmax(logits.to(torch.float64), dim=-1).cpu().numpy()
        except UnknownToken:
            raise
        except Exception as exc:
            raise AdapterError(f"forward pass failed: {exc}") from exc
        return probs


def load_adapter(model_id: str, device: str = "cpu") -> ModelAdapter:
    if model_id == "toy":
        return ScriptedAdapter.from_spec(_DEMO_SPEC)
    if model_id.startswith("toy:"):
        spec = json.loads(Path(model_id[len("toy:"):]).read_text(encoding="utf-8"))
        return ScriptedAdapter.from_spec(spec)
    return CheckpointAdapter(model_id, device=device)
