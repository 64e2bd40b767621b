"""Simultaneous speech-translation self-augmentation and streaming evaluation.

Pipeline: truncate offline speech at points drawn from a decaying
distribution, align each reference translation to its longest
audio-supported prefix against a pluggable next-token backend, mix the
truncated pairs into the offline corpus, and evaluate streaming quality
with chunked decoding plus rollback.
"""

from .domain import (
    AudioClip,
    PairKind,
    SpeechTextPair,
    StreamConfig,
    TokenScore,
    TruncationFamily,
    TruncationPolicy,
    validate_policy,
)

__all__ = [
    "AudioClip",
    "PairKind",
    "SpeechTextPair",
    "StreamConfig",
    "TokenScore",
    "TruncationFamily",
    "TruncationPolicy",
    "validate_policy",
]

__version__ = "0.1.0"
