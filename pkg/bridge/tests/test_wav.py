import base64

import numpy as np
import pytest

from simulsa_bridge.wav import AudioPayloadError, decode_b64_wav, to_model_waveform

from conftest import make_b64_wav


def test_decode_round_trip():
    samples, rate = decode_b64_wav(make_b64_wav(1000))
    assert rate == 16000
    assert len(samples) == 16000
    assert samples.dtype == np.int16


def test_stereo_downmix():
    samples, rate = decode_b64_wav(make_b64_wav(100, channels=2))
    assert len(samples) == 1600


def test_rejects_bad_base64():
    with pytest.raises(AudioPayloadError):
        decode_b64_wav("@@not-base64@@")


def test_rejects_non_wav():
    payload = base64.b64encode(b"hello world, not audio").decode("ascii")
    with pytest.raises(AudioPayloadError):
        decode_b64_wav(payload)


def test_resample_preserves_duration():
    samples, rate = decode_b64_wav(make_b64_wav(500, rate=8000))
    waveform = to_model_waveform(samples, rate, 16000)
    assert len(waveform) == 8000  # 0.5 s at 16 kHz
    assert waveform.dtype == np.float32
    assert np.all(np.abs(waveform) <= 1.0)


def test_same_rate_passthrough():
    samples, rate = decode_b64_wav(make_b64_wav(250))
    waveform = to_model_waveform(samples, rate, 16000)
    assert len(waveform) == len(samples)
