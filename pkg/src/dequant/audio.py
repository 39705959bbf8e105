"""WAV file I/O: RIFF PCM signed 16-bit, mono.

Thin wrappers over the stdlib `wave` module, converting between int16 PCM
and float64 in [-1, 1]. Writing clips out-of-range samples.
"""

from __future__ import annotations

import wave

import numpy as np

PCM_SCALE = 32767.0


def read_wav(path):
    """Returns (samples float64 in [-1, 1], sample_rate)."""
    with wave.open(str(path), "rb") as w:
        if w.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
        if w.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono, got {w.getnchannels()} channels")
        if w.getcomptype() != "NONE":
            raise ValueError(f"{path}: compressed WAV not supported")
        n = w.getnframes()
        if n == 0:
            raise ValueError(f"{path}: empty WAV")
        raw = w.readframes(n)
        rate = w.getframerate()
    pcm = np.frombuffer(raw, dtype="<i2")
    return pcm.astype(np.float64) / PCM_SCALE, rate


def write_wav(path, samples, sample_rate: int):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1 or samples.size == 0:
        raise ValueError("samples must be a non-empty 1-D array")
    pcm = np.clip(np.round(samples * PCM_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(pcm.tobytes())
