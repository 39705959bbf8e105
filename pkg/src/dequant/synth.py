"""Synthetic speech-like test signals.

Each clip is a stack of harmonics over a slowly drifting fundamental,
modulated by a random low-bandwidth amplitude envelope, plus an optional
noise floor. Generation is fully determined by the spec's seed, and every
clip is RMS-normalized to a level drawn inside [0.05, 0.5].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SynthSpec:
    sample_rate: int = 16000
    f0_min: float = 100.0
    f0_max: float = 250.0
    harmonics: int = 8
    envelope_hz: float = 6.0   # bandwidth of the amplitude envelope
    noise_floor: float = 0.0   # noise RMS relative to harmonic RMS
    duration: float = 0.32
    rms_min: float = 0.1
    rms_max: float = 0.3
    seed: int = 0

    def validate(self):
        nyquist = self.sample_rate / 2.0
        if not 0 < self.f0_min <= self.f0_max:
            raise ValueError("need 0 < f0_min <= f0_max")
        if self.f0_max * self.harmonics >= nyquist:
            raise ValueError(f"f0_max * harmonics = {self.f0_max * self.harmonics} "
                             f"exceeds Nyquist {nyquist}")
        if self.harmonics < 1 or self.duration <= 0:
            raise ValueError("need harmonics >= 1 and duration > 0")
        if not 0 < self.rms_min <= self.rms_max:
            raise ValueError("need 0 < rms_min <= rms_max")


def _smooth_noise(rng, n, sample_rate, bandwidth_hz):
    """Low-bandwidth random curve: sum of a few random slow sinusoids."""
    t = np.arange(n) / sample_rate
    out = np.zeros(n)
    for _ in range(4):
        f = rng.uniform(0.2, max(bandwidth_hz, 0.3))
        out += rng.normal() * np.sin(2.0 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return out / 4.0


def synth_clip(spec: SynthSpec, rng) -> np.ndarray:
    n = int(round(spec.duration * spec.sample_rate))
    t = np.arange(n) / spec.sample_rate

    log_lo, log_hi = np.log(spec.f0_min), np.log(spec.f0_max)
    drift = _smooth_noise(rng, n, spec.sample_rate, spec.envelope_hz / 2.0)
    center = rng.uniform(log_lo, log_hi)
    f0 = np.exp(np.clip(center + 0.15 * drift, log_lo, log_hi))
    phase = 2.0 * np.pi * np.cumsum(f0) / spec.sample_rate

    x = np.zeros(n)
    for k in range(1, spec.harmonics + 1):
        amp = rng.uniform(0.2, 1.0) / k
        x += amp * np.sin(k * phase + rng.uniform(0, 2 * np.pi))

    env = _smooth_noise(rng, n, spec.sample_rate, spec.envelope_hz)
    x *= 0.5 + 0.5 / (1.0 + np.exp(-2.0 * env))  # smooth gain in [0.5, 1]

    if spec.noise_floor > 0:
        x_rms = np.sqrt(np.mean(x**2))
        x += spec.noise_floor * x_rms * rng.standard_normal(n)

    target = rng.uniform(spec.rms_min, spec.rms_max)
    return x * (target / np.sqrt(np.mean(x**2)))


def synth_dataset(spec: SynthSpec, n: int):
    """n deterministic clips; the same (spec.seed, n) gives identical data."""
    if n < 1:
        raise ValueError("n must be >= 1")
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    return [synth_clip(spec, rng) for _ in range(n)]
