"""Diffusion noise schedule: per-step variances beta_t and cumulative products alpha_bar_t.

Steps are 0-based: t ranges over [0, T). alpha_bars[t] = prod_{i<=t} (1 - betas[i]),
so alpha_bars[0] = 1 - betas[0]. All values are precomputed in float64 at
construction; a schedule is immutable and safe to share between samplers.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    betas: np.ndarray       # shape (T,), strictly in (0, 1), non-decreasing
    alpha_bars: np.ndarray  # shape (T,), strictly decreasing, in (0, 1)

    def __post_init__(self):
        self.betas.setflags(write=False)
        self.alpha_bars.setflags(write=False)

    def alpha_bar(self, t: int) -> float:
        """Cumulative signal-retention product at step t (0-based)."""
        if not 0 <= t < self.T:
            raise IndexError(f"step {t} out of range [0, {self.T})")
        return float(self.alpha_bars[t])

    def fingerprint(self) -> str:
        """Stable hash of the schedule values, stored in checkpoints."""
        h = hashlib.sha256()
        h.update(struct.pack("<q", self.T))
        h.update(self.betas.astype("<f8").tobytes())
        return h.hexdigest()[:16]


def linear_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linearly spaced betas from beta_start to beta_end over T steps.

    With T=1 the single beta is beta_start.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start < 1.0 and 0.0 < beta_end < 1.0):
        raise ValueError(f"beta bounds must lie in (0, 1), got ({beta_start}, {beta_end})")
    if beta_start > beta_end:
        raise ValueError(f"beta_start {beta_start} > beta_end {beta_end}")

    if T == 1:
        betas = np.array([beta_start], dtype=np.float64)
    else:
        betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha_bars = np.cumprod(1.0 - betas)
    return NoiseSchedule(T=T, betas=betas, alpha_bars=alpha_bars)
