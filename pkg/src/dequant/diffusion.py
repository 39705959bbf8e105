"""Forward corruption map and the three reverse samplers (DDPM, DDIM, midway-infilling).

All samplers are pure functions of their inputs and the RNG: the same seed
gives bit-identical outputs. Stochastic samplers split the supplied generator
into two substreams via `rng.spawn(2)`: substream 0 drives the sampling
branch (initial draw, then one noise per step) and substream 1 the infilling
branch. `ddpm_sample` performs the same split and uses substream 0 only, so
`midway_infilling(gamma=0, tau=T)` consumes exactly the same draws and is
bit-identical to it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoiser import Denoiser
from .schedule import NoiseSchedule


@dataclass
class SamplerConfig:
    tau: int = 100        # midway step: infilling starts at this level
    gamma: float = 0.3    # interpolation ratio toward the infilling branch
    steps: int = 50       # DDIM substep count
    seed: int = 0

    def validate(self, T: int):
        if not 0 < self.tau <= T:
            raise ValueError(f"tau must be in (0, {T}], got {self.tau}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")


def _check_shapes(a, b, what="tensors"):
    if a.shape != b.shape:
        raise ValueError(f"{what} shape mismatch: {a.shape} vs {b.shape}")


def forward_sample(s: NoiseSchedule, x0: np.ndarray, t: int, eps: np.ndarray) -> np.ndarray:
    """Corrupt x0 to step t: sqrt(ab_t) x0 + sqrt(1 - ab_t) eps."""
    _check_shapes(x0, eps, "x0/eps")
    ab = s.alpha_bar(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def ddpm_step(s: NoiseSchedule, d: Denoiser, x_t: np.ndarray, t: int,
              h, n: np.ndarray) -> np.ndarray:
    """One ancestral reverse step x_t -> x_{t-1}.

    (x_t - beta_t / sqrt(1 - ab_t) * eps_hat) / sqrt(1 - beta_t) + sqrt(beta_t) n.
    The caller supplies the injected noise n; it is forced to zero at t == 0.
    """
    if not 0 <= t < s.T:
        raise IndexError(f"step {t} out of range [0, {s.T})")
    _check_shapes(x_t, n, "x_t/noise")
    beta = float(s.betas[t])
    ab = s.alpha_bars[t]
    eps_hat = d.predict(x_t, np.sqrt(ab), h)
    _check_shapes(x_t, eps_hat, "x_t/eps_hat")
    mean = (x_t - beta / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(1.0 - beta)
    if t == 0:
        return mean
    return mean + np.sqrt(beta) * n


def ddpm_sample(s: NoiseSchedule, d: Denoiser, h, shape, rng) -> np.ndarray:
    """Full ancestral chain from x_{T-1} ~ N(0, I) down to x_0."""
    rng_x, _ = rng.spawn(2)  # substream 1 reserved for midway's infilling branch
    x = rng_x.standard_normal(shape)
    for t in range(s.T - 1, -1, -1):
        n = rng_x.standard_normal(shape) if t > 0 else np.zeros(shape)
        x = ddpm_step(s, d, x, t, h, n)
    return x


def ddim_step_indices(T: int, steps: int) -> np.ndarray:
    """Evenly spaced descending subset of [0, T) starting at T-1.

    The chain must start at the terminal level, so T-1 is always included;
    steps=1 collapses to a one-shot x0 prediction from there.
    """
    if not 1 <= steps <= T:
        raise ValueError(f"steps must be in [1, {T}], got {steps}")
    ts = np.round(np.linspace(T - 1, 0, num=steps)).astype(int)
    return np.unique(ts)[::-1]


def ddim_sample(s: NoiseSchedule, d: Denoiser, h, shape, steps: int, rng) -> np.ndarray:
    """Deterministic (eta=0) DDIM over an evenly spaced step subset.

    Only the initial draw consumes RNG; the trajectory follows the predicted
    x0 at each visited step.
    """
    ts = ddim_step_indices(s.T, steps)
    x = rng.standard_normal(shape)
    for i, t in enumerate(ts):
        ab = s.alpha_bars[t]
        eps_hat = d.predict(x, np.sqrt(ab), h)
        x0_pred = (x - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)
        ab_prev = s.alpha_bars[ts[i + 1]] if i + 1 < len(ts) else 1.0
        x = np.sqrt(ab_prev) * x0_pred + np.sqrt(1.0 - ab_prev) * eps_hat
    return x


def midway_infilling(s: NoiseSchedule, d: Denoiser, h: np.ndarray,
                     cfg: SamplerConfig, rng) -> np.ndarray:
    """Two-branch conditional sampling from a midway step.

    The infilling branch starts at s_tau = h (the upsampled, frame-scaled
    condition, already at latent shape); the sampling branch starts at
    Gaussian noise interpolated with s_tau by gamma. Both branches take
    ancestral steps conditioned on h; after every step the sampling branch is
    pulled toward the infilling branch by gamma. Per-branch RNG substreams
    (see module docstring) make gamma=0 reduce bit-exactly to ddpm_sample and
    gamma=1 independent of the sampling branch's draws.
    """
    cfg.validate(s.T)
    h = np.asarray(h, dtype=np.float64)
    rng_x, rng_s = rng.spawn(2)
    shape = h.shape
    g = cfg.gamma
    s_br = h.copy()
    x = rng_x.standard_normal(shape)
    x = (1.0 - g) * x + g * s_br
    for t in range(cfg.tau - 1, -1, -1):
        if t > 0:
            n_s = rng_s.standard_normal(shape)
            n_x = rng_x.standard_normal(shape)
        else:
            n_s = n_x = np.zeros(shape)
        s_br = ddpm_step(s, d, s_br, t, h, n_s)
        x = ddpm_step(s, d, x, t, h, n_x)
        x = (1.0 - g) * x + g * s_br
    return x


def training_loss(s: NoiseSchedule, d: Denoiser, z0: np.ndarray, t: int,
                  h, eps: np.ndarray) -> float:
    """Mean squared error between eps and the denoiser's prediction at step t."""
    z_t = forward_sample(s, z0, t, eps)
    pred = d.predict(z_t, np.sqrt(s.alpha_bar(t)), h)
    _check_shapes(eps, pred, "eps/prediction")
    return float(np.mean((eps - pred) ** 2))
