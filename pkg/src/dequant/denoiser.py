"""Noise predictors for the reverse diffusion process.

Two implementations of the same `predict` contract:

* `GaussianOracleDenoiser` -- the closed-form Bayes-optimal predictor for
  scalar Gaussian data, used to verify samplers without any training.
* `ConvDenoiser` -- a small residual 1-D conv stack with hand-written
  backprop, conditioned by stacking the condition tensor onto the input
  channels and by a sinusoidal embedding of sqrt(alpha_bar) added per channel.

Latents are float64 arrays of shape (channels, frames); batched internals use
(batch, channels, frames).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .schedule import NoiseSchedule

TIME_FEATURES = 16


class Denoiser:
    """Interface: predict the noise component of a corrupted latent."""

    def predict(self, x_t: np.ndarray, sqrt_alpha_bar: float, h) -> np.ndarray:
        raise NotImplementedError


class GaussianOracleDenoiser(Denoiser):
    """Exact epsilon-predictor for elementwise data x0 ~ N(mu, sigma^2).

    Ignores the condition. Given x_t = sqrt(ab) x0 + sqrt(1-ab) eps, the
    posterior mean of x0 is mu + sqrt(ab) sigma^2 / (ab sigma^2 + 1 - ab)
    * (x_t - sqrt(ab) mu), and the implied noise estimate follows from
    inverting the forward map at that mean.
    """

    def __init__(self, mu: float, sigma: float, schedule: NoiseSchedule | None = None):
        if sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {sigma}")
        self.mu = mu
        self.sigma = sigma
        self.schedule = schedule

    def predict(self, x_t, sqrt_alpha_bar, h=None):
        sab = float(sqrt_alpha_bar)
        ab = sab * sab
        var = self.sigma**2
        gain = sab * var / (ab * var + 1.0 - ab)
        x0_mean = self.mu + gain * (x_t - sab * self.mu)
        return (x_t - sab * x0_mean) / np.sqrt(1.0 - ab)


def time_features(sqrt_alpha_bar) -> np.ndarray:
    """Sinusoidal features of sqrt(alpha_bar), shape (..., TIME_FEATURES)."""
    s = np.atleast_1d(np.asarray(sqrt_alpha_bar, dtype=np.float64))
    freqs = np.pi * 2.0 ** np.arange(TIME_FEATURES // 2)
    ang = s[..., None] * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


class ConvDenoiser(Denoiser):
    """Residual conv stack epsilon-predictor.

    Input is [x_t ; h] stacked channelwise (2nd part absent when
    cond_channels == 0). After the stem conv the projected time embedding is
    added per channel; each block is conv-softplus-conv with a skip (1x1
    projection when the width changes); a final conv maps back to the latent
    width. The last conv is linear so predictions are unbounded.
    """

    def __init__(self, latent_channels, cond_channels=0, widths=(16, 32, 32),
                 kernel=5, seed=0):
        self.latent_channels = latent_channels
        self.cond_channels = cond_channels
        self.widths = tuple(widths)
        self.kernel = kernel
        self.seed = seed

        rng = np.random.default_rng(seed)
        cin = latent_channels + cond_channels
        self.conv_in = nn.Conv1D(cin, widths[0], kernel, rng=rng)
        self.time_proj = nn.Linear(TIME_FEATURES, widths[0], rng=rng)
        self.blocks = []
        for a, b in zip(widths[:-1], widths[1:]):
            conv_a = nn.Conv1D(a, b, kernel, rng=rng)
            conv_b = nn.Conv1D(b, b, kernel, rng=rng)
            skip = nn.Conv1D(a, b, 1, rng=rng) if a != b else None
            self.blocks.append((conv_a, conv_b, skip))
        self.conv_out = nn.Conv1D(widths[-1], latent_channels, kernel, rng=rng)
        self._cache = None

    # -- parameter plumbing ------------------------------------------------

    def layers(self):
        out = [self.conv_in, self.time_proj]
        for conv_a, conv_b, skip in self.blocks:
            out += [conv_a, conv_b] + ([skip] if skip is not None else [])
        out.append(self.conv_out)
        return out

    def get_params(self):
        return nn.flatten_params(self.layers())

    def set_params(self, theta):
        nn.set_params(self.layers(), theta)

    def spec(self):
        return {
            "latent_channels": self.latent_channels,
            "cond_channels": self.cond_channels,
            "widths": list(self.widths),
            "kernel": self.kernel,
            "seed": self.seed,
        }

    # -- forward / backward ------------------------------------------------

    def forward(self, x, sqrt_ab, h=None):
        """Batched forward. x: (B, C, F); sqrt_ab: (B,); h: (B, Cc, F) or None."""
        if self.cond_channels:
            if h is None or h.shape[1] != self.cond_channels:
                raise ValueError("condition tensor with "
                                 f"{self.cond_channels} channels required")
            if h.shape[2] != x.shape[2]:
                raise ValueError(f"condition frames {h.shape[2]} != input frames {x.shape[2]}")
            u = np.concatenate([x, h], axis=1)
        else:
            u = x
        feats = time_features(sqrt_ab)
        z = self.conv_in.forward(u) + self.time_proj.forward(feats)[:, :, None]
        block_cache = []
        for conv_a, conv_b, skip in self.blocks:
            z_in = z
            s1 = nn.softplus(z_in)
            c1 = conv_a.forward(s1)
            c2 = conv_b.forward(nn.softplus(c1))
            z = (skip.forward(z_in) if skip is not None else z_in) + c2
            block_cache.append((z_in, c1))
        out = self.conv_out.forward(nn.softplus(z))
        self._cache = (block_cache, z)
        return out

    def backward(self, dout):
        """Gradient pass after `forward`; returns flat parameter gradient."""
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        block_cache, z_last = self._cache
        nn.zero_grads(self.layers())
        d = self.conv_out.backward(dout) * nn.softplus_grad(z_last)
        for (conv_a, conv_b, skip), (z_in, c1) in zip(
            reversed(self.blocks), reversed(block_cache)
        ):
            ds2 = conv_b.backward(d)
            ds1 = conv_a.backward(ds2 * nn.softplus_grad(c1))
            d_skip = skip.backward(d) if skip is not None else d
            d = ds1 * nn.softplus_grad(z_in) + d_skip
        dtemb = d.sum(axis=2)
        self.time_proj.backward(dtemb)
        self.conv_in.backward(d)
        self._cache = None
        return nn.flatten_grads(self.layers())

    def predict(self, x_t, sqrt_alpha_bar, h=None):
        xb = x_t[None]
        hb = None if h is None else np.asarray(h)[None]
        return self.forward(xb, np.array([float(sqrt_alpha_bar)]), hb)[0]


def gaussian_oracle(mu: float, sigma: float, schedule: NoiseSchedule | None = None) -> Denoiser:
    return GaussianOracleDenoiser(mu, sigma, schedule)


@dataclass
class TrainConfig:
    batch_size: int = 20
    learning_rate: float = 5e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_steps: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def mse_grad(pred, target):
    """d/dpred of mean((pred - target)^2)."""
    return 2.0 * (pred - target) / pred.size


def train_denoiser(data, conds, schedule: NoiseSchedule, cfg: TrainConfig,
                   model: ConvDenoiser | None = None, widths=(16, 32, 32),
                   kernel=5):
    """Fit a ConvDenoiser to predict the injected noise on clean latents.

    data: list of (C, F) latents, all the same shape. conds: matching list of
    condition tensors (or None for unconditional training). Each step draws a
    batch, a uniform step index per item, and fresh Gaussian noise. Returns
    (model, loss_trace).
    """
    if not data:
        raise ValueError("empty dataset")
    data = [np.asarray(d, dtype=np.float64) for d in data]
    C, F = data[0].shape
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        cond_ch = 0 if conds is None else np.asarray(conds[0]).shape[0]
        model = ConvDenoiser(C, cond_ch, widths=widths, kernel=kernel, seed=cfg.seed)

    theta = model.get_params()
    state = nn.AdamState(theta.size)
    sqrt_ab = np.sqrt(schedule.alpha_bars)
    losses = []
    for _ in range(cfg.max_steps):
        idx = rng.integers(0, len(data), size=cfg.batch_size)
        z0 = np.stack([data[i] for i in idx])
        hb = None if conds is None else np.stack([np.asarray(conds[i]) for i in idx])
        t = rng.integers(0, schedule.T, size=cfg.batch_size)
        eps = rng.standard_normal(z0.shape)
        sab = sqrt_ab[t]
        z_t = sab[:, None, None] * z0 + np.sqrt(1.0 - sab**2)[:, None, None] * eps

        model.set_params(theta)
        pred = model.forward(z_t, sab, hb)
        losses.append(float(np.mean((pred - eps) ** 2)))
        grad = model.backward(mse_grad(pred, eps))
        theta = nn.adam_step(theta, grad, state, cfg.learning_rate,
                             cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    model.set_params(theta)
    return model, np.array(losses)
