"""Waveform autoencoders and the condition pathway.

Two conv autoencoders share one implementation: the continuous path (stride
[8] by default, wide latent) whose latents are the diffusion state space, and
the discrete path (strides [2,4,5,8]) whose latents feed the RVQ. The
condition pathway embeds tokens, upsamples them onto the continuous latent
grid (learned transposed conv by default, nearest-repeat fallback) and scales
every frame to [-1, 1].

Waveforms are 1-D float64 arrays; latents are (channels, frames).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .denoiser import TrainConfig, mse_grad
from .quantizer import RVQ, TokenSequence, rvq_decode


@dataclass
class AEConfig:
    strides: tuple = (8,)
    latent_dim: int = 16
    base_channels: int = 32
    kernel: int = 9       # context convs; downsampling convs use kernel == stride
    seed: int = 0

    def __post_init__(self):
        self.strides = tuple(int(s) for s in self.strides)
        if any(s < 1 for s in self.strides):
            raise ValueError("strides must be >= 1")

    @property
    def hop(self):
        return math.prod(self.strides)


def pad_to_multiple(x: np.ndarray, hop: int):
    """Right-pad with zeros to a multiple of hop; returns (padded, original length)."""
    n = len(x)
    if n == 0:
        raise ValueError("empty waveform")
    rem = (-n) % hop
    return (np.pad(x, (0, rem)), n) if rem else (np.asarray(x, dtype=np.float64), n)


class ConvAutoencoder:
    """Strided conv encoder mirrored by a transposed-conv decoder.

    Per stride: context conv (kernel, stride 1) -> softplus -> patch conv
    (kernel == stride). The decoder mirrors this with ConvTranspose1D, ending
    in a linear conv back to one channel, so a zero latent decodes to the
    output bias.
    """

    def __init__(self, cfg: AEConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        b, k = cfg.base_channels, cfg.kernel
        enc = [nn.Conv1D(1, b, k, rng=rng)]
        for s in cfg.strides:
            enc += [nn.Softplus(), nn.Conv1D(b, b, s, stride=s, rng=rng),
                    nn.Softplus(), nn.Conv1D(b, b, k, rng=rng)]
        enc += [nn.Softplus(), nn.Conv1D(b, cfg.latent_dim, 1, rng=rng)]
        dec = [nn.Conv1D(cfg.latent_dim, b, 1, rng=rng)]
        for s in reversed(cfg.strides):
            dec += [nn.Softplus(), nn.Conv1D(b, b, k, rng=rng),
                    nn.Softplus(), nn.ConvTranspose1D(b, b, s, rng=rng)]
        dec += [nn.Softplus(), nn.Conv1D(b, 1, k, rng=rng)]
        self.encoder = enc
        self.decoder = dec

    def layers(self):
        return self.encoder + self.decoder

    def get_params(self):
        return nn.flatten_params(self.layers())

    def set_params(self, theta):
        nn.set_params(self.layers(), theta)

    def spec(self):
        c = self.cfg
        return {"strides": list(c.strides), "latent_dim": c.latent_dim,
                "base_channels": c.base_channels, "kernel": c.kernel,
                "seed": c.seed}

    def _run(self, layers, x):
        for lay in layers:
            x = lay.forward(x)
        return x

    def _back(self, layers, d):
        for lay in reversed(layers):
            d = lay.backward(d)
        return d

    def encode(self, x: np.ndarray) -> np.ndarray:
        """Waveform (length divisible by the hop) -> (latent_dim, frames)."""
        x = np.asarray(x, dtype=np.float64)
        if x.size == 0:
            raise ValueError("empty waveform")
        if x.size % self.cfg.hop:
            raise ValueError(f"length {x.size} not a multiple of hop {self.cfg.hop}; "
                             "pad first (pad_to_multiple)")
        return self._run(self.encoder, x[None, None, :])[0]

    def decode(self, z: np.ndarray) -> np.ndarray:
        """(latent_dim, frames) -> waveform of frames * hop samples."""
        return self._run(self.decoder, np.asarray(z, dtype=np.float64)[None])[0, 0]

    def forward_batch(self, x):
        """(B, 1, L) -> reconstruction (B, 1, L); used by training."""
        z = self._run(self.encoder, x)
        return self._run(self.decoder, z)

    def backward_batch(self, dout):
        nn.zero_grads(self.layers())
        self._back(self.encoder, self._back(self.decoder, dout))
        return nn.flatten_grads(self.layers())


def train_autoencoder(signals, cfg: AEConfig, train_cfg: TrainConfig,
                      model: ConvAutoencoder | None = None):
    """Minimize time-domain MSE reconstruction with Adam.

    signals: list of equal-length waveforms (pad upstream). Returns
    (model, loss_trace).
    """
    if not signals:
        raise ValueError("empty dataset")
    sigs = np.stack([pad_to_multiple(s, cfg.hop)[0] for s in signals])
    model = model or ConvAutoencoder(cfg)
    theta = model.get_params()
    state = nn.AdamState(theta.size)
    rng = np.random.default_rng(train_cfg.seed)
    losses = []
    for _ in range(train_cfg.max_steps):
        idx = rng.integers(0, len(sigs), size=train_cfg.batch_size)
        x = sigs[idx][:, None, :]
        model.set_params(theta)
        recon = model.forward_batch(x)
        losses.append(float(np.mean((recon - x) ** 2)))
        grad = model.backward_batch(mse_grad(recon, x))
        theta = nn.adam_step(theta, grad, state, train_cfg.learning_rate,
                             train_cfg.adam_beta1, train_cfg.adam_beta2,
                             train_cfg.adam_eps)
    model.set_params(theta)
    return model, np.array(losses)


def scale_frames(c: np.ndarray) -> np.ndarray:
    """Affinely map each frame (column) of a (channels, frames) map to [-1, 1].

    A constant frame maps to all zeros. Idempotent on already-scaled frames.
    """
    c = np.asarray(c, dtype=np.float64)
    lo = c.min(axis=0, keepdims=True)
    hi = c.max(axis=0, keepdims=True)
    span = hi - lo
    mid = (hi + lo) / 2.0
    out = np.zeros_like(c)
    np.divide(2.0 * (c - mid), span, out=out, where=span > 0)
    return np.clip(out, -1.0, 1.0)  # guard rounding past the endpoints


def _decompose_factor(factor: int, max_stage: int = 8):
    """Split an upsampling factor into stage factors <= max_stage, largest first."""
    if factor < 1:
        raise ValueError("factor must be a positive integer")
    stages = []
    rem = factor
    while rem > 1:
        for d in range(min(max_stage, rem), 1, -1):
            if rem % d == 0:
                stages.append(d)
                rem //= d
                break
        else:  # prime factor above max_stage: take it whole
            stages.append(rem)
            rem = 1
    return stages or [1]


class ConditionUpsampler:
    """Learned token-to-latent-grid upsampler.

    Token embeddings (rvq dim) are expanded `factor`-fold progressively —
    the factor is decomposed into small stages, each a transposed conv
    followed by a context conv — then mapped to the continuous latent width.
    It is trained separately, by regressing the continuous latents from the
    token embeddings of the same clips.
    """

    def __init__(self, embed_dim: int, out_channels: int, factor: int,
                 hidden: int = 32, kernel: int = 5, seed: int = 0):
        self.embed_dim = embed_dim
        self.out_channels = out_channels
        self.factor = factor
        self.hidden = hidden
        self.kernel = kernel
        self.seed = seed
        rng = np.random.default_rng(seed)
        layers = [nn.Conv1D(embed_dim, hidden, kernel, rng=rng)]
        for f in _decompose_factor(factor):
            layers += [nn.Softplus(), nn.ConvTranspose1D(hidden, hidden, f, rng=rng),
                       nn.Softplus(), nn.Conv1D(hidden, hidden, kernel, rng=rng)]
        layers += [nn.Softplus(), nn.Conv1D(hidden, out_channels, kernel, rng=rng)]
        self._layers = layers

    def layers(self):
        return self._layers

    def get_params(self):
        return nn.flatten_params(self._layers)

    def set_params(self, theta):
        nn.set_params(self._layers, theta)

    def spec(self):
        return {"embed_dim": self.embed_dim, "out_channels": self.out_channels,
                "factor": self.factor, "hidden": self.hidden,
                "kernel": self.kernel, "seed": self.seed}

    def forward_batch(self, e):
        x = e
        for lay in self._layers:
            x = lay.forward(x)
        return x

    def backward_batch(self, dout):
        nn.zero_grads(self._layers)
        d = dout
        for lay in reversed(self._layers):
            d = lay.backward(d)
        return nn.flatten_grads(self._layers)

    def apply(self, embedding: np.ndarray) -> np.ndarray:
        return self.forward_batch(np.asarray(embedding, dtype=np.float64)[None])[0]


def train_upsampler(embeddings, targets, factor: int, train_cfg: TrainConfig,
                    hidden: int = 32, kernel: int = 5):
    """Fit a ConditionUpsampler by MSE regression of continuous latents.

    embeddings: list of (embed_dim, frames) token embeddings; targets:
    matching (out_channels, frames * factor) continuous latents.
    """
    if not embeddings:
        raise ValueError("empty dataset")
    e = np.stack([np.asarray(x, dtype=np.float64) for x in embeddings])
    z = np.stack([np.asarray(x, dtype=np.float64) for x in targets])
    if z.shape[2] != e.shape[2] * factor:
        raise ValueError(f"target frames {z.shape[2]} != {e.shape[2]} * factor {factor}")
    ups = ConditionUpsampler(e.shape[1], z.shape[1], factor,
                             hidden=hidden, kernel=kernel, seed=train_cfg.seed)
    theta = ups.get_params()
    state = nn.AdamState(theta.size)
    rng = np.random.default_rng(train_cfg.seed)
    losses = []
    for _ in range(train_cfg.max_steps):
        idx = rng.integers(0, len(e), size=train_cfg.batch_size)
        ups.set_params(theta)
        pred = ups.forward_batch(e[idx])
        losses.append(float(np.mean((pred - z[idx]) ** 2)))
        grad = ups.backward_batch(mse_grad(pred, z[idx]))
        theta = nn.adam_step(theta, grad, state, train_cfg.learning_rate,
                             train_cfg.adam_beta1, train_cfg.adam_beta2,
                             train_cfg.adam_eps)
    ups.set_params(theta)
    return ups, np.array(losses)


def nearest_upsample(emb: np.ndarray, factor: int, out_channels: int | None = None) -> np.ndarray:
    """Repeat each frame `factor` times; tile channels up to out_channels."""
    raw = np.repeat(np.asarray(emb, dtype=np.float64), factor, axis=1)
    if out_channels is not None and out_channels != raw.shape[0]:
        reps = -(-out_channels // raw.shape[0])
        raw = np.tile(raw, (reps, 1))[:out_channels]
    return raw


def upsample_condition(tokens: TokenSequence, q: RVQ, factor: int,
                       upsampler: ConditionUpsampler | None = None,
                       out_channels: int | None = None) -> np.ndarray:
    """Token sequence -> frame-scaled condition on the continuous latent grid.

    With an upsampler, runs the learned path. Without one, falls back to
    nearest-repeat: each embedding frame repeated `factor` times, channels
    tiled up to `out_channels` when the widths differ.
    """
    if factor < 1:
        raise ValueError("factor must be a positive integer")
    emb = rvq_decode(q, tokens)
    if upsampler is not None:
        if upsampler.factor != factor:
            raise ValueError(f"upsampler factor {upsampler.factor} != requested {factor}")
        raw = upsampler.apply(emb)
    else:
        raw = nearest_upsample(emb, factor, out_channels)
    return scale_frames(raw)
