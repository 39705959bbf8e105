"""Fast self-contained invariant checks, runnable without any trained models.

Covers: schedule recurrence, forward-map algebra, the midway-infilling
identities (gamma=0 vs DDPM, gamma=1 vs the infilling branch alone), sampler
determinism, denoiser gradients vs central finite differences, quantizer
round trips, and the FFT vs a naive DFT. Used by `dequant selftest` and
reused by the test suite.
"""

from __future__ import annotations

import numpy as np

from . import diffusion, metrics, nn, quantizer
from .denoiser import ConvDenoiser, gaussian_oracle, mse_grad
from .schedule import linear_schedule


def finite_difference_grad(f, theta, step=1e-5):
    g = np.zeros_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        up[i] += step
        dn_ = theta.copy()
        dn_[i] -= step
        g[i] = (f(up) - f(dn_)) / (2.0 * step)
    return g


def max_rel_error(a, b, floor=1e-6):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def check_denoiser_gradients(seed=0, step=1e-5):
    """Max relative error of analytic vs central-difference gradients."""
    rng = np.random.default_rng(seed)
    model = ConvDenoiser(latent_channels=2, cond_channels=2, widths=(3, 4), kernel=3,
                         seed=seed)
    x = rng.standard_normal((2, 2, 6))
    h = rng.standard_normal((2, 2, 6))
    sab = rng.uniform(0.1, 0.9, size=2)
    target = rng.standard_normal((2, 2, 6))
    theta0 = model.get_params()

    def loss(theta):
        model.set_params(theta)
        return float(np.mean((model.forward(x, sab, h) - target) ** 2))

    model.set_params(theta0)
    pred = model.forward(x, sab, h)
    analytic = model.backward(mse_grad(pred, target))
    numeric = finite_difference_grad(loss, theta0, step=step)
    model.set_params(theta0)
    return max_rel_error(analytic, numeric)


def run(verbose=True):
    """Returns a list of (name, passed, detail) tuples."""
    results = []

    def check(name, passed, detail=""):
        results.append((name, bool(passed), detail))
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")

    s = linear_schedule(1000, 1e-4, 0.02)
    direct = np.cumprod(1.0 - s.betas)
    rel = np.max(np.abs(s.alpha_bars - direct) / direct)
    check("schedule recurrence vs direct product", rel < 1e-12, f"rel={rel:.2e}")
    check("terminal alpha_bar near zero", s.alpha_bars[-1] < 1e-3,
          f"ab[T-1]={s.alpha_bars[-1]:.2e}")

    s100 = linear_schedule(100, 1e-4, 0.02)
    oracle = gaussian_oracle(0.0, 1.0)
    rng = np.random.default_rng(7)
    h = rng.standard_normal((3, 8))
    a = diffusion.midway_infilling(
        s100, oracle, h, diffusion.SamplerConfig(tau=100, gamma=0.0),
        np.random.default_rng(11))
    b = diffusion.ddpm_sample(s100, oracle, h, h.shape, np.random.default_rng(11))
    check("midway(gamma=0, tau=T) == ddpm_sample", np.array_equal(a, b))

    cfg1 = diffusion.SamplerConfig(tau=60, gamma=1.0)
    out = diffusion.midway_infilling(s100, oracle, h, cfg1, np.random.default_rng(13))
    _, rng_s = np.random.default_rng(13).spawn(2)
    ref = h.copy()
    for t in range(cfg1.tau - 1, -1, -1):
        n = rng_s.standard_normal(h.shape) if t > 0 else np.zeros(h.shape)
        ref = diffusion.ddpm_step(s100, oracle, ref, t, h, n)
    check("midway(gamma=1) == infilling branch alone", np.array_equal(out, ref))

    r1 = diffusion.ddpm_sample(s100, oracle, h, h.shape, np.random.default_rng(5))
    r2 = diffusion.ddpm_sample(s100, oracle, h, h.shape, np.random.default_rng(5))
    check("sampler determinism", np.array_equal(r1, r2))

    worst = max(check_denoiser_gradients(seed=k) for k in range(3))
    check("denoiser gradients vs finite differences", worst < 1e-4,
          f"max rel err={worst:.2e}")

    # scale-separated codebooks: stage-2 offsets are small next to stage-1
    # gaps, the regime where greedy re-encoding provably returns the tokens
    rng_q = np.random.default_rng(3)
    coarse = quantizer.Codebook(10.0 * rng_q.normal(size=(8, 4)))
    fine = quantizer.Codebook(0.1 * rng_q.normal(size=(8, 4)))
    q = quantizer.RVQ(stages=[coarse, fine])
    toks = quantizer.TokenSequence(
        indices=rng_q.integers(0, 8, size=(2, 50)), K=8, frame_rate=50.0, dim=4)
    toks2 = quantizer.rvq_encode(q, quantizer.rvq_decode(q, toks))
    check("rvq encode(decode(tokens)) idempotent",
          np.array_equal(toks.indices, toks2.indices))

    x = np.random.default_rng(9).normal(size=64)
    naive = np.array([np.sum(x * np.exp(-2j * np.pi * k * np.arange(64) / 64))
                      for k in range(64)])
    err = np.max(np.abs(metrics.fft_radix2(x) - naive))
    check("radix-2 FFT vs naive DFT", err < 1e-9, f"max err={err:.2e}")

    return results


def main():
    results = run(verbose=True)
    return 0 if all(ok for _, ok, _ in results) else 1
