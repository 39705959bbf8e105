import numpy as np
import pytest

from dequant import nn
from dequant.denoiser import (ConvDenoiser, TrainConfig, gaussian_oracle,
                              mse_grad, time_features, train_denoiser)
from dequant.schedule import linear_schedule
from dequant.selftest import check_denoiser_gradients, finite_difference_grad


# -- Gaussian oracle -----------------------------------------------------------

def test_oracle_standard_normal_collapses():
    d = gaussian_oracle(0.0, 1.0)
    x = np.array([[1.5, -0.3]])
    sab = np.sqrt(0.4)
    assert np.allclose(d.predict(x, sab), np.sqrt(1 - 0.4) * x)


def test_oracle_zero_at_posterior_mode():
    d = gaussian_oracle(2.0, 0.7)
    sab = np.sqrt(0.3)
    x = np.full((2, 2), sab * 2.0)
    assert np.allclose(d.predict(x, sab), 0.0)


def test_oracle_matches_quadrature():
    # E[eps | x_t] by numerical integration over the eps prior
    mu, sigma, ab, x_t = 1.0, 0.5, 0.5, 1.0
    sab = np.sqrt(ab)
    eps = np.linspace(-12, 12, 200001)
    x0 = (x_t - np.sqrt(1 - ab) * eps) / sab
    # posterior weight: p(eps) * p(x0 implied by (x_t, eps))
    w = np.exp(-0.5 * eps**2) * np.exp(-0.5 * ((x0 - mu) / sigma) ** 2)
    expected = np.trapezoid(eps * w, eps) / np.trapezoid(w, eps)
    d = gaussian_oracle(mu, sigma)
    assert d.predict(np.array([[x_t]]), sab)[0, 0] == pytest.approx(expected, abs=1e-9)


def test_oracle_rejects_bad_sigma():
    with pytest.raises(ValueError):
        gaussian_oracle(0.0, 0.0)
    with pytest.raises(ValueError):
        gaussian_oracle(0.0, -1.0)


# -- conv denoiser forward ------------------------------------------------------

def test_forward_zero_weights_gives_zero():
    m = ConvDenoiser(latent_channels=2, cond_channels=1, widths=(4, 4), kernel=3)
    m.set_params(np.zeros(m.get_params().size))
    x = np.random.default_rng(0).standard_normal((2, 6))
    h = np.random.default_rng(1).standard_normal((1, 6))
    assert np.allclose(m.predict(x, 0.5, h), 0.0)


def test_final_conv_is_linear_identity_path():
    # zero all weights, then wire the output conv's center tap as identity:
    # softplus(0) = 0 through the zeroed trunk, so output must equal the bias
    # path only; with a bias b on the last conv the output is constant b.
    m = ConvDenoiser(latent_channels=2, cond_channels=0, widths=(3,), kernel=3)
    m.set_params(np.zeros(m.get_params().size))
    m.conv_out.b[...] = 1.25
    x = np.random.default_rng(0).standard_normal((2, 5))
    assert np.allclose(m.predict(x, 0.7, None), 1.25)


def test_identity_1x1_conv_passes_first_channels():
    # single 1x1 "block-free" model: conv_in picks x's channels through,
    # conv_out undoes the softplus offset cannot be exact, so instead check
    # the stacked-input wiring: conv_in sees [x ; h] in that channel order.
    m = ConvDenoiser(latent_channels=1, cond_channels=1, widths=(2,), kernel=1)
    m.set_params(np.zeros(m.get_params().size))
    m.conv_in.W[0, 0, 0] = 1.0   # channel 0 <- x
    m.conv_in.W[1, 1, 0] = 1.0   # channel 1 <- h
    x = np.array([[1.0, -2.0, 0.5]])
    h = np.array([[3.0, 4.0, 5.0]])
    feats = m.forward(np.stack([x]), np.array([0.5]), np.stack([h]))
    # trunk is zero beyond conv_in; verify conv_in's cached stacked input order
    u = np.concatenate([x, h])
    got = m.conv_in.forward(np.stack([u]))[0]
    assert np.allclose(got[0], x[0])
    assert np.allclose(got[1], h[0])


def naive_conv_same(x, W, b):
    cout, cin, k = W.shape
    pad = (k - 1) // 2
    C, F = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad)))
    y = np.zeros((cout, F))
    for o in range(cout):
        for t in range(F):
            y[o, t] = b[o] + np.sum(xp[:, t : t + k] * W[o])
    return y


def test_forward_matches_straight_line_reimplementation():
    m = ConvDenoiser(latent_channels=2, cond_channels=1, widths=(3, 4), kernel=3,
                     seed=11)
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 5))
    h = rng.standard_normal((1, 5))
    sab = 0.6
    got = m.predict(x, sab, h)

    u = np.concatenate([x, h])
    feats = time_features(np.array([sab]))[0]
    z = naive_conv_same(u, m.conv_in.W, m.conv_in.b)
    z += (feats @ m.time_proj.W + m.time_proj.b)[:, None]
    for conv_a, conv_b, skip in m.blocks:
        s1 = np.logaddexp(0, z) - np.log(2)
        c1 = naive_conv_same(s1, conv_a.W, conv_a.b)
        c2 = naive_conv_same(np.logaddexp(0, c1) - np.log(2), conv_b.W, conv_b.b)
        z = (naive_conv_same(z, skip.W, skip.b) if skip is not None else z) + c2
    want = naive_conv_same(np.logaddexp(0, z) - np.log(2), m.conv_out.W, m.conv_out.b)
    assert np.allclose(got, want, rtol=1e-12)


def test_forward_rejects_frame_mismatch():
    m = ConvDenoiser(latent_channels=1, cond_channels=1, widths=(2,), kernel=3)
    with pytest.raises(ValueError):
        m.predict(np.zeros((1, 4)), 0.5, np.zeros((1, 5)))


# -- gradients ------------------------------------------------------------------

def test_backward_requires_forward():
    m = ConvDenoiser(latent_channels=1, cond_channels=0, widths=(2,), kernel=3)
    with pytest.raises(RuntimeError):
        m.backward(np.zeros((1, 1, 4)))


def test_zero_gradient_at_perfect_prediction():
    m = ConvDenoiser(latent_channels=1, cond_channels=0, widths=(2,), kernel=3)
    x = np.random.default_rng(0).standard_normal((1, 1, 4))
    pred = m.forward(x, np.array([0.5]))
    grad = m.backward(mse_grad(pred, pred.copy()))
    assert np.linalg.norm(grad) == 0.0


def test_single_1x1_conv_gradient_closed_form():
    # one scalar weight w, prediction w*x (zero trunk elsewhere): the MSE
    # gradient for target t is mean over elements of 2 (w x - t) x
    lin = nn.Conv1D(1, 1, 1, rng=np.random.default_rng(0))
    lin.W[...] = 0.7
    lin.b[...] = 0.0
    x = np.random.default_rng(1).standard_normal((1, 1, 5))
    t = np.random.default_rng(2).standard_normal((1, 1, 5))
    pred = lin.forward(x)
    lin.zero_grads()
    lin.backward(mse_grad(pred, t))
    want = np.mean(2.0 * (0.7 * x - t) * x)
    assert lin.grads[0].ravel()[0] == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed):
    assert check_denoiser_gradients(seed=seed) < 1e-4


# -- training -------------------------------------------------------------------

def test_train_rejects_empty_dataset():
    sched = linear_schedule(10, 0.01, 0.1)
    with pytest.raises(ValueError):
        train_denoiser([], None, sched, TrainConfig(max_steps=1))


def test_train_on_constant_zero_data_reduces_loss():
    sched = linear_schedule(20, 0.01, 0.1)
    data = [np.zeros((1, 8)) for _ in range(4)]
    cfg = TrainConfig(batch_size=4, learning_rate=3e-3, max_steps=150, seed=0)
    model, losses = train_denoiser(data, None, sched, cfg, widths=(4, 4), kernel=3)
    assert losses[-10:].mean() < losses[:10].mean()


def test_train_toy_harmonics_halves_smoothed_loss():
    rng = np.random.default_rng(0)
    t = np.arange(16)
    data = []
    for _ in range(8):
        f = rng.uniform(0.1, 0.4)
        data.append(np.stack([np.sin(2 * np.pi * f * t),
                              np.cos(2 * np.pi * f * t)]))
    sched = linear_schedule(50, 1e-3, 0.05)
    cfg = TrainConfig(batch_size=4, learning_rate=3e-3, max_steps=2000, seed=1)
    model, losses = train_denoiser(data, None, sched, cfg, widths=(8, 8), kernel=3)
    smooth = np.convolve(losses, np.ones(100) / 100, mode="valid")
    assert smooth[-1] < 0.7 * smooth[0]


def test_reference_defaults_accepted():
    cfg = TrainConfig(batch_size=20, learning_rate=5e-5, max_steps=2)
    sched = linear_schedule(10, 0.01, 0.1)
    data = [np.zeros((1, 4)) for _ in range(2)]
    model, losses = train_denoiser(data, None, sched, cfg, widths=(2,), kernel=3)
    assert len(losses) == 2


def test_invalid_train_config():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_conditioning_changes_output():
    sched = linear_schedule(20, 0.01, 0.1)
    rng = np.random.default_rng(3)
    data = [rng.standard_normal((2, 8)) for _ in range(4)]
    conds = [rng.standard_normal((1, 8)) for _ in range(4)]
    cfg = TrainConfig(batch_size=4, learning_rate=3e-3, max_steps=100, seed=2)
    model, _ = train_denoiser(data, conds, sched, cfg, widths=(4, 4), kernel=3)
    x = rng.standard_normal((2, 8))
    h = rng.standard_normal((1, 8))
    delta = model.predict(x, 0.5, h) - model.predict(x, 0.5, h + rng.standard_normal((1, 8)))
    assert np.linalg.norm(delta) > 0


def test_time_features_shape_and_range():
    f = time_features(np.array([0.1, 0.9]))
    assert f.shape == (2, 16)
    assert np.all(np.abs(f) <= 1.0)
