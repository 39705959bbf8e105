"""Minimal 1-D conv building blocks with hand-written backprop, plus Adam.

All layers operate on float64 arrays of shape (batch, channels, length).
Each layer caches what its backward pass needs during forward; backward
accumulates parameter gradients into `layer.grads` and returns the gradient
w.r.t. its input. Parameters can be flattened into / restored from a single
vector so optimizers and checkpoints only ever see one array.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def softplus(x):
    # shifted so f(0) = 0; derivative is the logistic sigmoid
    return np.logaddexp(0.0, x) - np.log(2.0)


def softplus_grad(x):
    return 1.0 / (1.0 + np.exp(-x))


class Layer:
    """Base: parameterized layers keep `params` (list of arrays) and `grads`."""

    params: list
    grads: list

    def __init__(self):
        self.params = []
        self.grads = []

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def zero_grads(self):
        for g in self.grads:
            g[...] = 0.0

    def n_params(self):
        return sum(p.size for p in self.params)


class Conv1D(Layer):
    """1-D convolution (cross-correlation), symmetric zero padding.

    W has shape (cout, cin, k). With stride s and pad p the output length is
    (L + 2p - k) // s + 1; the default pad (k - stride) // 2 keeps length
    L // stride when L is a multiple of the stride and k - stride is even.
    """

    def __init__(self, cin, cout, k, stride=1, pad=None, rng=None):
        super().__init__()
        self.cin, self.cout, self.k, self.stride = cin, cout, k, stride
        self.pad = (k - stride) // 2 if pad is None else pad
        rng = rng or np.random.default_rng(0)
        # Kaiming-style uniform: variance gain 2 per layer offsets the ~0.5
        # slope of the softplus activations between stacked convs
        bound = np.sqrt(6.0 / (cin * k))
        self.W = rng.uniform(-bound, bound, size=(cout, cin, k))
        self.b = np.zeros(cout)
        self.params = [self.W, self.b]
        self.grads = [np.zeros_like(self.W), np.zeros_like(self.b)]
        self._cache = None

    def forward(self, x):
        p = self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p))) if p else x
        win = sliding_window_view(xp, self.k, axis=2)[:, :, :: self.stride, :]
        y = np.einsum("bilk,oik->bol", win, self.W, optimize=True) + self.b[:, None]
        self._cache = (x.shape, win)
        return y

    def backward(self, dy):
        x_shape, win = self._cache
        self.grads[0] += np.einsum("bol,bilk->oik", dy, win, optimize=True)
        self.grads[1] += dy.sum(axis=(0, 2))
        B, C, L = x_shape
        p, s, k = self.pad, self.stride, self.k
        Lout = dy.shape[2]
        dxp = np.zeros((B, C, L + 2 * p))
        for j in range(k):
            dxp[:, :, j : j + s * Lout : s] += np.einsum(
                "bol,oi->bil", dy, self.W[:, :, j], optimize=True
            )
        return dxp[:, :, p : p + L] if p else dxp


class ConvTranspose1D(Layer):
    """Transposed 1-D convolution restricted to kernel == stride (no overlap).

    Maps (B, cin, L) -> (B, cout, L * stride); the adjoint of a patchifying
    Conv1D with the same kernel/stride and zero padding. W has shape
    (cin, cout, k).
    """

    def __init__(self, cin, cout, stride, rng=None):
        super().__init__()
        if stride < 1:
            raise ValueError("stride must be >= 1")
        self.cin, self.cout, self.stride = cin, cout, stride
        rng = rng or np.random.default_rng(0)
        # each of the `stride` output phases sees only cin inputs; the extra
        # sqrt(stride) restores the energy the k-fold upsampling spreads out
        bound = np.sqrt(6.0 * stride / cin)
        self.W = rng.uniform(-bound, bound, size=(cin, cout, stride))
        self.b = np.zeros(cout)
        self.params = [self.W, self.b]
        self.grads = [np.zeros_like(self.W), np.zeros_like(self.b)]
        self._cache = None

    def forward(self, x):
        B, C, L = x.shape
        y = np.einsum("bil,iok->bolk", x, self.W, optimize=True)
        y = y.reshape(B, self.cout, L * self.stride) + self.b[:, None]
        self._cache = x
        return y

    def backward(self, dy):
        x = self._cache
        B, C, L = x.shape
        dyk = dy.reshape(B, self.cout, L, self.stride)
        self.grads[0] += np.einsum("bil,bolk->iok", x, dyk, optimize=True)
        self.grads[1] += dy.sum(axis=(0, 2))
        return np.einsum("bolk,iok->bil", dyk, self.W, optimize=True)


class Linear(Layer):
    """Dense map on (batch, n_in) vectors; used for time-embedding projection."""

    def __init__(self, n_in, n_out, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        bound = np.sqrt(6.0 / n_in)
        self.W = rng.uniform(-bound, bound, size=(n_in, n_out))
        self.b = np.zeros(n_out)
        self.params = [self.W, self.b]
        self.grads = [np.zeros_like(self.W), np.zeros_like(self.b)]
        self._cache = None

    def forward(self, x):
        self._cache = x
        return x @ self.W + self.b

    def backward(self, dy):
        x = self._cache
        self.grads[0] += x.T @ dy
        self.grads[1] += dy.sum(axis=0)
        return dy @ self.W.T


class Softplus(Layer):
    def forward(self, x):
        self._cache = x
        return softplus(x)

    def backward(self, dy):
        return dy * softplus_grad(self._cache)


def flatten_params(layers):
    parts = []
    for lay in layers:
        parts.extend(p.ravel() for p in lay.params)
    return np.concatenate(parts) if parts else np.zeros(0)


def set_params(layers, theta):
    off = 0
    for lay in layers:
        for p in lay.params:
            p[...] = theta[off : off + p.size].reshape(p.shape)
            off += p.size
    if off != theta.size:
        raise ValueError(f"parameter vector has {theta.size} entries, model needs {off}")


def flatten_grads(layers):
    parts = []
    for lay in layers:
        parts.extend(g.ravel() for g in lay.grads)
    return np.concatenate(parts) if parts else np.zeros(0)


def zero_grads(layers):
    for lay in layers:
        lay.zero_grads()


class AdamState:
    def __init__(self, n):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0


def adam_step(theta, grad, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update. Mutates `state`, returns new theta.

    Non-finite gradients abort the step (state untouched) with an error.
    """
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient; step aborted")
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1**state.t)
    v_hat = state.v / (1.0 - beta2**state.t)
    return theta - lr * m_hat / (np.sqrt(v_hat) + eps)
