"""Layer primitives: convolution, pooling, batch norm, LSTM, dense, dropout,
variational dense, KL divergence and cross-entropy.

Sequence tensors are laid out ``(batch, length, channels)``; unbatched
``(length, channels)`` inputs are accepted where noted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DegenerateBatch, EmptySequence, InvalidRate, ShapeMismatch
from .tensor import (
    Tensor,
    add,
    as_tensor,
    log,
    make,
    matmul,
    mul,
    numpy_sigmoid,
    relu,
    sigmoid,
    softmax,
    softplus,
    square,
    tsum,
)

BN_EPS = 1e-5
BN_MOMENTUM = 0.9
PROB_FLOOR = 1e-12


def same_padding(length: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """(output length, left pad, right pad) for "same" padding."""
    out = -(-length // stride)
    total = max((out - 1) * stride + kernel - length, 0)
    return out, total // 2, total - total // 2


def _batched(x: Tensor):
    if x.ndim == 2:
        return _expand0(x), True
    if x.ndim != 3:
        raise ShapeMismatch(f"expected (batch, length, channels), got {x.shape}")
    return x, False


def _expand0(x):
    return make(x.data[None], (x,), lambda g: (g[0],), "expand")


def _squeeze0(x):
    return make(x.data[0], (x,), lambda g: (g[None],), "squeeze")


def conv1d(x, kernels, bias=None, stride: int = 1) -> Tensor:
    """Cross-correlation with "same" zero padding.

    ``x``: (B, L, C_in) or (L, C_in); ``kernels``: (k, C_in, C_out).
    Output length is ceil(L / stride).
    """
    x, squeezed = _batched(as_tensor(x))
    kernels = as_tensor(kernels)
    if stride < 1:
        raise ShapeMismatch("stride must be >= 1")
    if kernels.ndim != 3 or kernels.shape[1] != x.shape[2]:
        raise ShapeMismatch(f"kernels {kernels.shape} do not match input channels {x.shape[2]}")
    k, c_in, c_out = kernels.shape
    B, L, _ = x.shape
    L_out, left, right = same_padding(L, k, stride)
    xp = np.pad(x.data, ((0, 0), (left, right), (0, 0)))
    # (B, L_out, C_in, k)
    windows = sliding_window_view(xp, k, axis=1)[:, ::stride][:, :L_out]
    cols = windows.reshape(B * L_out, c_in * k)
    wmat = kernels.data.transpose(1, 0, 2).reshape(c_in * k, c_out)
    out = (cols @ wmat).reshape(B, L_out, c_out)

    def bw(g):
        g2 = g.reshape(B * L_out, c_out)
        gw = (cols.T @ g2).reshape(c_in, k, c_out).transpose(1, 0, 2)
        gcols = (g2 @ wmat.T).reshape(B, L_out, c_in, k)
        gxp = np.zeros_like(xp)
        starts = stride * np.arange(L_out)
        for j in range(k):
            # for fixed j the target rows j + stride*l are distinct
            gxp[:, starts + j, :] += gcols[:, :, :, j]
        return gxp[:, left : left + L, :], gw

    y = make(out, (x, kernels), bw, "conv1d")
    if bias is not None:
        y = add(y, bias)
    return _squeeze0(y) if squeezed else y


def maxpool1d(x, size: int = 2) -> Tensor:
    """Non-overlapping max pooling (kernel = stride = ``size``).

    A trailing partial window is pooled over the elements it has.
    """
    x, squeezed = _batched(as_tensor(x))
    B, L, C = x.shape
    if L < 1:
        raise ShapeMismatch("maxpool1d needs L >= 1")
    L_out = -(-L // size)
    padded = np.full((B, L_out * size, C), -np.inf)
    padded[:, :L] = x.data
    blocks = padded.reshape(B, L_out, size, C)
    arg = blocks.argmax(axis=2)
    out = np.take_along_axis(blocks, arg[:, :, None, :], axis=2)[:, :, 0, :]

    def bw(g):
        gb = np.zeros((B, L_out, size, C))
        np.put_along_axis(gb, arg[:, :, None, :], g[:, :, None, :], axis=2)
        return (gb.reshape(B, L_out * size, C)[:, :L],)

    y = make(out, (x,), bw, "maxpool1d")
    return _squeeze0(y) if squeezed else y


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def fresh(cls, channels: int) -> "BatchNormState":
        return cls(np.zeros(channels), np.ones(channels))


def batchnorm1d(x, gamma, beta, state: BatchNormState, mode: str = "train") -> Tensor:
    """Per-channel normalization over every axis but the last.

    ``mode="train"`` uses batch statistics and folds them into ``state``
    (momentum 0.9); any other mode uses the running statistics.
    """
    x = as_tensor(x)
    axes = tuple(range(x.ndim - 1))
    if mode == "train":
        if x.shape[0] < 2:
            raise DegenerateBatch("batch normalization in training mode needs batch size >= 2")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        state.running_mean = BN_MOMENTUM * state.running_mean + (1 - BN_MOMENTUM) * mu
        state.running_var = BN_MOMENTUM * state.running_var + (1 - BN_MOMENTUM) * var
        inv = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x.data - mu) * inv
        n = x.data.size // x.shape[-1]

        def bw(g):
            s1 = g.sum(axis=axes)
            s2 = (g * xhat).sum(axis=axes)
            return (inv / n * (n * g - s1 - xhat * s2),)

        normalized = make(xhat, (x,), bw, "batchnorm")
    else:
        inv = 1.0 / np.sqrt(state.running_var + BN_EPS)
        normalized = mul(add(x, -state.running_mean), inv)
    return add(mul(normalized, gamma), beta)


def lstm_forward(seq, W, U, b) -> Tensor:
    """Final hidden state of an LSTM run from zero initial state.

    ``seq``: (B, T, F) or (T, F); ``W``: (F, 4H); ``U``: (H, 4H); ``b``: (4H,).
    Gate blocks along the 4H axis are ordered input, forget, candidate, output.
    Backpropagation through time is done in one fused primitive.
    """
    seq, squeezed = _batched(as_tensor(seq))
    W, U, b = as_tensor(W), as_tensor(U), as_tensor(b)
    B, T, F = seq.shape
    if T == 0:
        raise EmptySequence("LSTM input has no time steps")
    H = U.shape[0]
    if W.shape != (F, 4 * H) or U.shape != (H, 4 * H) or b.shape != (4 * H,):
        raise ShapeMismatch(f"LSTM weights W{W.shape} U{U.shape} b{b.shape} for F={F}, H={H}")
    x = seq.data
    hs = np.zeros((T + 1, B, H))
    cs = np.zeros((T + 1, B, H))
    gates = np.zeros((T, B, 4 * H))
    for t in range(T):
        z = x[:, t] @ W.data + hs[t] @ U.data + b.data
        a = np.empty_like(z)
        a[:, : 2 * H] = numpy_sigmoid(z[:, : 2 * H])
        a[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
        a[:, 3 * H :] = numpy_sigmoid(z[:, 3 * H :])
        i, f, gg, o = a[:, :H], a[:, H : 2 * H], a[:, 2 * H : 3 * H], a[:, 3 * H :]
        cs[t + 1] = f * cs[t] + i * gg
        hs[t + 1] = o * np.tanh(cs[t + 1])
        gates[t] = a

    def bw(dh):
        dx = np.zeros_like(x)
        dW = np.zeros_like(W.data)
        dU = np.zeros_like(U.data)
        db = np.zeros_like(b.data)
        dc = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            a = gates[t]
            i, f, gg, o = a[:, :H], a[:, H : 2 * H], a[:, 2 * H : 3 * H], a[:, 3 * H :]
            tc = np.tanh(cs[t + 1])
            dc = dc + dh * o * (1.0 - tc * tc)
            dz = np.concatenate(
                [dc * gg * i * (1 - i), dc * cs[t] * f * (1 - f), dc * i * (1 - gg * gg), dh * tc * o * (1 - o)],
                axis=1,
            )
            dW += x[:, t].T @ dz
            dU += hs[t].T @ dz
            db += dz.sum(axis=0)
            dx[:, t] = dz @ W.data.T
            dh = dz @ U.data.T
            dc = dc * f
        return dx, dW, dU, db

    y = make(hs[T], (seq, W, U, b), bw, "lstm")
    return _squeeze0(y) if squeezed else y


_ACTIVATIONS = {
    "relu": relu,
    "sigmoid": sigmoid,
    "softmax": softmax,
    "none": lambda t: t,
    None: lambda t: t,
}


def activate(x, activation):
    try:
        return _ACTIVATIONS[activation](x)
    except KeyError:
        raise ValueError(f"unknown activation {activation!r}") from None


def dense(x, W, b=None, activation="none") -> Tensor:
    """Affine map followed by ``activation`` (relu, sigmoid, softmax or none)."""
    x, W = as_tensor(x), as_tensor(W)
    if x.shape[-1] != W.shape[0]:
        raise ShapeMismatch(f"dense input {x.shape} vs weights {W.shape}")
    if x.ndim == 1:
        y = _squeeze0(matmul(_expand0(x), W))
    else:
        y = matmul(x, W)
    if b is not None:
        y = add(y, b)
    return activate(y, activation)


DROPOUT_MODES = ("train", "mc_inference", "off")


def dropout_apply(x, rate: float, rng, mode: str = "train") -> Tensor:
    """Inverted Bernoulli node dropout; identity when ``mode == "off"``."""
    if not 0.0 <= rate < 1.0:
        raise InvalidRate(f"dropout rate must lie in [0, 1), got {rate}")
    if mode not in DROPOUT_MODES:
        raise ValueError(f"dropout mode must be one of {DROPOUT_MODES}")
    x = as_tensor(x)
    if mode == "off" or rate == 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    return mul(x, keep / (1.0 - rate))


@dataclass
class GaussianWeight:
    """Mean-field Gaussian posterior over a weight tensor; sigma = softplus(rho)."""

    mu: Tensor
    rho: Tensor

    def __post_init__(self):
        if self.mu.shape != self.rho.shape:
            raise ShapeMismatch(f"mu {self.mu.shape} and rho {self.rho.shape} differ")

    @property
    def shape(self):
        return self.mu.shape

    @property
    def sigma(self) -> np.ndarray:
        return np.logaddexp(0.0, self.rho.data)

    def sample(self, eps) -> Tensor:
        """Reparameterized draw mu + softplus(rho) * eps (eps may carry a batch axis)."""
        return add(self.mu, mul(softplus(self.rho), eps))


def rho_for_sigma(sigma: float) -> float:
    """Inverse softplus."""
    return math.log(math.expm1(sigma))


def bayesian_dense(x, w: GaussianWeight, b: GaussianWeight, rng, activation="none") -> Tensor:
    """Dense layer with weights drawn from their variational posterior.

    With a per-row stream source (``rng.per_row``) every batch row gets its
    own weight draw; otherwise one draw is shared by the whole batch.
    """
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeMismatch(f"bayesian_dense input {x.shape}, w {w.shape}, b {b.shape}")
    if getattr(rng, "per_row", False):
        B = x.shape[0]
        W = w.sample(rng.standard_normal((B,) + w.shape))
        bias = b.sample(rng.standard_normal((B,) + b.shape))
        xin = make(x.data[:, None, :], (x,), lambda g: (g[:, 0, :],), "expand")
        y = matmul(xin, W)
        y = make(y.data[:, 0, :], (y,), lambda g: (g[:, None, :],), "squeeze")
        y = add(y, bias)
    else:
        y = add(matmul(x, w.sample(rng.standard_normal(w.shape))), b.sample(rng.standard_normal(b.shape)))
    return activate(y, activation)


def kl_gaussian(w: GaussianWeight, prior_sigma: float = 1.0) -> Tensor:
    """KL(q || N(0, prior_sigma^2)) summed over every weight."""
    if prior_sigma <= 0:
        raise ValueError("prior_sigma must be > 0")
    inv_p2 = 1.0 / prior_sigma**2
    sigma = softplus(w.rho)
    terms = add(mul(add(square(sigma), square(w.mu)), inv_p2), -1.0 - math.log(inv_p2))
    terms = add(terms, mul(log(sigma), -2.0))
    return mul(tsum(terms), 0.5)


def cross_entropy(probs, labels) -> Tensor:
    """Mean of -ln p[label], with p clamped to >= 1e-12.

    ``probs`` is (C,) with an integer label, or (B, C) with a label vector.
    """
    probs = as_tensor(probs)
    single = probs.ndim == 1
    p2 = probs.data[None] if single else probs.data
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    B, C = p2.shape
    if labels.shape != (B,):
        raise ShapeMismatch(f"{labels.shape[0]} labels for {B} probability rows")
    if labels.min() < 0 or labels.max() >= C:
        raise ValueError(f"labels must lie in [0, {C})")
    rows = np.arange(B)
    picked = p2[rows, labels]
    clamped = np.maximum(picked, PROB_FLOOR)
    loss = -np.log(clamped).mean()

    def bw(g):
        grad = np.zeros_like(p2)
        grad[rows, labels] = np.where(picked > PROB_FLOOR, -1.0 / clamped, 0.0) / B
        grad = grad * g
        return (grad[0] if single else grad,)

    return make(np.asarray(loss), (probs,), bw, "cross_entropy")
