"""Finite-difference verification of every differentiable primitive and model graph."""

from __future__ import annotations

import numpy as np

from . import nn
from .models import Architecture, ModelSpec, build
from .nn.tensor import log, mul, relu, sigmoid, softmax, softplus, square, tanh, tsum
from .rng import RowStreams, derive_rng

TOL_64 = 1e-6


def _weighted(out, w):
    return tsum(mul(out, w))


def primitive_checks(seed: int = 0, step: float = 1e-5) -> dict:
    """Gradient-check results per primitive, keyed by op name."""
    rng = np.random.default_rng(seed)
    P = nn.parameter
    x3 = P(rng.normal(size=(2, 9, 3)))
    w3 = rng.normal(size=(2, 9, 3))
    w_pool = rng.normal(size=(2, 5, 3))  # pooled length ceil(9 / 2)
    xm = P(rng.normal(size=(4, 5)))
    wm = rng.normal(size=(4, 5))
    pos = P(rng.uniform(0.5, 2.0, size=(4, 5)))
    A = P(rng.normal(size=(3, 4)))
    B = P(rng.normal(size=(4, 2)))
    kern = P(rng.normal(size=(5, 3, 4)))
    kb = P(rng.normal(size=4))
    gamma = P(rng.normal(size=3))
    beta = P(rng.normal(size=3))
    W = P(rng.normal(size=(3, 8)) * 0.5)
    U = P(rng.normal(size=(2, 8)) * 0.5)
    b = P(rng.normal(size=8))
    Wd = P(rng.normal(size=(5, 3)))
    bd = P(rng.normal(size=3))
    mu = P(rng.normal(size=(5, 3)) * 0.5)
    rho = P(rng.normal(size=(5, 3)) - 2.0)
    mb = P(rng.normal(size=3) * 0.5)
    rb = P(rng.normal(size=3) - 2.0)
    labels = [0, 1, 2, 0]
    bn = nn.BatchNormState.fresh(3)

    def bayes():
        streams = RowStreams([derive_rng(seed, "gc", i) for i in range(4)])
        gw, gb = nn.GaussianWeight(mu, rho), nn.GaussianWeight(mb, rb)
        probs = nn.bayesian_dense(xm, gw, gb, streams, "softmax")
        return nn.cross_entropy(probs, labels) + nn.kl_gaussian(gw, 0.7)

    cases = {
        "add_mul": (lambda: _weighted(xm * pos + xm, wm), {"x": xm, "p": pos}),
        "matmul": (lambda: tsum(square(A @ B)), {"A": A, "B": B}),
        "log": (lambda: _weighted(log(pos), wm), {"p": pos}),
        "relu": (lambda: _weighted(relu(xm), wm), {"x": xm}),
        "sigmoid": (lambda: _weighted(sigmoid(xm), wm), {"x": xm}),
        "tanh": (lambda: _weighted(tanh(xm), wm), {"x": xm}),
        "softplus": (lambda: _weighted(softplus(xm), wm), {"x": xm}),
        "softmax": (lambda: _weighted(softmax(xm), wm), {"x": xm}),
        "conv1d": (lambda: tsum(square(nn.conv1d(x3, kern, kb, stride=2))), {"x": x3, "k": kern, "b": kb}),
        "maxpool1d": (lambda: _weighted(nn.maxpool1d(x3), w_pool), {"x": x3}),
        "batchnorm1d": (lambda: _weighted(nn.batchnorm1d(x3, gamma, beta, bn, "train"), w3),
                        {"x": x3, "gamma": gamma, "beta": beta}),
        "lstm": (lambda: tsum(square(nn.lstm_forward(x3, W, U, b))), {"x": x3, "W": W, "U": U, "b": b}),
        "dense_cross_entropy": (lambda: nn.cross_entropy(nn.dense(xm, Wd, bd, "softmax"), labels),
                                {"x": xm, "W": Wd, "b": bd}),
        "dropout": (lambda: _weighted(nn.dropout_apply(xm, 0.3, np.random.default_rng(seed), "train"), wm),
                    {"x": xm}),
        "bayesian_dense_kl": (bayes, {"x": xm, "mu": mu, "rho": rho, "mb": mb, "rb": rb}),
    }
    return {name: nn.gradcheck(fn, params, step=step, max_coords=None) for name, (fn, params) in cases.items()}


def model_check(arch, scale: float = 0.5, batch: int = 2, seed: int = 0, num_classes: int = 3,
                max_coords: int = 12, step: float = 1e-5):
    """Gradient check of each learner graph in training mode.

    Returns (per-learner graph results, per-tensor results).
    """
    spec = ModelSpec(Architecture.parse(arch), num_classes, scale)
    model = build(spec, seed)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(batch, 512))
    y = np.arange(batch) % num_classes
    graphs, tensors = [], []
    for k, net in enumerate(model.learners):
        def loss_fn(net=net, k=k):
            probs = net.forward(x, training=True, rng=np.random.default_rng([seed, k]))
            loss = nn.cross_entropy(probs, y)
            kl = net.kl(spec.prior_sigma)
            return loss if kl is None else loss + kl * (1.0 / batch)
        per = nn.gradcheck(loss_fn, net.params, step=step, max_coords=max_coords, seed=seed)
        graphs.append(nn.combine(f"{spec.architecture_id.value}/learner{k}", per))
        tensors += [nn.GradCheckResult(f"learner{k}.{r.name}", r.n_checked, r.rel_error, r.max_abs_error)
                    for r in per]
    return graphs, tensors


def summarize(results) -> tuple[float, int]:
    """(worst relative error, coordinates checked)."""
    results = list(results)
    return max(r.rel_error for r in results), sum(r.n_checked for r in results)

