import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uafd.errors import ShapeMismatch
from uafd.models import ModelSpec, Network, build
from uafd.nn import rho_for_sigma
from uafd.predictors import (PredictionMatrix, Predictor, PredictorConfig, PredictorKind,
                             mean_dist, predictor_for)
from uafd.signal import Burst


@pytest.fixture(scope="module")
def bursts():
    return np.random.default_rng(3).standard_normal((6, 512))


def test_mean_dist_examples():
    assert mean_dist(PredictionMatrix(np.array([[0.5, 0.5], [1.0, 0.0]]))).tolist() == [0.75, 0.25]
    row = np.array([[0.2, 0.3, 0.5]])
    assert np.array_equal(mean_dist(PredictionMatrix(row)), row[0])


@settings(max_examples=100, deadline=None)
@given(k=st.integers(1, 12), c=st.integers(2, 8), seed=st.integers(0, 2**32 - 1))
def test_mean_dist_on_simplex(k, c, seed):
    p = np.random.default_rng(seed).dirichlet(np.ones(c), size=k)
    m = mean_dist(PredictionMatrix(p))
    assert abs(m.sum() - 1.0) <= 1e-6 and np.all(m >= 0)


def test_prediction_matrix_validation():
    with pytest.raises(ValueError):
        PredictionMatrix(np.array([[0.5, 0.6]]))
    with pytest.raises(ValueError):
        PredictionMatrix(np.array([[1.5, -0.5]]))
    with pytest.raises(ShapeMismatch):
        PredictionMatrix(np.array([0.5, 0.5]))
    m = PredictionMatrix(np.array([[0.5, 0.5], [0.1, 0.9]]))
    assert (m.K, m.C) == (2, 2)


def test_prediction_matrix_csv(tmp_path):
    m = PredictionMatrix(np.array([[0.25, 0.75], [1.0, 0.0]]))
    m.to_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text() == "p0,p1\n0.25,0.75\n1.0,0.0\n"


def test_mc_dropout_rate_zero_rows_identical(bursts):
    model = build(ModelSpec("ConvLSTM-D", 3, 0.25), 0)
    net = model.learners[0]
    layers = tuple(dataclasses.replace(l, rate=0.0) if l.kind == "dropout" else l for l in net.layers)
    quiet = Network(layers)
    quiet.params, quiet.bn = net.params, net.bn
    model.learners[0] = quiet
    m = predictor_for(model, seed=1).predict_dist(bursts[0])
    assert m.K == 10
    assert np.all(m.probs == m.probs[0])


def test_mc_dropout_rows_vary(bursts):
    m = predictor_for(build(ModelSpec("ConvLSTM-D", 3, 0.25), 0)).predict_dist(bursts[0])
    assert not np.all(m.probs == m.probs[0])


def test_bnn_degenerate_posterior_rows_identical(bursts):
    model = build(ModelSpec("BNN", 3, 0.25), 0)
    net = model.learners[0]
    for name, p in net.params.items():
        if name.endswith(".rho"):
            p.data = np.full(p.shape, rho_for_sigma(1e-300))
    m = predictor_for(model, seed=2).predict_dist(bursts[1])
    assert np.allclose(m.probs, m.probs[0], atol=1e-12)


def test_bnn_rows_vary(bursts):
    m = predictor_for(build(ModelSpec("BNN", 3, 0.25), 0)).predict_dist(bursts[1])
    assert not np.allclose(m.probs, m.probs[0])


def test_ensemble_rows_are_learners(bursts):
    model = build(ModelSpec("De2", 3, 0.25), 0)
    m = predictor_for(model).predict_dist(Burst(bursts[2], 0))
    assert m.K == 4
    for k in range(4):
        assert np.array_equal(m.probs[k], model.predict_proba(bursts[2:3], k)[0])


@pytest.mark.parametrize("arch,k", [("ConvLSTM-D", 7), ("BNN", 3), ("ConvLSTM-D", 1)])
def test_k_contract(arch, k, bursts):
    p = predictor_for(build(ModelSpec(arch, 3, 0.25), 0), k=k)
    out = p.predict_many(bursts)
    assert out.shape == (6, k, 3)
    assert p.forward_passes == 6 * k


def test_ensemble_k_must_match():
    model = build(ModelSpec("De1", 3, 0.25), 0)
    with pytest.raises(ValueError):
        Predictor(model, PredictorConfig(PredictorKind.ENSEMBLE, k=10))
    with pytest.raises(ValueError):
        Predictor(model, PredictorConfig(PredictorKind.MC_DROPOUT))
    with pytest.raises(ValueError):
        PredictorConfig(PredictorKind.BNN, k=0)
    assert predictor_for(model, k=10).k == 4


@pytest.mark.parametrize("arch", ["ConvLSTM-D", "BNN"])
def test_batching_independence(arch, bursts):
    model = build(ModelSpec(arch, 3, 0.25), 0)
    whole = predictor_for(model, seed=5).predict_many(bursts, indices=np.arange(10, 16))
    single = predictor_for(model, seed=5).predict_dist(bursts[3], index=13)
    # same random streams; only BLAS summation order differs with batch shape
    np.testing.assert_allclose(whole[3], single.probs, rtol=0, atol=1e-12)
    p = predictor_for(model, seed=5)
    p.chunk = 4
    np.testing.assert_allclose(p.predict_many(bursts, indices=np.arange(10, 16)), whole, rtol=0, atol=1e-12)
    again = predictor_for(model, seed=5).predict_many(bursts, indices=np.arange(10, 16))
    assert np.array_equal(again, whole)
    other = predictor_for(model, seed=6).predict_many(bursts, indices=np.arange(10, 16))
    assert not np.allclose(other, whole)


def test_rows_are_stochastic(bursts):
    for arch in ("ConvLSTM-D", "BNN", "De1", "De2"):
        out = predictor_for(build(ModelSpec(arch, 4, 0.25), 1)).predict_many(bursts)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)
        assert np.all((out >= 0) & (out <= 1))


def test_shape_mismatch():
    p = predictor_for(build(ModelSpec("De1", 3, 0.25), 0))
    with pytest.raises(ShapeMismatch):
        p.predict_many(np.zeros((2, 100)))
    with pytest.raises(ShapeMismatch):
        p.predict_many(np.zeros((2, 512)), indices=[0])
