import json

import numpy as np
import pytest

from architecture_tables import TABLES, materialized_rows
from uafd.errors import CorruptCheckpoint, InvalidSpec, VersionMismatch
from uafd.models import (Architecture, ModelSpec, TrainConfig, accuracy, build, load_checkpoint,
                         save_checkpoint, shape_walk, train, train_learner)
from uafd.predictors import PredictorKind
from uafd.signal import generate_synthetic

ARCHS = list(Architecture)


@pytest.mark.parametrize("arch", ARCHS)
def test_tables_at_full_scale(arch):
    assert materialized_rows(ModelSpec(arch, 6, 1.0)) == TABLES[arch.value]


def test_de1_identical_learners():
    learners = ModelSpec("De1").learners
    assert len(learners) == 4 and len(set(learners)) == 1


def test_de2_two_plus_two():
    learners = ModelSpec("De2").learners
    assert len(learners) == 4
    assert learners[0] == learners[1] and learners[2] == learners[3]
    assert learners[0] != learners[2]


def test_convlstm_shape_walk():
    walk = shape_walk(ModelSpec("ConvLSTM-D", 6).learners[0])
    assert walk == [(512,), (32, 16), (16, 16), (16, 32), (8, 32), (64,), (100,), (6,)]


@pytest.mark.parametrize("arch,k", [("ConvLSTM-D", 10), ("BNN", 10), ("De1", 4), ("De2", 4)])
def test_default_k(arch, k):
    assert ModelSpec(arch).default_k == k


def test_predictor_kinds():
    assert PredictorKind.for_architecture(Architecture.CONVLSTM_D) is PredictorKind.MC_DROPOUT
    assert PredictorKind.for_architecture(Architecture.BNN) is PredictorKind.BNN
    assert PredictorKind.for_architecture(Architecture.DE2) is PredictorKind.ENSEMBLE


def test_scale_shrinks_widths():
    rows = materialized_rows(ModelSpec("ConvLSTM-D", 3, 0.25))[0]
    assert [r.get("units") for r in rows if r["kind"] in ("conv_pool", "lstm", "dense", "output")] == [4, 8, 16, 25, 3]


def test_spec_validation():
    for bad in (dict(num_classes=1), dict(scale=0.0), dict(scale=1.5), dict(prior_sigma=0.0)):
        with pytest.raises(InvalidSpec):
            ModelSpec("De1", **bad)
    with pytest.raises(InvalidSpec):
        ModelSpec("ResNet")
    assert ModelSpec("convlstm_d").architecture_id is Architecture.CONVLSTM_D


@pytest.mark.parametrize("arch", ARCHS)
def test_forward_is_distribution(arch):
    model = build(ModelSpec(arch, 3, 0.25), seed=1)
    x = np.random.default_rng(0).standard_normal((5, 512))
    for k in range(len(model.learners)):
        p = model.predict_proba(x, k, rng=np.random.default_rng(k))
        assert p.shape == (5, 3)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


@pytest.fixture(scope="module")
def separable():
    return generate_synthetic(3, 100, 512, seed=7)


@pytest.mark.parametrize("arch", ARCHS)
def test_training_reaches_accuracy(arch, separable):
    # gate set after the first seeded run cleared it for every architecture
    model, losses = train(build(ModelSpec(arch, 3, 0.25), seed=7), separable,
                          TrainConfig(epochs=25, seed=7))
    assert len(losses) == 25
    assert model.accuracy_history[-1] >= 0.95
    assert losses[-1] < losses[0]
    assert model.epochs == 25


@pytest.mark.parametrize("arch", ARCHS)
def test_training_determinism(arch):
    ds = generate_synthetic(3, 10, 512, seed=1)
    spec = ModelSpec(arch, 3, 0.25)
    cfg = TrainConfig(epochs=1, batch_size=8, seed=3)
    a, _ = train(build(spec, 2), ds, cfg)
    b, _ = train(build(spec, 2), ds, cfg)
    for na, nb in zip(a.learners, b.learners):
        assert all(np.array_equal(na.params[k].data, nb.params[k].data) for k in na.params)


def test_train_leaves_input_untouched():
    ds = generate_synthetic(2, 8, 512, seed=0)
    model = build(ModelSpec("De1", 2, 0.25), 0)
    before = {k: p.data.copy() for k, p in model.learners[0].params.items()}
    train(model, ds, TrainConfig(epochs=1, batch_size=8))
    assert all(np.array_equal(before[k], p.data) for k, p in model.learners[0].params.items())


def test_label_out_of_range():
    ds = generate_synthetic(3, 4, 512, seed=0)
    with pytest.raises(ValueError):
        train(build(ModelSpec("De1", 2, 0.25)), ds, TrainConfig(epochs=1))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=1)


def test_ensemble_independence():
    # each learner's result depends only on its own index, not on training order
    ds = generate_synthetic(2, 8, 512, seed=4)
    spec = ModelSpec("De1", 2, 0.25)
    cfg = TrainConfig(epochs=1, batch_size=8, seed=5)
    model = build(spec, 1)
    x, y = ds.values, ds.labels
    forward = [net.copy() for net in model.learners]
    for k, net in enumerate(forward):
        train_learner(net, x, y, cfg, spec, k)
    backward = [net.copy() for net in model.learners]
    for k in reversed(range(4)):
        train_learner(backward[k], x, y, cfg, spec, k)
    for a, b in zip(forward, backward):
        assert all(np.array_equal(a.params[n].data, b.params[n].data) for n in a.params)
    # learners start from distinct initializations
    assert not np.array_equal(forward[0].params["l1.kernel"].data, forward[1].params["l1.kernel"].data)


@pytest.mark.parametrize("arch", ARCHS)
def test_checkpoint_round_trip(arch, tmp_path):
    ds = generate_synthetic(3, 6, 512, seed=0)
    model, _ = train(build(ModelSpec(arch, 3, 0.25), 4), ds, TrainConfig(epochs=1, batch_size=6, seed=2))
    path = tmp_path / "m.json"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert back.spec == model.spec and back.epochs == 1
    assert back.init_seed == 4 and back.train_seed == 2
    for na, nb in zip(model.learners, back.learners):
        for k in na.params:
            assert np.array_equal(na.params[k].data, nb.params[k].data)
    x = ds.values[:4]
    for k in range(len(model.learners)):
        a = model.predict_proba(x, k, rng=np.random.default_rng(0))
        b = back.predict_proba(x, k, rng=np.random.default_rng(0))
        assert np.array_equal(a, b)
    assert accuracy(model, ds) == accuracy(back, ds)


def test_bnn_checkpoint_stores_mu_rho(tmp_path):
    path = tmp_path / "b.json"
    save_checkpoint(build(ModelSpec("BNN", 3, 0.25)), path)
    names = set(json.loads(path.read_text())["learners"][0]["params"])
    assert {n for n in names if n.endswith((".mu", ".rho"))} == {
        "l4.w.mu", "l4.w.rho", "l4.b.mu", "l4.b.rho", "l6.w.mu", "l6.w.rho", "l6.b.mu", "l6.b.rho"}
    assert not any(n.startswith(("l4.", "l6.")) and not n.endswith((".mu", ".rho")) for n in names)


def test_checkpoint_version_mismatch(tmp_path):
    path = tmp_path / "m.json"
    save_checkpoint(build(ModelSpec("De1", 2, 0.25)), path)
    doc = json.loads(path.read_text())
    doc["format_version"] = 999
    path.write_text(json.dumps(doc))
    with pytest.raises(VersionMismatch):
        load_checkpoint(path)


def test_checkpoint_corrupt(tmp_path):
    path = tmp_path / "m.json"
    path.write_text("{not json")
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(path)
    save_checkpoint(build(ModelSpec("De1", 2, 0.25)), path)
    doc = json.loads(path.read_text())
    doc["learners"][0]["params"]["l1.kernel"] = [[1.0]]
    path.write_text(json.dumps(doc))
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(path)
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(tmp_path / "missing.json")
