"""The four architectures (ConvLSTM-D, BNN, De1, De2), training and checkpoints."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import nn
from .errors import (
    CorruptCheckpoint,
    InvalidSpec,
    NonFiniteError,
    NonFiniteLoss,
    ShapeMismatch,
    VersionMismatch,
)
from .nn.ops import GaussianWeight, rho_for_sigma
from .nn.tensor import Tensor, parameter, relu, reshape
from .rng import derive_rng, fisher_yates
from .signal import LabeledDataset

CHECKPOINT_VERSION = 1
INPUT_LENGTH = 512
DROPOUT_RATE = 0.2
BNN_INIT_SIGMA = 0.05


class Architecture(str, Enum):
    CONVLSTM_D = "ConvLSTM-D"
    BNN = "BNN"
    DE1 = "De1"
    DE2 = "De2"

    @classmethod
    def parse(cls, value) -> "Architecture":
        if isinstance(value, cls):
            return value
        key = str(value).replace("_", "-").lower()
        for a in cls:
            if a.value.lower() == key:
                return a
        raise InvalidSpec(f"unknown architecture {value!r}")

    @property
    def is_ensemble(self) -> bool:
        return self in (Architecture.DE1, Architecture.DE2)


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a materialized architecture.

    ``train_only`` marks dropout used during training but never at inference
    (even for Monte Carlo sampling).
    """

    kind: str
    units: int | None = None
    kernel: int | None = None
    stride: int | None = None
    padding: str | None = None
    activation: str | None = None
    batchnorm: bool | None = None
    pool_stride: int | None = None
    rate: float | None = None
    bayesian: bool = False
    train_only: bool = False

    def row(self) -> dict:
        """The hyperparameter fields that are set, for table comparison."""
        out = {"kind": self.kind}
        for key in ("units", "kernel", "stride", "padding", "activation", "batchnorm", "pool_stride", "rate"):
            v = getattr(self, key)
            if v is not None:
                out[key] = v
        if self.bayesian:
            out["bayesian"] = True
        return out


def _width(n: int, scale: float) -> int:
    return max(1, math.ceil(n * scale - 1e-9))


def _conv_pool(filters, kernel, stride, scale):
    return LayerSpec("conv_pool", units=_width(filters, scale), kernel=kernel, stride=stride,
                     padding="same", activation="relu", batchnorm=True, pool_stride=2)


def _learner_shallow(C, scale):
    # De1 base learner
    return (
        LayerSpec("input", units=INPUT_LENGTH),
        _conv_pool(16, 3, 1, scale),
        LayerSpec("flatten"),
        LayerSpec("dense", units=_width(64, scale), activation="sigmoid"),
        LayerSpec("output", units=C, activation="softmax"),
    )


def _learner_deep(C, scale, dropout_sites: bool):
    layers = [LayerSpec("input", units=INPUT_LENGTH), _conv_pool(16, 64, 16, scale)]
    if dropout_sites:
        layers.append(LayerSpec("dropout", rate=DROPOUT_RATE))
    layers.append(_conv_pool(32, 3, 1, scale))
    if dropout_sites:
        layers.append(LayerSpec("dropout", rate=DROPOUT_RATE))
    layers += [
        LayerSpec("lstm", units=_width(64, scale)),
        LayerSpec("dense", units=_width(100, scale), activation="sigmoid"),
        LayerSpec("dropout", rate=DROPOUT_RATE, train_only=not dropout_sites),
        LayerSpec("output", units=C, activation="softmax"),
    ]
    return tuple(layers)


def _learner_bnn(C, scale):
    return (
        LayerSpec("input", units=INPUT_LENGTH),
        _conv_pool(16, 64, 16, scale),
        _conv_pool(32, 3, 1, scale),
        LayerSpec("lstm", units=_width(64, scale)),
        LayerSpec("dense", units=_width(100, scale), activation="sigmoid", bayesian=True),
        LayerSpec("dropout", rate=DROPOUT_RATE, train_only=True),
        LayerSpec("output", units=C, activation="softmax", bayesian=True),
    )


@dataclass(frozen=True)
class ModelSpec:
    architecture_id: Architecture
    num_classes: int = 6
    scale: float = 1.0
    prior_sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "architecture_id", Architecture.parse(self.architecture_id))
        object.__setattr__(self, "num_classes", int(self.num_classes))
        if int(self.num_classes) < 2:
            raise InvalidSpec("num_classes must be >= 2")
        if not 0.0 < self.scale <= 1.0:
            raise InvalidSpec("scale must lie in (0, 1]")
        if self.prior_sigma <= 0:
            raise InvalidSpec("prior_sigma must be > 0")

    @property
    def learners(self) -> tuple[tuple[LayerSpec, ...], ...]:
        """Materialized layer list of every base learner."""
        C, s = self.num_classes, self.scale
        a = self.architecture_id
        if a is Architecture.CONVLSTM_D:
            return (_learner_deep(C, s, dropout_sites=True),)
        if a is Architecture.BNN:
            return (_learner_bnn(C, s),)
        if a is Architecture.DE1:
            return tuple(_learner_shallow(C, s) for _ in range(4))
        if a is Architecture.DE2:
            return (_learner_shallow(C, s),) * 2 + (_learner_deep(C, s, dropout_sites=False),) * 2
        raise InvalidSpec(f"unsupported architecture {a}")

    @property
    def default_k(self) -> int:
        return len(self.learners) if self.architecture_id.is_ensemble else 10

    def to_dict(self) -> dict:
        return {"architecture_id": self.architecture_id.value, "num_classes": self.num_classes,
                "scale": self.scale, "prior_sigma": self.prior_sigma}


def _next_shape(layer: LayerSpec, shape: tuple[int, ...]) -> tuple[int, ...]:
    if layer.kind == "conv_pool":
        L = -(-shape[0] // layer.stride)
        return (-(-L // layer.pool_stride), layer.units)
    if layer.kind in ("lstm", "dense", "output"):
        return (layer.units,)
    if layer.kind == "flatten":
        return (int(np.prod(shape)),)
    return shape


def shape_walk(layers, input_length: int = INPUT_LENGTH) -> list[tuple[int, ...]]:
    """Per-example activation shapes through the network.

    Convolution and pooling are listed as separate steps; shape-preserving
    layers (dropout) are skipped.
    """
    walk = [(input_length,)]
    shape: tuple[int, ...] = (input_length, 1)
    for layer in layers:
        if layer.kind in ("input", "dropout"):
            continue
        if layer.kind == "conv_pool":
            walk.append((-(-shape[0] // layer.stride), layer.units))
        shape = _next_shape(layer, shape)
        walk.append(shape)
    return walk


# ---------------------------------------------------------------------------
# networks
# ---------------------------------------------------------------------------

def _glorot(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Network:
    """One base learner: parameters, batch-norm statistics and a forward pass."""

    def __init__(self, layers, rng=None, input_length: int = INPUT_LENGTH):
        self.layers = tuple(layers)
        self.input_length = input_length
        self.params: dict[str, Tensor] = {}
        self.bn: dict[str, nn.BatchNormState] = {}
        if rng is not None:
            self._init(rng)

    def _add(self, name, data):
        self.params[name] = parameter(data, name)

    def _init(self, rng):
        shape = (self.input_length, 1)
        for i, layer in enumerate(self.layers):
            p = f"l{i}"
            if layer.kind == "conv_pool":
                k, c_in, c_out = layer.kernel, shape[1], layer.units
                self._add(f"{p}.kernel", _glorot(rng, (k, c_in, c_out), k * c_in, k * c_out))
                self._add(f"{p}.bias", np.zeros(c_out))
                self._add(f"{p}.gamma", np.ones(c_out))
                self._add(f"{p}.beta", np.zeros(c_out))
                self.bn[f"{p}.bn"] = nn.BatchNormState.fresh(c_out)
            elif layer.kind == "lstm":
                F, H = shape[1], layer.units
                self._add(f"{p}.W", _glorot(rng, (F, 4 * H), F, 4 * H))
                self._add(f"{p}.U", _glorot(rng, (H, 4 * H), H, 4 * H))
                b = np.zeros(4 * H)
                b[H : 2 * H] = 1.0  # forget gate
                self._add(f"{p}.b", b)
            elif layer.kind in ("dense", "output"):
                F, O = shape[0], layer.units
                if layer.bayesian:
                    rho = rho_for_sigma(BNN_INIT_SIGMA)
                    self._add(f"{p}.w.mu", _glorot(rng, (F, O), F, O))
                    self._add(f"{p}.w.rho", np.full((F, O), rho))
                    self._add(f"{p}.b.mu", np.zeros(O))
                    self._add(f"{p}.b.rho", np.full(O, rho))
                else:
                    self._add(f"{p}.W", _glorot(rng, (F, O), F, O))
                    self._add(f"{p}.b", np.zeros(O))
            shape = _next_shape(layer, shape)

    def gaussian(self, prefix) -> GaussianWeight:
        return GaussianWeight(self.params[f"{prefix}.mu"], self.params[f"{prefix}.rho"])

    @property
    def bayesian_prefixes(self) -> list[str]:
        return [n[: -len(".mu")] for n in self.params if n.endswith(".mu")]

    @property
    def has_mc_dropout(self) -> bool:
        return any(l.kind == "dropout" and not l.train_only and l.rate > 0 for l in self.layers)

    def forward(self, x, training: bool = False, mc_dropout: bool = False, rng=None) -> Tensor:
        """Class probabilities for a batch ``x`` of shape (B, input_length).

        ``training`` uses batch-norm batch statistics and every dropout site;
        otherwise running statistics are used and only non-train-only dropout
        sites fire, and only when ``mc_dropout`` is set.  Bayesian layers draw
        weights from ``rng`` in every mode.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_length:
            raise ShapeMismatch(f"expected input (B, {self.input_length}), got {x.shape}")
        h = Tensor(x[:, :, None])
        for i, layer in enumerate(self.layers):
            p = f"l{i}"
            kind = layer.kind
            if kind == "conv_pool":
                P = self.params
                h = nn.conv1d(h, P[f"{p}.kernel"], P[f"{p}.bias"], stride=layer.stride)
                h = nn.batchnorm1d(h, P[f"{p}.gamma"], P[f"{p}.beta"], self.bn[f"{p}.bn"],
                                   "train" if training else "inference")
                h = nn.maxpool1d(relu(h), layer.pool_stride)
            elif kind == "dropout":
                active = training or (mc_dropout and not layer.train_only)
                h = nn.dropout_apply(h, layer.rate, rng, "train" if training else ("mc_inference" if active else "off"))
            elif kind == "lstm":
                P = self.params
                h = nn.lstm_forward(h, P[f"{p}.W"], P[f"{p}.U"], P[f"{p}.b"])
            elif kind == "flatten":
                h = reshape(h, (h.shape[0], -1))
            elif kind in ("dense", "output"):
                if layer.bayesian:
                    if rng is None:
                        raise ValueError("Bayesian layers need a random source")
                    h = nn.bayesian_dense(h, self.gaussian(f"{p}.w"), self.gaussian(f"{p}.b"), rng, layer.activation)
                else:
                    h = nn.dense(h, self.params[f"{p}.W"], self.params[f"{p}.b"], layer.activation)
        return h

    def kl(self, prior_sigma: float) -> Tensor | None:
        terms = [nn.kl_gaussian(self.gaussian(p), prior_sigma) for p in self.bayesian_prefixes]
        if not terms:
            return None
        total = terms[0]
        for t in terms[1:]:
            total = total + t
        return total

    def copy(self) -> "Network":
        other = Network(self.layers, None, self.input_length)
        other.params = {k: parameter(v.data.copy(), k) for k, v in self.params.items()}
        other.bn = {k: nn.BatchNormState(v.running_mean.copy(), v.running_var.copy()) for k, v in self.bn.items()}
        return other


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 25
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch normalization)")

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "batch_size": self.batch_size, "lr": self.lr,
                "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "seed": self.seed}


@dataclass
class Model:
    """A built model; ``epochs`` is 0 until trained.

    ``history`` holds per-learner, per-epoch mean training loss and accuracy.
    """

    spec: ModelSpec
    learners: list[Network]
    init_seed: int = 0
    train_seed: int | None = None
    epochs: int = 0
    history: list[dict] = field(default_factory=list)

    @property
    def loss_history(self) -> list[float]:
        """Per-epoch training loss averaged over learners."""
        if not self.history:
            return []
        return [float(np.mean(v)) for v in zip(*(h["loss"] for h in self.history))]

    @property
    def accuracy_history(self) -> list[float]:
        if not self.history:
            return []
        return [float(np.mean(v)) for v in zip(*(h["accuracy"] for h in self.history))]

    def predict_proba(self, x, learner: int = 0, rng=None) -> np.ndarray:
        """Deterministic-mode probabilities of one learner (dropout off)."""
        return self.learners[learner].forward(x, training=False, rng=rng).data


TrainedModel = Model


def build(spec: ModelSpec, seed: int = 0) -> Model:
    """Fresh model with parameters initialized from ``seed``."""
    learners = [Network(layers, derive_rng(seed, "init", k)) for k, layers in enumerate(spec.learners)]
    return Model(spec, learners, init_seed=seed)


def _batches(perm, batch_size):
    out = [perm[i : i + batch_size] for i in range(0, perm.size, batch_size)]
    if len(out) > 1 and out[-1].size < 2:
        out[-2] = np.concatenate([out[-2], out[-1]])
        out.pop()
    return out


def train_learner(net: Network, x, y, cfg: TrainConfig, spec: ModelSpec, index: int) -> dict:
    """Mini-batch Adam on one learner, seeded by (cfg.seed, index) only."""
    n = x.shape[0]
    shuffle_rng = derive_rng(cfg.seed, "shuffle", index)
    noise_rng = derive_rng(cfg.seed, "dropout", index)
    state = nn.AdamState(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    bayes = bool(net.bayesian_prefixes)
    history = {"loss": [], "accuracy": []}
    for epoch in range(cfg.epochs):
        perm = fisher_yates(n, shuffle_rng)
        batches = _batches(perm, cfg.batch_size)
        losses, correct = [], 0
        for bi, idx in enumerate(batches):
            try:
                probs = net.forward(x[idx], training=True, rng=noise_rng)
                loss = nn.cross_entropy(probs, y[idx])
                if bayes:
                    # per-batch ELBO (summed NLL + KL / batches), divided by the batch size
                    loss = loss + net.kl(spec.prior_sigma) * (1.0 / (len(batches) * idx.size))
                grads = nn.backward(loss, net.params)
            except NonFiniteError as exc:
                raise NonFiniteLoss(
                    f"learner {index}, epoch {epoch}, batch {bi}: {exc}"
                ) from exc
            new = nn.adam_step(state, {k: p.data for k, p in net.params.items()}, grads)
            for k, v in new.items():
                net.params[k].data = v
                net.params[k].grad = None
            losses.append(float(loss.data) * idx.size)
            correct += int((probs.data.argmax(axis=1) == y[idx]).sum())
        history["loss"].append(sum(losses) / n)
        history["accuracy"].append(correct / n)
    return history


def train(model: Model, train_set: LabeledDataset, cfg: TrainConfig, labels=None) -> tuple[Model, list[float]]:
    """Train every learner and return (model, per-epoch loss history).

    ``labels`` overrides the dataset labels (used to remap ID classes in
    hold-out scenarios).  The input model is not modified.
    """
    x = train_set.values
    y = train_set.labels if labels is None else np.asarray(labels, dtype=np.int64)
    C = model.spec.num_classes
    if y.size == 0:
        raise ValueError("empty training set")
    if y.min() < 0 or y.max() >= C:
        raise ValueError(f"training labels must lie in [0, {C}); got range [{y.min()}, {y.max()}]")
    learners = [net.copy() for net in model.learners]
    history = [train_learner(net, x, y, cfg, model.spec, k) for k, net in enumerate(learners)]
    trained = Model(model.spec, learners, model.init_seed, cfg.seed, model.epochs + cfg.epochs,
                    history)
    return trained, trained.loss_history


def accuracy(model: Model, ds: LabeledDataset, labels=None, rng_seed: int = 0) -> float:
    """Accuracy of the learners' averaged deterministic-mode probabilities."""
    y = ds.labels if labels is None else np.asarray(labels)
    probs = np.mean([m.forward(ds.values, rng=derive_rng(rng_seed, "acc", k)).data
                     for k, m in enumerate(model.learners)], axis=0)
    return float(np.mean(probs.argmax(axis=1) == y))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model: Model, path) -> None:
    """Versioned JSON checkpoint with parameters as nested decimal lists."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "architecture_id": model.spec.architecture_id.value,
        "num_classes": model.spec.num_classes,
        "scale": model.spec.scale,
        "prior_sigma": model.spec.prior_sigma,
        "seeds": {"init": model.init_seed, "train": model.train_seed},
        "epochs": model.epochs,
        "history": model.history,
        "learners": [
            {
                "params": {k: p.data.tolist() for k, p in net.params.items()},
                "batchnorm": {k: {"running_mean": s.running_mean.tolist(), "running_var": s.running_var.tolist()}
                              for k, s in net.bn.items()},
            }
            for net in model.learners
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> Model:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CorruptCheckpoint(f"{path}: missing format_version")
    if doc["format_version"] != CHECKPOINT_VERSION:
        raise VersionMismatch(f"{path}: format_version {doc['format_version']} != {CHECKPOINT_VERSION}")
    try:
        spec = ModelSpec(doc["architecture_id"], int(doc["num_classes"]), float(doc["scale"]),
                         float(doc.get("prior_sigma", 1.0)))
        template = build(spec, 0)
        learners = []
        if len(doc["learners"]) != len(template.learners):
            raise CorruptCheckpoint(f"{path}: expected {len(template.learners)} learners")
        for net, entry in zip(template.learners, doc["learners"]):
            if set(entry["params"]) != set(net.params) or set(entry["batchnorm"]) != set(net.bn):
                raise CorruptCheckpoint(f"{path}: parameter names do not match {spec.architecture_id.value}")
            for k, p in net.params.items():
                arr = np.asarray(entry["params"][k], dtype=np.float64)
                if arr.shape != p.shape or not np.all(np.isfinite(arr)):
                    raise CorruptCheckpoint(f"{path}: parameter {k} has shape {arr.shape}, expected {p.shape}")
                p.data = arr
            for k, s in net.bn.items():
                s.running_mean = np.asarray(entry["batchnorm"][k]["running_mean"], dtype=np.float64)
                s.running_var = np.asarray(entry["batchnorm"][k]["running_var"], dtype=np.float64)
            learners.append(net)
        seeds = doc["seeds"]
        return Model(spec, learners, int(seeds["init"]), seeds["train"], int(doc["epochs"]), doc.get("history", []))
    except (KeyError, TypeError, ValueError, InvalidSpec) as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from exc
