"""Uncertainty-aware predictors producing a K x C prediction matrix per example."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch
from .models import Architecture, Model
from .rng import RowStreams, derive_rng

ROW_TOL = 1e-6


class PredictorKind(str, Enum):
    MC_DROPOUT = "mc_dropout"
    BNN = "bnn"
    ENSEMBLE = "ensemble"

    @classmethod
    def for_architecture(cls, arch: Architecture) -> "PredictorKind":
        return {
            Architecture.CONVLSTM_D: cls.MC_DROPOUT,
            Architecture.BNN: cls.BNN,
            Architecture.DE1: cls.ENSEMBLE,
            Architecture.DE2: cls.ENSEMBLE,
        }[Architecture.parse(arch)]


@dataclass(frozen=True)
class PredictionMatrix:
    """Per-pass class probabilities for one example (rows are passes)."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ShapeMismatch(f"prediction matrix must be K x C, got {p.shape}")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("prediction matrix entries must lie in [0, 1]")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > ROW_TOL):
            raise ValueError("prediction matrix rows must sum to 1")
        object.__setattr__(self, "probs", p)

    @property
    def K(self) -> int:
        return self.probs.shape[0]

    @property
    def C(self) -> int:
        return self.probs.shape[1]

    def to_csv(self, path) -> None:
        lines = [",".join(f"p{c}" for c in range(self.C))]
        lines += [",".join(repr(float(v)) for v in row) for row in self.probs]
        Path(path).write_text("\n".join(lines) + "\n")


def mean_dist(m: PredictionMatrix | np.ndarray) -> np.ndarray:
    """Average class distribution over the K passes."""
    probs = m.probs if isinstance(m, PredictionMatrix) else np.asarray(m)
    return probs.mean(axis=-2)


@dataclass(frozen=True)
class PredictorConfig:
    kind: PredictorKind
    k: int | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", PredictorKind(self.kind))
        if self.k is not None and self.k < 1:
            raise ValueError("K must be >= 1")


class Predictor:
    """Wraps a trained model; ``forward_passes`` counts per-example network passes."""

    chunk = 256

    def __init__(self, model: Model, cfg: PredictorConfig):
        self.model = model
        self.cfg = cfg
        n_learners = len(model.learners)
        if cfg.kind is PredictorKind.ENSEMBLE:
            if cfg.k is not None and cfg.k != n_learners:
                raise ValueError(f"ensemble K must equal its learner count {n_learners}, got {cfg.k}")
            self.k = n_learners
        else:
            if n_learners != 1:
                raise ValueError(f"{cfg.kind.value} predictor needs a single-network model")
            self.k = 10 if cfg.k is None else cfg.k
        self.forward_passes = 0

    @property
    def kind(self) -> PredictorKind:
        return self.cfg.kind

    def _chunk(self, x, indices) -> np.ndarray:
        out = np.empty((x.shape[0], self.k, self.model.spec.num_classes))
        for k in range(self.k):
            if self.kind is PredictorKind.ENSEMBLE:
                net, rng, mc = self.model.learners[k], None, False
            else:
                net = self.model.learners[0]
                rng = RowStreams([derive_rng(self.cfg.seed, "predict", int(i), k) for i in indices])
                mc = self.kind is PredictorKind.MC_DROPOUT
            out[:, k] = net.forward(x, training=False, mc_dropout=mc, rng=rng).data
            self.forward_passes += x.shape[0]
        return out

    def predict_many(self, x, indices=None) -> np.ndarray:
        """(N, K, C) prediction matrices for the rows of ``x``.

        ``indices`` are the examples' stable ids; each example's random
        streams derive from (seed, id, pass), so results do not depend on
        batching.  Defaults to ``range(N)``.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None]
        expected = self.model.learners[0].input_length
        if x.ndim != 2 or x.shape[1] != expected:
            raise ShapeMismatch(f"expected bursts of length {expected}, got shape {x.shape}")
        indices = np.arange(x.shape[0]) if indices is None else np.asarray(indices)
        if indices.shape != (x.shape[0],):
            raise ShapeMismatch("one index per example required")
        parts = [self._chunk(x[s : s + self.chunk], indices[s : s + self.chunk])
                 for s in range(0, x.shape[0], self.chunk)]
        return np.concatenate(parts) if parts else np.zeros((0, self.k, self.model.spec.num_classes))

    def predict_dist(self, burst, index: int = 0) -> PredictionMatrix:
        values = burst.values if hasattr(burst, "values") else burst
        return PredictionMatrix(self.predict_many(np.asarray(values)[None], [index])[0])


def predictor_for(model: Model, seed: int = 0, k: int | None = None) -> Predictor:
    """The predictor family that matches the model's architecture."""
    kind = PredictorKind.for_architecture(model.spec.architecture_id)
    if kind is PredictorKind.ENSEMBLE:
        k = None
    return Predictor(model, PredictorConfig(kind, k, seed))
