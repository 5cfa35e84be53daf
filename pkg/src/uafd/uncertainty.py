"""Predictive entropy, the two entropy thresholds and trust evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import EmptyInput, LengthMismatch, NoPositives
from .predictors import PredictionMatrix

PROB_FLOOR = 1e-12
HIST_BINS = 50


def entropy(m) -> float | np.ndarray:
    """Shannon entropy (nats) of the pass-averaged distribution.

    Accepts a :class:`PredictionMatrix`, a (K, C) array, or a stack
    (N, K, C), in which case one entropy per example is returned.
    """
    probs = m.probs if isinstance(m, PredictionMatrix) else np.asarray(m, dtype=np.float64)
    p = probs.mean(axis=-2)
    h = -np.sum(p * np.log(np.maximum(p, PROB_FLOOR)), axis=-1)
    h = np.maximum(h, 0.0)
    return float(h) if h.ndim == 0 else h


@dataclass(frozen=True)
class EntropyRecord:
    value: float
    index: int
    ood: bool | None = None

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value >= 0.0):
            raise ValueError(f"entropy must be finite and >= 0, got {self.value}")


def entropy_records(entropies, ood=None) -> list[EntropyRecord]:
    flags = [None] * len(entropies) if ood is None else [bool(f) for f in ood]
    return [EntropyRecord(float(h), i, f) for i, (h, f) in enumerate(zip(entropies, flags))]


def quartile(sorted_values, q: float) -> float:
    """Linear interpolation between order statistics at position (n - 1) q."""
    n = len(sorted_values)
    pos = (n - 1) * q
    lo = math.floor(pos)
    hi = min(lo + 1, n - 1)
    a, b = float(sorted_values[lo]), float(sorted_values[hi])
    return a + (b - a) * (pos - lo)


def tau1(id_entropies) -> float:
    """Outlier fence Q3 + 1.5 (Q3 - Q1) of in-distribution entropies."""
    vals = np.sort(np.asarray(id_entropies, dtype=np.float64).ravel())
    if vals.size == 0:
        raise EmptyInput("tau1 needs at least one entropy value")
    if not np.all(np.isfinite(vals)):
        raise ValueError("entropies must be finite")
    q1 = quartile(vals, 0.25)
    q3 = quartile(vals, 0.75)
    return q3 + 1.5 * (q3 - q1)


def _threshold_counts(entropies, ood, candidates):
    """tp, fp at each candidate under the rule ``H >= candidate``."""
    ood_h = np.sort(entropies[ood])
    id_h = np.sort(entropies[~ood])
    tp = ood_h.size - np.searchsorted(ood_h, candidates, side="left")
    fp = id_h.size - np.searchsorted(id_h, candidates, side="left")
    return tp, fp, int(ood_h.size)


@dataclass(frozen=True)
class Tau2Result:
    tau: float
    f1: float
    n_candidates: int


def tau2_search(entropies, ood_flags) -> Tau2Result:
    """Validation entropy value maximizing F1; ties go to the smallest value.

    F1 values are compared exactly as rationals 2tp / (2tp + fp + fn).
    """
    h = np.asarray(entropies, dtype=np.float64).ravel()
    ood = np.asarray(ood_flags, dtype=bool).ravel()
    if h.shape != ood.shape:
        raise LengthMismatch(f"{h.size} entropies vs {ood.size} flags")
    if h.size == 0:
        raise EmptyInput("tau2 needs at least one entropy value")
    if not ood.any():
        raise NoPositives("tau2 needs at least one OOD example")
    candidates = np.unique(h)  # ascending
    tp, fp, n_pos = _threshold_counts(h, ood, candidates)
    best, best_i = Fraction(-1), -1
    for i in range(candidates.size):
        t = int(tp[i])
        f1 = Fraction(2 * t, 2 * t + int(fp[i]) + (n_pos - t)) if t else Fraction(0)
        if f1 > best:  # strict: earliest (smallest) candidate wins ties
            best, best_i = f1, i
    return Tau2Result(float(candidates[best_i]), float(best), int(candidates.size))


def tau2(entropies, ood_flags) -> float:
    return tau2_search(entropies, ood_flags).tau


def classify_trust(entropies, tau: float) -> np.ndarray:
    """True where an example is untrustworthy (H >= tau)."""
    if not math.isfinite(tau):
        raise ValueError("tau must be finite")
    return np.asarray(entropies, dtype=np.float64) >= tau


@dataclass(frozen=True)
class TrustConfusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    @property
    def ood_ut_pct(self) -> float:
        """Percentage of OOD examples flagged untrustworthy."""
        d = self.tp + self.fn
        return 100.0 * self.tp / d if d else 0.0

    @property
    def id_ut_pct(self) -> float:
        """Percentage of ID examples flagged untrustworthy."""
        d = self.fp + self.tn
        return 100.0 * self.fp / d if d else 0.0

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1,
                "ood_ut_pct": self.ood_ut_pct, "id_ut_pct": self.id_ut_pct}


def confusion(flags, ood_truth) -> TrustConfusion:
    flags = np.asarray(flags, dtype=bool).ravel()
    truth = np.asarray(ood_truth, dtype=bool).ravel()
    if flags.shape != truth.shape:
        raise LengthMismatch(f"{flags.size} flags vs {truth.size} ground-truth labels")
    return TrustConfusion(
        tp=int(np.sum(flags & truth)),
        fp=int(np.sum(flags & ~truth)),
        fn=int(np.sum(~flags & truth)),
        tn=int(np.sum(~flags & ~truth)),
    )


@dataclass(frozen=True)
class ThresholdPair:
    tau1: float
    tau2: float
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"tau1": self.tau1, "tau2": self.tau2, "provenance": self.provenance}


def calibrate(val_entropies, val_ood) -> ThresholdPair:
    """tau1 from the ID validation entropies, tau2 from all of them."""
    h = np.asarray(val_entropies, dtype=np.float64)
    ood = np.asarray(val_ood, dtype=bool)
    id_h = np.sort(h[~ood])
    t1 = tau1(id_h)
    r2 = tau2_search(h, ood)
    q1, q3 = quartile(id_h, 0.25), quartile(id_h, 0.75)
    return ThresholdPair(t1, r2.tau, {
        "n_id": int(id_h.size), "n_ood": int(ood.sum()),
        "q1": q1, "q3": q3, "iqr": q3 - q1,
        "tau2_candidates": r2.n_candidates, "tau2_f1": r2.f1,
    })


def entropy_histogram(entropies, ood, num_classes: int, bins: int = HIST_BINS):
    """Counts of ID and OOD entropies in uniform bins over [0, ln C].

    Returns (edges, id_counts, ood_counts); values are clipped into range.
    """
    edges = np.linspace(0.0, math.log(num_classes), bins + 1)
    h = np.clip(np.asarray(entropies, dtype=np.float64), 0.0, edges[-1])
    ood = np.asarray(ood, dtype=bool)
    id_counts, _ = np.histogram(h[~ood], bins=edges)
    ood_counts, _ = np.histogram(h[ood], bins=edges)
    return edges, id_counts, ood_counts


def write_histogram_csv(path, edges, id_counts, ood_counts) -> None:
    lines = ["bin_lo,bin_hi,id_count,ood_count"]
    for lo, hi, a, b in zip(edges[:-1], edges[1:], id_counts, ood_counts):
        lines.append(f"{lo:.6f},{hi:.6f},{int(a)},{int(b)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
