"""SNR-calibrated noise generation and dataset corruption (aleatoric OOD data)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateRealization, UndefinedSNR
from .rng import derive_rng
from .signal import Burst, LabeledDataset, with_ood

_MAX_REDRAWS = 8


class NoiseKind(str, Enum):
    GAUSSIAN = "gaussian"
    IMPULSE = "impulse"
    RAYLEIGH = "rayleigh"
    WEIBULL = "weibull"

    @classmethod
    def parse(cls, value) -> "NoiseKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower())


@dataclass(frozen=True)
class NoiseSpec:
    kind: NoiseKind
    snr_db: float
    impulse_p: float = 0.05
    weibull_k: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind.parse(self.kind))
        if not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if not 0.0 < self.impulse_p <= 1.0:
            raise ValueError("impulse_p must lie in (0, 1]")
        if not self.weibull_k > 0.0:
            raise ValueError("weibull_k must be > 0")

    @property
    def key(self) -> str:
        return f"{self.kind.value}@{self.snr_db:+g}dB"

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "snr_db": self.snr_db,
                "impulse_p": self.impulse_p, "weibull_k": self.weibull_k}


@dataclass(frozen=True)
class CorruptionPlan:
    spec: NoiseSpec
    fraction: float = 0.20
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")


def signal_power(x) -> float:
    """Mean of squared samples."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("signal_power of an empty vector")
    return float(np.mean(x * x))


def snr_db(p_signal: float, p_noise: float) -> float:
    """10 log10(P_signal / P_noise)."""
    if p_signal <= 0.0 or p_noise <= 0.0:
        raise UndefinedSNR(f"SNR undefined for powers ({p_signal}, {p_noise})")
    return 10.0 * math.log10(p_signal / p_noise)


def _random_sign(rng, length):
    return np.where(rng.random(length) < 0.5, -1.0, 1.0)


def _raw_noise(spec: NoiseSpec, length: int, rng: np.random.Generator) -> np.ndarray:
    kind = spec.kind
    if kind is NoiseKind.GAUSSIAN:
        return rng.standard_normal(length)
    if kind is NoiseKind.IMPULSE:
        # sparse bipolar spikes; the amplitude is irrelevant after normalization
        hits = rng.random(length) < spec.impulse_p
        return np.where(hits, _random_sign(rng, length), 0.0)
    if kind is NoiseKind.RAYLEIGH:
        return rng.rayleigh(1.0, length) * _random_sign(rng, length)
    if kind is NoiseKind.WEIBULL:
        return rng.weibull(spec.weibull_k, length) * _random_sign(rng, length)
    raise ValueError(f"unknown noise kind {kind!r}")


def generate_noise(spec: NoiseSpec, length: int, rng: np.random.Generator) -> np.ndarray:
    """A noise realization rescaled to empirical power exactly 1."""
    if length < 1:
        raise ValueError("length must be >= 1")
    for _ in range(_MAX_REDRAWS):
        raw = _raw_noise(spec, length, rng)
        power = signal_power(raw)
        if power > 0.0:
            return raw / math.sqrt(power)
    raise DegenerateRealization(
        f"{spec.kind.value} noise of length {length} had zero power in {_MAX_REDRAWS} draws"
    )


def noise_scale(p_signal: float, target_snr_db: float) -> float:
    """Amplitude that gives unit-power noise the power P_signal / 10^(SNR/10)."""
    return math.sqrt(p_signal / 10.0 ** (target_snr_db / 10.0))


def inject_noise(burst: Burst, spec: NoiseSpec, rng: np.random.Generator) -> Burst:
    """Add noise calibrated so this burst's SNR equals ``spec.snr_db``."""
    p_signal = signal_power(burst.values)
    if p_signal <= 0.0:
        raise UndefinedSNR(f"burst {burst.origin} has zero power")
    unit = generate_noise(spec, len(burst), rng)
    return with_ood(burst, burst.values + noise_scale(p_signal, spec.snr_db) * unit)


def corruption_count(n: int, fraction: float) -> int:
    return int(math.floor(fraction * n + 0.5))


def corruption_mask(n: int, fraction: float, seed: int) -> np.ndarray:
    """Which positions get corrupted; depends only on (n, fraction, seed)."""
    k = corruption_count(n, fraction)
    mask = np.zeros(n, dtype=bool)
    if k:
        mask[derive_rng(seed, "corrupt", "select").choice(n, size=k, replace=False)] = True
    return mask


def corrupt_split(ds: LabeledDataset, plan: CorruptionPlan) -> tuple[LabeledDataset, np.ndarray]:
    """Replace ``round(fraction * n)`` seeded-chosen bursts with noisy copies.

    The selection and each burst's noise stream depend on the plan seed and
    the burst position only, so every noise kind and SNR level corrupts the
    same bursts with the same underlying draws.
    """
    mask = corruption_mask(len(ds), plan.fraction, plan.seed)
    out = []
    for i, b in enumerate(ds.bursts):
        if mask[i]:
            out.append(inject_noise(b, plan.spec, derive_rng(plan.seed, "corrupt", "noise", i)))
        else:
            out.append(b)
    return LabeledDataset(tuple(out), ds.num_classes), mask
