"""Uncertainty-aware fault diagnosis on vibration bursts.

Burst extraction, SNR-calibrated noise, four uncertainty-aware network
families, predictive-entropy trust thresholds and a seeded scenario harness.
"""

from .config import SuiteConfig, load_config
from .models import Architecture, Model, ModelSpec, TrainConfig, build, train
from .noise import NoiseKind, NoiseSpec
from .pipeline import (ScenarioReport, ScenarioSpec, emit_report, render, run_aleatoric, run_epistemic,
                       run_suite)
from .predictors import PredictionMatrix, Predictor, PredictorConfig, PredictorKind, predictor_for
from .signal import Burst, LabeledDataset, TimeSeries, generate_synthetic
from .uncertainty import ThresholdPair, TrustConfusion, classify_trust, confusion, entropy, tau1, tau2

__version__ = "0.1.0"

__all__ = [
    "Architecture", "Burst", "LabeledDataset", "Model", "ModelSpec", "NoiseKind", "NoiseSpec",
    "PredictionMatrix", "Predictor", "PredictorConfig", "PredictorKind", "ScenarioReport",
    "ScenarioSpec", "SuiteConfig", "ThresholdPair", "TimeSeries", "TrainConfig", "TrustConfusion",
    "build", "classify_trust", "confusion", "emit_report", "entropy", "generate_synthetic",
    "load_config", "predictor_for", "render", "run_aleatoric", "run_epistemic", "run_suite", "tau1", "tau2",
    "train",
]
