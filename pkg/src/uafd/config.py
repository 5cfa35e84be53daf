"""Suite configuration: a YAML (or JSON) document with one section per stage."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .errors import InvalidSpec
from .models import Architecture
from .noise import NoiseKind


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"  # "synthetic", a directory of series files, or a .npz dataset
    num_classes: int = 4
    per_class_count: int | None = 200
    window: int = 512
    shift: int = 200


@dataclass(frozen=True)
class SplitSection:
    train_fraction: float = 0.70
    test_fraction_of_rest: float = 0.70


@dataclass(frozen=True)
class ModelsConfig:
    kinds: tuple = ("ConvLSTM-D", "BNN", "De1", "De2")
    scale: float = 0.25
    prior_sigma: float = 1.0
    epochs: int = 25
    batch_size: int = 64
    lr: float = 1e-3


@dataclass(frozen=True)
class PredictorsConfig:
    k: int = 10  # passes for MC dropout and BNN; ensembles use one pass per learner


@dataclass(frozen=True)
class ScenariosConfig:
    epistemic: object = "all"  # "all", or a list of hold-out classes
    aleatoric: bool = True


@dataclass(frozen=True)
class NoiseConfig:
    kinds: tuple = ("gaussian", "impulse", "rayleigh", "weibull")
    snr_db: tuple = (-5.0, 0.0, 5.0)
    fraction: float = 0.20
    impulse_p: float = 0.05
    weibull_k: float = 2.0


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "results"
    formats: tuple = ("csv", "json")
    timing: str = "wall"  # "omit" leaves timing fields empty for byte-reproducible files
    histograms: bool = True


SECTIONS = {
    "data": DataConfig,
    "split": SplitSection,
    "models": ModelsConfig,
    "predictors": PredictorsConfig,
    "scenarios": ScenariosConfig,
    "noise": NoiseConfig,
    "output": OutputConfig,
}


def _section(cls, raw):
    raw = dict(raw or {})
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise InvalidSpec(f"unknown keys in [{cls.__name__}]: {', '.join(sorted(unknown))}")
    for k, v in raw.items():
        if isinstance(v, list):
            raw[k] = tuple(v)
    return cls(**raw)


@dataclass(frozen=True)
class SuiteConfig:
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitSection = field(default_factory=SplitSection)
    models: ModelsConfig = field(default_factory=ModelsConfig)
    predictors: PredictorsConfig = field(default_factory=PredictorsConfig)
    scenarios: ScenariosConfig = field(default_factory=ScenariosConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        if int(self.seed) < 0:
            raise InvalidSpec("seed must be non-negative")
        for kind in self.models.kinds:
            Architecture.parse(kind)
        for kind in self.noise.kinds:
            NoiseKind.parse(kind)
        if self.output.timing not in ("wall", "omit"):
            raise InvalidSpec("output.timing must be 'wall' or 'omit'")
        bad = set(self.output.formats) - {"csv", "json"}
        if bad:
            raise InvalidSpec(f"unsupported output formats: {', '.join(sorted(bad))}")
        ep = self.scenarios.epistemic
        if not (ep == "all" or isinstance(ep, (tuple, list))):
            raise InvalidSpec("scenarios.epistemic must be 'all' or a list of classes")
        if self.predictors.k < 1:
            raise InvalidSpec("predictors.k must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "SuiteConfig":
        raw = dict(raw or {})
        unknown = set(raw) - set(SECTIONS) - {"seed"}
        if unknown:
            raise InvalidSpec(f"unknown config sections: {', '.join(sorted(unknown))}")
        kwargs = {name: _section(sc, raw.get(name)) for name, sc in SECTIONS.items()}
        return cls(seed=int(raw.get("seed", 0)), **kwargs)

    def to_dict(self) -> dict:
        return asdict(self)

    def holdout_classes(self) -> list[int]:
        ep = self.scenarios.epistemic
        if ep == "all":
            return list(range(self.data.num_classes))
        return [int(c) for c in ep]

    def experiment_dict(self) -> dict:
        """Everything that affects results (the output location is left out)."""
        d = self.to_dict()
        d["output"] = {k: v for k, v in d["output"].items() if k != "directory"}
        return _plain(d)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def load_config(path) -> SuiteConfig:
    text = Path(path).read_text()
    return SuiteConfig.from_dict(yaml.safe_load(text) or {})


def dump_config(cfg: SuiteConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(_plain(cfg.to_dict()), sort_keys=False))
