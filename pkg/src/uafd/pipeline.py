"""Scenario protocol: epistemic hold-out and aleatoric noise runs, suites, reports.

Every random stream derives from the suite seed and a scenario's key, so a
suite's output is a pure function of its configuration.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SuiteConfig
from .errors import InvalidSpec
from .models import Architecture, Model, ModelSpec, TrainConfig, build, train
from .noise import CorruptionPlan, NoiseKind, NoiseSpec, corrupt_split
from .predictors import predictor_for
from .rng import derive_seed
from .signal import (LabeledDataset, SplitConfig, build_dataset, generate_synthetic,
                     load_dataset, load_directory, split_dataset)
from .uncertainty import (ThresholdPair, TrustConfusion, calibrate, classify_trust, confusion,
                          entropy, entropy_histogram, write_histogram_csv)

log = logging.getLogger("uafd")

CSV_COLUMNS = ["scenario_kind", "scenario_key", "model", "threshold_kind", "tau", "ood_ut_pct",
               "id_ut_pct", "precision", "recall", "f1", "train_s", "predict_s", "seed", "scale"]
THRESHOLD_KINDS = ("tau1", "tau2")
EPISTEMIC, ALEATORIC = "epistemic", "aleatoric"
_MODEL_ORDER = {a: i for i, a in enumerate(Architecture)}
_NOISE_ORDER = {k: i for i, k in enumerate(NoiseKind)}


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    model: Architecture
    holdout_class: int | None = None
    noise: NoiseSpec | None = None
    seed: int = 0
    scale: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "model", Architecture.parse(self.model))
        if self.kind == EPISTEMIC:
            if self.holdout_class is None or self.holdout_class < 0:
                raise InvalidSpec("epistemic scenarios need a non-negative hold-out class")
        elif self.kind == ALEATORIC:
            if self.noise is None:
                raise InvalidSpec("aleatoric scenarios need a noise spec")
        else:
            raise InvalidSpec(f"unknown scenario kind {self.kind!r}")

    @property
    def key(self) -> str:
        if self.kind == EPISTEMIC:
            return f"holdout={self.holdout_class}"
        return self.noise.key

    @property
    def training_key(self) -> str:
        # aleatoric scenarios all train on the same clean data
        return f"{EPISTEMIC}/{self.key}" if self.kind == EPISTEMIC else f"{ALEATORIC}/clean"

    def sort_key(self):
        if self.kind == EPISTEMIC:
            scen = (0, self.holdout_class, 0, 0.0)
        else:
            scen = (1, 0, _NOISE_ORDER[self.noise.kind], self.noise.snr_db)
        return scen + (_MODEL_ORDER[self.model],)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "key": self.key, "model": self.model.value,
                "holdout_class": self.holdout_class,
                "noise": self.noise.to_dict() if self.noise else None,
                "seed": self.seed, "scale": self.scale}


@dataclass
class ScenarioReport:
    spec: ScenarioSpec
    num_classes: int = 0
    thresholds: ThresholdPair | None = None
    results: dict = field(default_factory=dict)  # threshold kind -> TrustConfusion
    train_s: float | None = None
    predict_s: float | None = None
    n_test: int = 0
    n_ood: int = 0
    passes_per_example: float | None = None
    histogram: dict | None = None
    histogram_file: str | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def tau(self, kind: str) -> float:
        return getattr(self.thresholds, kind)

    def to_dict(self, timing: bool = True) -> dict:
        d = {"spec": self.spec.to_dict(), "error": self.error}
        if not self.ok:
            return d
        d.update({
            "num_classes": self.num_classes,
            "thresholds": self.thresholds.to_dict(),
            "results": {k: v.to_dict() for k, v in self.results.items()},
            "n_test": self.n_test,
            "n_ood": self.n_ood,
            "passes_per_example": self.passes_per_example,
            "train_s": self.train_s if timing else None,
            "predict_s": self.predict_s if timing else None,
            "histogram": self.histogram,
            "histogram_file": self.histogram_file,
        })
        return d


@dataclass
class SuiteReport:
    config: dict
    reports: list
    timing: bool = True

    @property
    def conservativeness(self) -> dict:
        ok = [r for r in self.reports if r.ok]
        n_le = sum(r.thresholds.tau1 <= r.thresholds.tau2 for r in ok)
        return {"n_scenarios": len(ok), "n_tau1_le_tau2": n_le,
                "fraction_tau1_le_tau2": n_le / len(ok) if ok else 0.0}

    def to_dict(self) -> dict:
        return {"config": self.config,
                "conservativeness": self.conservativeness,
                "failures": sum(not r.ok for r in self.reports),
                "reports": [r.to_dict(self.timing) for r in self.reports]}


# ---------------------------------------------------------------------------
# scenario context
# ---------------------------------------------------------------------------

@dataclass
class Context:
    """Shared inputs of a batch of scenarios plus a cache of trained models."""

    train: LabeledDataset
    val: LabeledDataset
    test: LabeledDataset
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    prior_sigma: float = 1.0
    k: int = 10
    noise_fraction: float = 0.20
    histogram_dir: Path | None = None
    models: dict = field(default_factory=dict)

    @property
    def total_classes(self) -> int:
        return self.train.num_classes


def epistemic_splits(ctx: Context, holdout: int):
    """ID-only training set with contiguous labels, and the OOD masks of val/test."""
    C = ctx.total_classes
    if C < 3:
        raise InvalidSpec("hold-out scenarios need at least 3 classes")
    if not 0 <= holdout < C:
        raise InvalidSpec(f"hold-out class {holdout} outside [0, {C})")
    keep = np.flatnonzero(ctx.train.labels != holdout)
    train_id = ctx.train.subset(keep)
    labels = train_id.labels - (train_id.labels > holdout)
    return train_id, labels, ctx.val.labels == holdout, ctx.test.labels == holdout


def aleatoric_splits(ctx: Context, noise: NoiseSpec, seed: int):
    """Validation and test sets with a seeded fraction replaced by noisy copies."""
    val, val_ood = corrupt_split(ctx.val, CorruptionPlan(noise, ctx.noise_fraction,
                                                         derive_seed(seed, "noise", "validation")))
    test, test_ood = corrupt_split(ctx.test, CorruptionPlan(noise, ctx.noise_fraction,
                                                            derive_seed(seed, "noise", "test")))
    return val, val_ood, test, test_ood


def _trained_model(spec: ScenarioSpec, ctx: Context, train_set, labels, num_classes):
    cache_key = (spec.model, spec.training_key, spec.seed, spec.scale)
    if cache_key not in ctx.models:
        mspec = ModelSpec(spec.model, num_classes, spec.scale, ctx.prior_sigma)
        model = build(mspec, derive_seed(spec.seed, "init", spec.training_key, spec.model.value))
        tcfg = TrainConfig(**{**ctx.train_cfg.to_dict(),
                              "seed": derive_seed(spec.seed, "train", spec.training_key, spec.model.value)})
        t0 = time.perf_counter()
        model, _ = train(model, train_set, tcfg, labels=labels)
        ctx.models[cache_key] = (model, time.perf_counter() - t0)
    return ctx.models[cache_key]


def _histogram_name(spec: ScenarioSpec) -> str:
    key = spec.key.replace("@", "_").replace("+", "p").replace("-", "m")
    return re.sub(r"[^A-Za-z0-9._=]+", "_", f"{spec.kind}_{key}_{spec.model.value}") + ".csv"


def _evaluate(spec, ctx, model: Model, train_s, val_x, val_ood, test_x, test_ood) -> ScenarioReport:
    seed = derive_seed(spec.seed, "predict", spec.kind, spec.key, spec.model.value)
    predictor = predictor_for(model, seed=seed, k=ctx.k)
    val_h = entropy(predictor.predict_many(val_x))
    # validation and test use disjoint stream ids
    predictor.forward_passes = 0
    t0 = time.perf_counter()
    test_m = predictor.predict_many(test_x, indices=np.arange(test_x.shape[0]) + val_x.shape[0])
    predict_s = time.perf_counter() - t0
    passes = predictor.forward_passes / test_x.shape[0]
    test_h = entropy(test_m)

    pair = calibrate(val_h, val_ood)
    results = {kind: confusion(classify_trust(test_h, getattr(pair, kind)), test_ood)
               for kind in THRESHOLD_KINDS}
    C = model.spec.num_classes
    edges, id_counts, ood_counts = entropy_histogram(test_h, test_ood, C)
    report = ScenarioReport(
        spec=spec, num_classes=C, thresholds=pair, results=results,
        train_s=train_s, predict_s=predict_s, n_test=int(test_x.shape[0]),
        n_ood=int(np.sum(test_ood)), passes_per_example=passes,
        histogram={"lo": 0.0, "hi": float(edges[-1]), "bins": len(id_counts),
                   "id_counts": id_counts.tolist(), "ood_counts": ood_counts.tolist()},
    )
    if ctx.histogram_dir is not None:
        name = _histogram_name(spec)
        ctx.histogram_dir.mkdir(parents=True, exist_ok=True)
        write_histogram_csv(ctx.histogram_dir / name, edges, id_counts, ood_counts)
        report.histogram_file = f"histograms/{name}"
    log.info("%s %s %s: tau1=%.4f tau2=%.4f (tau1 <= tau2: %s)", spec.kind, spec.key,
             spec.model.value, pair.tau1, pair.tau2, pair.tau1 <= pair.tau2)
    return report


def run_epistemic(spec: ScenarioSpec, ctx: Context) -> ScenarioReport:
    """Train on all classes but the hold-out one; it becomes the OOD class."""
    if spec.kind != EPISTEMIC:
        raise InvalidSpec("run_epistemic needs an epistemic scenario")
    train_id, labels, val_ood, test_ood = epistemic_splits(ctx, spec.holdout_class)
    model, train_s = _trained_model(spec, ctx, train_id, labels, ctx.total_classes - 1)
    return _evaluate(spec, ctx, model, train_s, ctx.val.values, val_ood, ctx.test.values, test_ood)


def run_aleatoric(spec: ScenarioSpec, ctx: Context) -> ScenarioReport:
    """Train on clean data; noisy validation/test bursts are the OOD examples."""
    if spec.kind != ALEATORIC:
        raise InvalidSpec("run_aleatoric needs an aleatoric scenario")
    val, val_ood, test, test_ood = aleatoric_splits(ctx, spec.noise, spec.seed)
    model, train_s = _trained_model(spec, ctx, ctx.train, None, ctx.total_classes)
    return _evaluate(spec, ctx, model, train_s, val.values, val_ood, test.values, test_ood)


def run_scenario(spec: ScenarioSpec, ctx: Context) -> ScenarioReport:
    return (run_epistemic if spec.kind == EPISTEMIC else run_aleatoric)(spec, ctx)


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def load_corpus(cfg: SuiteConfig) -> LabeledDataset:
    d = cfg.data
    if d.source == "synthetic":
        return generate_synthetic(d.num_classes, d.per_class_count or 200, d.window,
                                  seed=derive_seed(cfg.seed, "synthetic"))
    path = Path(d.source)
    if path.suffix == ".npz":
        return load_dataset(path)
    return build_dataset(load_directory(path), d.window, d.shift, d.per_class_count, d.num_classes)


def make_context(cfg: SuiteConfig, ds: LabeledDataset, histogram_dir=None) -> Context:
    split = SplitConfig(cfg.split.train_fraction, cfg.split.test_fraction_of_rest,
                        derive_seed(cfg.seed, "split"))
    tr, va, te = split_dataset(ds, split)
    m = cfg.models
    return Context(tr, va, te, TrainConfig(epochs=m.epochs, batch_size=m.batch_size, lr=m.lr),
                   prior_sigma=m.prior_sigma, k=cfg.predictors.k,
                   noise_fraction=cfg.noise.fraction, histogram_dir=histogram_dir)


def scenario_grid(cfg: SuiteConfig, num_classes: int | None = None) -> list[ScenarioSpec]:
    C = cfg.data.num_classes if num_classes is None else num_classes
    specs = []
    for kind in cfg.models.kinds:
        common = {"model": kind, "seed": cfg.seed, "scale": cfg.models.scale}
        holdouts = list(range(C)) if cfg.scenarios.epistemic == "all" else cfg.holdout_classes()
        specs += [ScenarioSpec(EPISTEMIC, holdout_class=h, **common) for h in holdouts]
        if cfg.scenarios.aleatoric:
            n = cfg.noise
            specs += [ScenarioSpec(ALEATORIC, noise=NoiseSpec(NoiseKind.parse(nk), float(snr),
                                                              n.impulse_p, n.weibull_k), **common)
                      for nk in n.kinds for snr in n.snr_db]
    return sorted(specs, key=ScenarioSpec.sort_key)


def run_suite(cfg: SuiteConfig, ds: LabeledDataset | None = None, out_dir=None) -> SuiteReport:
    """Run every (scenario, model) pair; failures are recorded and the suite continues."""
    ds = load_corpus(cfg) if ds is None else ds
    hist_dir = Path(out_dir) / "histograms" if (out_dir and cfg.output.histograms) else None
    ctx = make_context(cfg, ds, hist_dir)
    reports = []
    for spec in scenario_grid(cfg, ds.num_classes):
        try:
            reports.append(run_scenario(spec, ctx))
        except Exception as exc:  # partial-failure policy
            log.warning("scenario %s/%s %s failed: %s", spec.kind, spec.key, spec.model.value, exc)
            reports.append(ScenarioReport(spec, error=f"{type(exc).__name__}: {exc}"))
    suite = SuiteReport(cfg.experiment_dict(), sorted(reports, key=lambda r: r.spec.sort_key()),
                        timing=cfg.output.timing == "wall")
    c = suite.conservativeness
    log.info("tau1 <= tau2 in %d of %d scenarios (%.4f)", c["n_tau1_le_tau2"], c["n_scenarios"],
             c["fraction_tau1_le_tau2"])
    return suite


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

def _fmt(v, digits: int) -> str:
    return "" if v is None else f"{v:.{digits}f}"


def report_rows(suite: SuiteReport) -> list[dict]:
    rows = []
    for r in suite.reports:
        s = r.spec
        for kind in THRESHOLD_KINDS:
            row = dict.fromkeys(CSV_COLUMNS, "")
            row.update(scenario_kind=s.kind, scenario_key=s.key, model=s.model.value,
                       threshold_kind=kind, seed=str(s.seed), scale=f"{s.scale:g}")
            if r.ok:
                c: TrustConfusion = r.results[kind]
                row.update(tau=_fmt(r.tau(kind), 6), ood_ut_pct=_fmt(c.ood_ut_pct, 4),
                           id_ut_pct=_fmt(c.id_ut_pct, 4), precision=_fmt(c.precision, 4),
                           recall=_fmt(c.recall, 4), f1=_fmt(c.f1, 4))
                if suite.timing:
                    row.update(train_s=_fmt(r.train_s, 4), predict_s=_fmt(r.predict_s, 4))
            rows.append(row)
    return rows


def render(suite: SuiteReport, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(report_rows(suite))
        return buf.getvalue()
    if fmt == "json":
        return json.dumps(suite.to_dict(), indent=2) + "\n"
    raise ValueError(f"unsupported report format {fmt!r}")


def emit_report(suite: SuiteReport, fmt: str, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render(suite, fmt))
    return path


def suite_from_dict(d: dict) -> SuiteReport:
    """Rebuild a suite report from its JSON form (for re-emitting other formats)."""
    reports = []
    for rd in d["reports"]:
        sd = rd["spec"]
        noise = None
        if sd["noise"]:
            n = sd["noise"]
            noise = NoiseSpec(NoiseKind.parse(n["kind"]), n["snr_db"], n["impulse_p"], n["weibull_k"])
        spec = ScenarioSpec(sd["kind"], sd["model"], sd["holdout_class"], noise, sd["seed"], sd["scale"])
        if rd["error"]:
            reports.append(ScenarioReport(spec, error=rd["error"]))
            continue
        th = rd["thresholds"]
        results = {k: TrustConfusion(v["tp"], v["fp"], v["fn"], v["tn"]) for k, v in rd["results"].items()}
        reports.append(ScenarioReport(
            spec, rd["num_classes"], ThresholdPair(th["tau1"], th["tau2"], th["provenance"]), results,
            rd["train_s"], rd["predict_s"], rd["n_test"], rd["n_ood"], rd["passes_per_example"],
            rd["histogram"], rd["histogram_file"]))
    timing = any(r.ok and r.train_s is not None for r in reports)
    return SuiteReport(d["config"], reports, timing=timing)


def write_outputs(suite: SuiteReport, out_dir, formats=("csv", "json")) -> list[Path]:
    out = Path(out_dir)
    return [emit_report(suite, fmt, out / f"report.{fmt}") for fmt in formats]
