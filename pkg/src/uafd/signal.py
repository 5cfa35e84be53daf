"""Raw signal ingestion, burst extraction, balanced datasets and splits."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptySplit, InsufficientData
from .rng import derive_rng, fisher_yates

DEFAULT_WINDOW = 512
DEFAULT_SHIFT = 200


@dataclass(frozen=True)
class TimeSeries:
    samples: np.ndarray
    label: int
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).ravel()
        if samples.size == 0:
            raise ValueError("time series must be non-empty")
        if not np.all(np.isfinite(samples)):
            raise ValueError(f"time series {self.source_id!r} contains non-finite samples")
        if int(self.label) < 0:
            raise ValueError("label must be >= 0")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "label", int(self.label))

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class Burst:
    values: np.ndarray
    label: int
    ood: bool = False
    origin: tuple[str, int] = ("", 0)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("burst values must be a non-empty vector")
        if not np.all(np.isfinite(values)):
            raise ValueError("burst values must be finite")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class LabeledDataset:
    bursts: tuple[Burst, ...]
    num_classes: int
    class_counts: tuple[int, ...] = field(default=())

    def __post_init__(self):
        bursts = tuple(self.bursts)
        counts = [0] * self.num_classes
        for b in bursts:
            if not 0 <= b.label < self.num_classes:
                raise ValueError(f"label {b.label} outside [0, {self.num_classes})")
            counts[b.label] += 1
        if bursts and len({len(b) for b in bursts}) != 1:
            raise ValueError("all bursts in a dataset must share one length")
        object.__setattr__(self, "bursts", bursts)
        object.__setattr__(self, "class_counts", tuple(counts))

    def __len__(self):
        return len(self.bursts)

    def __getitem__(self, i):
        return self.bursts[i]

    @property
    def window(self) -> int:
        return len(self.bursts[0]) if self.bursts else 0

    @property
    def values(self) -> np.ndarray:
        """Burst values stacked into an ``(n, window)`` matrix."""
        if not self.bursts:
            return np.zeros((0, 0))
        return np.stack([b.values for b in self.bursts])

    @property
    def labels(self) -> np.ndarray:
        return np.array([b.label for b in self.bursts], dtype=np.int64)

    @property
    def ood(self) -> np.ndarray:
        return np.array([b.ood for b in self.bursts], dtype=bool)

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset(tuple(self.bursts[i] for i in indices), self.num_classes)


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.70
    test_fraction_of_rest: float = 0.70
    seed: int = 0

    def __post_init__(self):
        for name in ("train_fraction", "test_fraction_of_rest"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie strictly inside (0, 1), got {v}")


def extract_bursts(series: TimeSeries, window: int = DEFAULT_WINDOW, shift: int = DEFAULT_SHIFT) -> list[Burst]:
    """Slide a ``window``-long frame along ``series`` in steps of ``shift``.

    Bursts start at 0, shift, 2*shift, ...; a trailing partial window is dropped.
    """
    if window < 1 or shift < 1:
        raise ValueError("window and shift must be >= 1")
    n = len(series)
    if n < window:
        return []
    count = (n - window) // shift + 1
    return [
        Burst(series.samples[s : s + window].copy(), series.label, False, (series.source_id, s))
        for s in range(0, count * shift, shift)
    ]


def build_dataset(
    per_class_series: Mapping[int, Sequence[TimeSeries]],
    window: int = DEFAULT_WINDOW,
    shift: int = DEFAULT_SHIFT,
    per_class_count: int | None = None,
    num_classes: int | None = None,
) -> LabeledDataset:
    """Balanced dataset with exactly ``per_class_count`` bursts per class.

    Bursts are taken in extraction order, series by series.  When
    ``per_class_count`` is None the smallest class capacity is used.
    """
    extracted = {}
    for label in sorted(per_class_series):
        bursts = []
        for s in per_class_series[label]:
            if s.label != label:
                raise ValueError(f"series {s.source_id!r} has label {s.label}, filed under {label}")
            bursts.extend(extract_bursts(s, window, shift))
        extracted[label] = bursts
    if per_class_count is None:
        per_class_count = min(len(b) for b in extracted.values())
    for label, bursts in extracted.items():
        if len(bursts) < per_class_count:
            raise InsufficientData(label, len(bursts), per_class_count)
    if num_classes is None:
        num_classes = max(extracted) + 1
    out = []
    for label in sorted(extracted):
        out.extend(extracted[label][:per_class_count])
    return LabeledDataset(tuple(out), num_classes)


def split_sizes(n: int, cfg: SplitConfig) -> tuple[int, int, int]:
    """(train, validation, test) sizes; floors, remainder goes to validation."""
    n_train = math.floor(cfg.train_fraction * n)
    rest = n - n_train
    n_test = math.floor(cfg.test_fraction_of_rest * rest)
    return n_train, rest - n_test, n_test


def split_dataset(ds: LabeledDataset, cfg: SplitConfig) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """Shuffle by ``cfg.seed`` and cut into train / validation / test."""
    n = len(ds)
    n_train, n_val, n_test = split_sizes(n, cfg)
    if min(n_train, n_val, n_test) == 0:
        raise EmptySplit(f"split of {n} examples gives sizes train={n_train} val={n_val} test={n_test}")
    perm = fisher_yates(n, derive_rng(cfg.seed, "split"))
    train = ds.subset(perm[:n_train])
    test = ds.subset(perm[n_train : n_train + n_test])
    val = ds.subset(perm[n_train + n_test :])
    return train, val, test


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------

_JITTER = 0.05


def class_frequencies(label: int) -> tuple[float, float]:
    """Two normalized frequencies (cycles/sample) for ``label``.

    Low tones occupy [0.02, 0.23] and high tones [0.26, 0.47] in steps of
    0.03, so no two of the first 8 classes share a tone.
    """
    return 0.02 + 0.03 * label, 0.26 + 0.03 * label


def _class_waveform(label, t, rng):
    f1, f2 = class_frequencies(label)
    p1, p2 = rng.uniform(0.0, 2.0 * np.pi, size=2)
    clean = np.sin(2.0 * np.pi * f1 * t + p1) + 0.5 * np.sin(2.0 * np.pi * f2 * t + p2)
    rms = np.sqrt(np.mean(clean**2))
    return clean + rng.normal(0.0, _JITTER * rms, size=t.size)


def generate_synthetic(num_classes: int, per_class: int, length: int = DEFAULT_WINDOW, seed: int = 0) -> LabeledDataset:
    """Balanced, class-separable bursts: two class-specific tones plus jitter."""
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if length < 8:
        raise ValueError("length must be >= 8")
    t = np.arange(length, dtype=np.float64)
    bursts = []
    for label in range(num_classes):
        for i in range(per_class):
            rng = derive_rng(seed, "synthetic", label, i)
            bursts.append(Burst(_class_waveform(label, t, rng), label, False, (f"synthetic-{label}", i)))
    return LabeledDataset(tuple(bursts), num_classes)


def synthetic_series(num_classes: int, length: int, seed: int = 0) -> list[TimeSeries]:
    """One long synthetic series per class (fixed phase), for file round-trips."""
    t = np.arange(length, dtype=np.float64)
    return [
        TimeSeries(_class_waveform(c, t, derive_rng(seed, "series", c)), c, f"synthetic{c}")
        for c in range(num_classes)
    ]


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

_NAME_RE = re.compile(r"^(\d+)_(.+)\.(f32le|csv)$")


def parse_series_name(path) -> tuple[int, str]:
    """Split ``<label>_<source_id>.{f32le,csv}`` into (label, source_id)."""
    m = _NAME_RE.match(Path(path).name)
    if not m:
        raise ValueError(f"{path}: expected a name like '<label>_<source_id>.f32le' or '.csv'")
    return int(m.group(1)), m.group(2)


def read_series(path) -> TimeSeries:
    path = Path(path)
    label, source_id = parse_series_name(path)
    if path.suffix == ".f32le":
        samples = np.fromfile(path, dtype="<f4").astype(np.float64)
    else:
        samples = _read_csv_column(path)
    return TimeSeries(samples, label, source_id)


def _read_csv_column(path):
    values = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if i == 0 and not values:
                    continue  # header row
                raise ValueError(f"{path}:{i + 1}: not a number: {row[0]!r}") from None
    return np.asarray(values, dtype=np.float64)


def write_series(series: TimeSeries, directory, fmt: str = "f32le") -> Path:
    Path(directory).mkdir(parents=True, exist_ok=True)
    path = Path(directory) / f"{series.label}_{series.source_id}.{fmt}"
    if fmt == "f32le":
        series.samples.astype("<f4").tofile(path)
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            fh.write("amplitude\n")
            for v in series.samples:
                fh.write(f"{float(v)!r}\n")
    else:
        raise ValueError(f"unknown series format {fmt!r}")
    return path


def load_directory(directory) -> dict[int, list[TimeSeries]]:
    """Read every ``<label>_<source_id>`` series file in ``directory``."""
    grouped: dict[int, list[TimeSeries]] = {}
    for path in sorted(Path(directory).iterdir()):
        if _NAME_RE.match(path.name):
            s = read_series(path)
            grouped.setdefault(s.label, []).append(s)
    if not grouped:
        raise FileNotFoundError(f"no '<label>_<source_id>.f32le|csv' files in {directory}")
    return grouped


def save_dataset(ds: LabeledDataset, path) -> None:
    """Store a dataset as ``.npz`` (values, labels, ood flags, origins)."""
    np.savez(
        path,
        values=ds.values,
        labels=ds.labels,
        ood=ds.ood,
        source_ids=np.array([b.origin[0] for b in ds.bursts], dtype=str),
        starts=np.array([b.origin[1] for b in ds.bursts], dtype=np.int64),
        num_classes=np.int64(ds.num_classes),
    )


def load_dataset(path) -> LabeledDataset:
    with np.load(path, allow_pickle=False) as z:
        bursts = tuple(
            Burst(v, int(l), bool(o), (str(s), int(st)))
            for v, l, o, s, st in zip(z["values"], z["labels"], z["ood"], z["source_ids"], z["starts"])
        )
        return LabeledDataset(bursts, int(z["num_classes"]))


def with_ood(burst: Burst, values=None) -> Burst:
    return replace(burst, values=burst.values if values is None else values, ood=True)
