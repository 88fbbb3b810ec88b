"""
Irregular multivariate time series datasets.

A sample holds a T_i x D observation matrix with NaN marking missing cells,
strictly increasing observation times, a demographic vector and a class
label. Datasets are immutable; every transformation (split, standardize,
induce_sparsity, concat) returns a new object.
"""

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    CompositionError,
    DataSizeError,
    ParseError,
    SchemaError,
    SparsityError,
    StateError,
)

RESAMPLE_FACTOR = 3


@dataclass(frozen=True)
class TimeSeriesSample:
    values: np.ndarray
    times: np.ndarray
    demographics: np.ndarray
    label: int
    sample_id: str = ""
    source: str = "default"
    standardized: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        times = np.array(self.times, dtype=np.float64)
        demographics = np.array(self.demographics, dtype=np.float64).reshape(-1)
        if values.ndim != 2:
            raise ValueError(f"observations must be a T x D matrix, got shape {values.shape}")
        if values.shape[0] == 0:
            raise ValueError("a sample needs at least one time step")
        if times.shape != (values.shape[0],):
            raise ValueError(
                f"times has shape {times.shape} but observations have {values.shape[0]} rows"
            )
        if times.size and (times.min() < 0 or not np.isfinite(times).all()):
            raise ValueError("times must be finite and >= 0")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.isinf(values).any():
            raise ValueError("observations must be finite or NaN (missing)")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "demographics", demographics)
        object.__setattr__(self, "label", int(self.label))

    @property
    def n_times(self) -> int:
        return self.values.shape[0]

    @property
    def n_sensors(self) -> int:
        return self.values.shape[1]

    @property
    def mask(self) -> np.ndarray:
        return derive_mask(self)


def derive_mask(sample: TimeSeriesSample) -> np.ndarray:
    """1 where a cell is observed, 0 where it is missing."""
    return (~np.isnan(sample.values)).astype(np.int8)


@dataclass(frozen=True)
class SensorStats:
    """Per-sensor and per-demographic standardization statistics."""

    mean: np.ndarray
    std: np.ndarray
    demo_mean: np.ndarray
    demo_std: np.ndarray

    @classmethod
    def fit(cls, samples: Sequence[TimeSeriesSample], continuous: Sequence[bool]) -> "SensorStats":
        if not samples:
            raise DataSizeError("cannot fit statistics on an empty sample set")
        if len({s.n_sensors for s in samples}) > 1:
            raise SchemaError("statistics need samples with one sensor layout; fit them per source")
        stacked = np.concatenate([s.values for s in samples], axis=0)
        observed = ~np.isnan(stacked)
        counts = observed.sum(axis=0)
        filled = np.where(observed, stacked, 0.0)
        safe_counts = np.maximum(counts, 1)
        mean = filled.sum(axis=0) / safe_counts
        var = (np.where(observed, stacked - mean, 0.0) ** 2).sum(axis=0) / safe_counts
        std = np.sqrt(var)
        std = np.where((counts == 0) | (std < 1e-12), 1.0, std)
        mean = np.where(counts == 0, 0.0, mean)

        demos = np.stack([s.demographics for s in samples]) if samples[0].demographics.size else None
        width = samples[0].demographics.size
        demo_mean = np.zeros(width)
        demo_std = np.ones(width)
        if demos is not None:
            flags = np.asarray(continuous, dtype=bool) if len(continuous) else np.ones(width, bool)
            col_mean = demos.mean(axis=0)
            col_std = demos.std(axis=0)
            col_std = np.where(col_std < 1e-12, 1.0, col_std)
            demo_mean = np.where(flags, col_mean, 0.0)
            demo_std = np.where(flags, col_std, 1.0)
        return cls(mean=mean, std=std, demo_mean=demo_mean, demo_std=demo_std)

    def to_dict(self) -> Dict[str, List[float]]:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "demo_mean": self.demo_mean.tolist(),
            "demo_std": self.demo_std.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Sequence[float]]) -> "SensorStats":
        return cls(**{k: np.asarray(data[k], dtype=np.float64) for k in
                      ("mean", "std", "demo_mean", "demo_std")})


@dataclass(frozen=True)
class Dataset:
    name: str
    samples: Tuple[TimeSeriesSample, ...]
    sensor_names: Tuple[str, ...]
    demographic_names: Tuple[str, ...] = ()
    n_classes: int = 2
    stats: Optional[SensorStats] = None
    continuous_demographics: Tuple[bool, ...] = ()
    source_sensors: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "sensor_names", tuple(self.sensor_names))
        object.__setattr__(self, "demographic_names", tuple(self.demographic_names))
        if not self.continuous_demographics:
            object.__setattr__(
                self, "continuous_demographics",
                tuple("=" not in n for n in self.demographic_names),
            )
        if not self.source_sensors:
            sources = {s.source for s in self.samples} or {"default"}
            object.__setattr__(
                self, "source_sensors", {src: self.sensor_names for src in sorted(sources)}
            )
        if len(set(self.sensor_names)) != len(self.sensor_names):
            raise SchemaError(f"duplicate sensor names in {self.name!r}")
        for source, names in self.source_sensors.items():
            unknown = set(names) - set(self.sensor_names)
            if unknown:
                raise SchemaError(f"source {source!r} lists sensors {sorted(unknown)} missing from {self.name!r}")
        p = len(self.demographic_names)
        for s in self.samples:
            d = len(self.sensors_for(s.source))
            if s.n_sensors != d:
                raise SchemaError(
                    f"sample {s.sample_id!r} has {s.n_sensors} sensors, dataset declares {d}"
                )
            if s.demographics.size != p:
                raise SchemaError(
                    f"sample {s.sample_id!r} has {s.demographics.size} demographic fields, "
                    f"dataset declares {p}"
                )
            if not 0 <= s.label < self.n_classes:
                raise SchemaError(
                    f"sample {s.sample_id!r} label {s.label} outside 0..{self.n_classes - 1}"
                )

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int) -> TimeSeriesSample:
        return self.samples[index]

    @property
    def n_sensors(self) -> int:
        return len(self.sensor_names)

    @property
    def n_demographics(self) -> int:
        return len(self.demographic_names)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def is_standardized(self) -> bool:
        return bool(self.samples) and all(s.standardized for s in self.samples)

    @property
    def observed_cells(self) -> int:
        return int(sum(int((~np.isnan(s.values)).sum()) for s in self.samples))

    @property
    def total_cells(self) -> int:
        return int(sum(s.values.size for s in self.samples))

    @property
    def sparsity(self) -> float:
        total = self.total_cells
        return 1.0 - self.observed_cells / total if total else 0.0

    def sensors_for(self, source: str) -> Tuple[str, ...]:
        return tuple(self.source_sensors.get(source, self.sensor_names))

    def index_of(self, sample_id: str) -> int:
        for i, s in enumerate(self.samples):
            if s.sample_id == sample_id:
                return i
        raise KeyError(f"sample {sample_id!r} not found in {self.name!r}")

    def subset(self, indices: Sequence[int], name: Optional[str] = None) -> "Dataset":
        return replace(self, name=name or self.name, samples=tuple(self.samples[i] for i in indices))

    def with_samples(self, samples: Sequence[TimeSeriesSample]) -> "Dataset":
        return replace(self, samples=tuple(samples))

    def standardize(self, stats: SensorStats) -> "Dataset":
        """Z-score observed values and continuous demographics; NaN stays NaN."""
        if any(s.standardized for s in self.samples):
            raise StateError(f"{self.name!r} is already standardized")
        out = []
        for s in self.samples:
            out.append(replace(
                s,
                values=(s.values - stats.mean) / stats.std,
                demographics=(s.demographics - stats.demo_mean) / stats.demo_std,
                standardized=True,
            ))
        return replace(self, samples=tuple(out), stats=stats)

    def destandardize(self) -> "Dataset":
        if self.stats is None or not any(s.standardized for s in self.samples):
            return replace(self, stats=None)
        st = self.stats
        out = [
            replace(
                s,
                values=s.values * st.std + st.mean,
                demographics=s.demographics * st.demo_std + st.demo_mean,
                standardized=False,
            )
            for s in self.samples
        ]
        return replace(self, samples=tuple(out), stats=None)

    def fit_stats(self) -> SensorStats:
        return SensorStats.fit(self.samples, self.continuous_demographics)

    def summary(self) -> Dict[str, Any]:
        labels = self.labels
        return {
            "dataset": self.name,
            "samples": len(self),
            "max_time_points": max((s.n_times for s in self.samples), default=0),
            "sensors": self.n_sensors,
            "positive_class_pct": round(100.0 * float(np.mean(labels == 1)), 2) if len(self) else 0.0,
            "sparsity_pct": round(100.0 * self.sparsity, 2),
        }

    @classmethod
    def concat(cls, datasets: Sequence["Dataset"], name: str) -> "Dataset":
        """
        Merge already-standardized datasets with the same class count.

        Sensor and demographic columns become the union of the inputs' names in
        first-seen order. Every source keeps its own sensor layout, so samples
        of different widths live side by side and batches pad the sensor axis.
        Demographic fields a source lacks are 0, the standardized mean.
        """
        if not datasets:
            raise DataSizeError("nothing to concatenate")
        first = datasets[0]
        sensor_names: List[str] = []
        demographic_names: List[str] = []
        continuous: Dict[str, bool] = {}
        for ds in datasets:
            if ds.n_classes != first.n_classes:
                raise SchemaError("concatenated datasets must share the class count")
            if ds.samples and not ds.is_standardized:
                raise StateError(f"{ds.name!r} must be standardized before concatenation")
            sensor_names.extend(n for n in ds.sensor_names if n not in sensor_names)
            for n, flag in zip(ds.demographic_names, ds.continuous_demographics):
                if continuous.setdefault(n, flag) != flag:
                    raise SchemaError(f"demographic {n!r} is continuous in one dataset and categorical in another")
                if n not in demographic_names:
                    demographic_names.append(n)

        column = {n: i for i, n in enumerate(demographic_names)}
        source_sensors: Dict[str, Tuple[str, ...]] = {}
        samples: List[TimeSeriesSample] = []
        for ds in datasets:
            for source, names in ds.source_sensors.items():
                if source_sensors.setdefault(source, tuple(names)) != tuple(names):
                    raise SchemaError(f"source {source!r} appears with two sensor layouts")
            target = [column[n] for n in ds.demographic_names]
            if target == list(range(len(demographic_names))):
                samples.extend(ds.samples)
                continue
            for s in ds.samples:
                demographics = np.zeros(len(demographic_names))
                demographics[target] = s.demographics
                samples.append(replace(s, demographics=demographics))
        return cls(
            name=name,
            samples=tuple(samples),
            sensor_names=tuple(sensor_names),
            demographic_names=tuple(demographic_names),
            n_classes=first.n_classes,
            stats=None,
            continuous_demographics=tuple(continuous[n] for n in demographic_names),
            source_sensors=source_sensors,
        )


@dataclass(frozen=True)
class SplitSpec:
    seed: int = 0
    ratios: Tuple[int, int, int] = (8, 1, 1)
    replication: int = 0

    def __post_init__(self):
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios) or sum(self.ratios) <= 0:
            raise ValueError(f"ratios must be three non-negative parts, got {self.ratios!r}")
        if self.replication < 0:
            raise ValueError(f"replication must be >= 0, got {self.replication!r}")


MIN_SPLIT_SIZE = 10


def split(dataset: Dataset, spec: SplitSpec) -> Tuple[Dataset, Dataset, Dataset]:
    """
    Random train/validation/test partition; rounding remainders go to train.

    Statistics are fitted on the train part only and applied to all three.
    """
    n = len(dataset)
    if n < MIN_SPLIT_SIZE:
        raise DataSizeError(f"split needs at least {MIN_SPLIT_SIZE} samples, got {n}")
    raw = dataset.destandardize()
    total = sum(spec.ratios)
    n_val = (n * spec.ratios[1]) // total
    n_test = (n * spec.ratios[2]) // total
    order = np.random.default_rng([spec.seed, spec.replication]).permutation(n)
    val_idx = np.sort(order[:n_val])
    test_idx = np.sort(order[n_val : n_val + n_test])
    train_idx = np.sort(order[n_val + n_test :])

    train = raw.subset(train_idx, f"{dataset.name}/train")
    stats = train.fit_stats()
    return (
        train.standardize(stats),
        raw.subset(val_idx, f"{dataset.name}/validation").standardize(stats),
        raw.subset(test_idx, f"{dataset.name}/test").standardize(stats),
    )


def compose_epoch(train: Dataset, seed: int) -> np.ndarray:
    """
    Balanced epoch for a binary task: every positive three times plus an equal
    number (3P) of negatives drawn without replacement (with replacement when
    fewer than 3P exist), shuffled.
    """
    if train.n_classes != 2:
        raise CompositionError(f"compose_epoch needs a binary task, {train.name!r} has {train.n_classes} classes")
    labels = train.labels
    positives = np.flatnonzero(labels == 1)
    negatives = np.flatnonzero(labels == 0)
    if positives.size == 0:
        raise CompositionError(f"{train.name!r} has no positive samples")
    if negatives.size == 0:
        raise CompositionError(f"{train.name!r} has no negative samples")
    rng = np.random.default_rng(seed)
    wanted = RESAMPLE_FACTOR * positives.size
    drawn = rng.choice(negatives, size=wanted, replace=negatives.size < wanted)
    epoch = np.concatenate([np.repeat(positives, RESAMPLE_FACTOR), drawn])
    return rng.permutation(epoch)


def shuffled_epoch(train: Dataset, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).permutation(len(train))


def induce_sparsity(dataset: Dataset, level: float, seed: int) -> Dataset:
    """
    Remove uniformly chosen observed cells until global sparsity equals ``level``.

    One shuffled order over all cells drives the removal, so for a fixed seed a
    higher level always removes a superset of the cells a lower level removes.
    """
    if not 0.0 <= level < 1.0:
        raise SparsityError(f"sparsity level must be in [0, 1), got {level!r}")
    current = dataset.sparsity
    if level < current - 1e-12:
        raise SparsityError(
            f"requested sparsity {level:.4f} is below the current sparsity {current:.4f}"
        )
    total = dataset.total_cells
    observed = dataset.observed_cells
    target_observed = int(round((1.0 - level) * total))
    to_remove = observed - target_observed
    if to_remove <= 0:
        return dataset

    was_standardized = dataset.stats is not None and dataset.is_standardized
    raw = dataset.destandardize() if was_standardized else dataset

    sizes = [s.values.size for s in raw.samples]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    flat_observed = np.concatenate([(~np.isnan(s.values)).reshape(-1) for s in raw.samples])
    order = np.random.default_rng(seed).permutation(total)
    removal = order[flat_observed[order]][:to_remove]

    drop = np.zeros(total, dtype=bool)
    drop[removal] = True
    samples = []
    for i, s in enumerate(raw.samples):
        cell_drop = drop[offsets[i] : offsets[i + 1]].reshape(s.values.shape)
        samples.append(replace(s, values=np.where(cell_drop, np.nan, s.values)))
    result = raw.with_samples(samples)
    if was_standardized:
        result = result.standardize(result.fit_stats())
    return result


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------

@dataclass
class Batch:
    values: np.ndarray
    mask: np.ndarray
    times: np.ndarray
    padding: np.ndarray
    demographics: np.ndarray
    labels: np.ndarray
    sensor_index: np.ndarray
    sample_ids: Tuple[str, ...] = ()
    sources: Tuple[str, ...] = ()
    sensor_padding: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.sensor_padding is None:
            self.sensor_padding = np.ones(self.values.shape[::2], dtype=bool)

    @property
    def size(self) -> int:
        return self.values.shape[0]


def make_batch(dataset: Dataset, indices: Sequence[int], registry=None) -> Batch:
    return collate([dataset.samples[i] for i in indices], registry)


def collate(chosen: Sequence[TimeSeriesSample], registry=None) -> Batch:
    """
    Pad samples to the batch max T and max D. Missing and padded cells hold 0
    with mask 0; ``padding`` is True on real time steps and ``sensor_padding``
    on real sensor columns. ``registry`` maps each sample's source to
    vocabulary rows; without it sensors index 0..D-1.
    """
    if not chosen:
        raise DataSizeError("cannot build an empty batch")
    for s in chosen:
        if not s.standardized:
            raise StateError(f"sample {s.sample_id!r} is not standardized")
    b = len(chosen)
    t_max = max(s.n_times for s in chosen)
    d = max(s.n_sensors for s in chosen)
    values = np.zeros((b, t_max, d))
    mask = np.zeros((b, t_max, d))
    times = np.zeros((b, t_max))
    padding = np.zeros((b, t_max), dtype=bool)
    sensor_index = np.zeros((b, d), dtype=np.int64)
    sensor_padding = np.zeros((b, d), dtype=bool)
    for i, s in enumerate(chosen):
        t_i, d_i = s.values.shape
        observed = ~np.isnan(s.values)
        values[i, :t_i, :d_i] = np.where(observed, s.values, 0.0)
        mask[i, :t_i, :d_i] = observed
        times[i, :t_i] = s.times
        padding[i, :t_i] = True
        sensor_padding[i, :d_i] = True
        if registry is not None:
            rows = registry.lookup(s.source)
            if rows.size != d_i:
                raise SchemaError(
                    f"registry maps {rows.size} sensors for {s.source!r}, sample {s.sample_id!r} has {d_i}"
                )
            sensor_index[i, :d_i] = rows
        else:
            sensor_index[i, :d_i] = np.arange(d_i)
    return Batch(
        values=values,
        mask=mask,
        times=times,
        padding=padding,
        demographics=np.stack([s.demographics for s in chosen]).reshape(b, -1),
        labels=np.array([s.label for s in chosen], dtype=np.int64),
        sensor_index=sensor_index,
        sample_ids=tuple(s.sample_id for s in chosen),
        sources=tuple(s.source for s in chosen),
        sensor_padding=sensor_padding,
    )


def iter_batches(dataset: Dataset, order: Sequence[int], batch_size: int, registry=None):
    for start in range(0, len(order), batch_size):
        yield make_batch(dataset, order[start : start + batch_size], registry)


# ---------------------------------------------------------------------------
# NDJSON
# ---------------------------------------------------------------------------

def _number_or_none(value, line: int, where: str) -> float:
    if value is None:
        return math.nan
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where}: expected a number or null, got {value!r}", line)
    return float(value)


def load_ndjson(path: Union[str, Path], name: Optional[str] = None) -> Dataset:
    """
    Read one JSON object per line:

        {"times": [...], "sensors": {name: [value-or-null, ...]},
         "static": {...}, "label": int, "id": "optional"}

    An optional first line {"header": {"sensors": [...], "static": [...],
    "n_classes": C, "name": ...}} fixes sensor order and metadata. Without it,
    sensor order follows the first record. String-valued static fields are
    one-hot encoded as ``key=value`` columns; numeric ones stay continuous.
    """
    path = Path(path)
    header: Dict[str, Any] = {}
    records: List[Tuple[int, Dict[str, Any]]] = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw_line in enumerate(f, start=1):
            text = raw_line.strip()
            if not text:
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno)
            if not isinstance(obj, dict):
                raise ParseError("each line must be a JSON object", lineno)
            if "header" in obj and not records:
                if not isinstance(obj["header"], dict):
                    raise ParseError("header must be an object", lineno)
                header = obj["header"]
                continue
            for key in ("times", "sensors", "label"):
                if key not in obj:
                    raise ParseError(f"missing required field {key!r}", lineno)
            records.append((lineno, obj))

    sensor_names: List[str] = list(header.get("sensors", []))
    if not sensor_names and records:
        sensor_names = list(records[0][1]["sensors"].keys())

    static_kinds: Dict[str, str] = {}
    categories: Dict[str, set] = {}
    static_order: List[str] = list(header.get("static", []))
    for lineno, obj in records:
        static = obj.get("static", {}) or {}
        if not isinstance(static, dict):
            raise ParseError("static must be an object", lineno)
        for key, value in static.items():
            if key not in static_order:
                static_order.append(key)
            kind = "categorical" if isinstance(value, str) else "continuous"
            if isinstance(value, bool) or not isinstance(value, (str, int, float)):
                raise ParseError(f"static field {key!r} must be a string or number", lineno)
            if static_kinds.setdefault(key, kind) != kind:
                raise SchemaError(f"line {lineno}: static field {key!r} mixes strings and numbers")
            if kind == "categorical":
                categories.setdefault(key, set()).add(value)

    demographic_names: List[str] = []
    for key in static_order:
        if static_kinds.get(key) == "categorical":
            demographic_names.extend(f"{key}={v}" for v in sorted(categories[key]))
        else:
            demographic_names.append(key)
    column = {n: i for i, n in enumerate(demographic_names)}

    dataset_name = str(name or header.get("name", path.stem))
    samples = []
    max_label = 0
    for lineno, obj in records:
        times = obj["times"]
        if not isinstance(times, list):
            raise ParseError("times must be a list", lineno)
        if not times:
            raise ParseError("times must hold at least one observation time", lineno)
        sensors = obj["sensors"]
        if not isinstance(sensors, dict):
            raise ParseError("sensors must be an object", lineno)
        if set(sensors) != set(sensor_names):
            raise SchemaError(
                f"line {lineno}: sensor set {sorted(sensors)} differs from {sorted(sensor_names)}"
            )
        values = np.full((len(times), len(sensor_names)), np.nan)
        for d, sensor in enumerate(sensor_names):
            series = sensors[sensor]
            if not isinstance(series, list) or len(series) != len(times):
                raise ParseError(f"sensor {sensor!r} must list one entry per time", lineno)
            values[:, d] = [_number_or_none(v, lineno, sensor) for v in series]

        static = obj.get("static", {}) or {}
        if set(static) != set(static_kinds):
            raise SchemaError(f"line {lineno}: static fields {sorted(static)} differ from {sorted(static_kinds)}")
        demographics = np.zeros(len(demographic_names))
        for key, value in static.items():
            if static_kinds[key] == "categorical":
                demographics[column[f"{key}={value}"]] = 1.0
            else:
                demographics[column[key]] = float(value)

        label = obj["label"]
        if isinstance(label, bool) or not isinstance(label, int) or label < 0:
            raise ParseError(f"label must be a non-negative integer, got {label!r}", lineno)
        max_label = max(max_label, label)
        try:
            samples.append(TimeSeriesSample(
                values=values,
                times=[_number_or_none(t, lineno, "times") for t in times],
                demographics=demographics,
                label=label,
                sample_id=str(obj.get("id", f"{path.stem}-{len(samples)}")),
                source=dataset_name,
            ))
        except ValueError as exc:
            raise ParseError(str(exc), lineno)

    n_classes = int(header.get("n_classes", max(2, max_label + 1)))
    return Dataset(
        name=dataset_name,
        samples=tuple(samples),
        sensor_names=tuple(sensor_names),
        demographic_names=tuple(demographic_names),
        n_classes=n_classes,
    )


def write_ndjson(dataset: Dataset, path: Union[str, Path], header: bool = True) -> Path:
    """Write raw (destandardized) samples in the format load_ndjson reads."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = dataset.destandardize()
    if any(s.n_sensors != raw.n_sensors for s in raw.samples):
        raise SchemaError(f"{raw.name!r} mixes sensor layouts; write each source on its own")
    static_keys: List[str] = []
    for n in raw.demographic_names:
        key = n.split("=", 1)[0] if "=" in n else n
        if key not in static_keys:
            static_keys.append(key)

    with open(path, "w", encoding="utf-8") as f:
        if header:
            f.write(json.dumps({"header": {
                "name": raw.name,
                "sensors": list(raw.sensor_names),
                "static": static_keys,
                "n_classes": raw.n_classes,
            }}) + "\n")
        for s in raw.samples:
            static: Dict[str, Any] = {}
            for value, n in zip(s.demographics, raw.demographic_names):
                if "=" in n:
                    key, category = n.split("=", 1)
                    if value >= 0.5:
                        static[key] = category
                else:
                    static[n] = float(value)
            record = {
                "id": s.sample_id,
                "times": [float(t) for t in s.times],
                "sensors": {
                    name: [None if np.isnan(v) else float(v) for v in s.values[:, d]]
                    for d, name in enumerate(raw.sensor_names)
                },
                "static": static,
                "label": int(s.label),
            }
            f.write(json.dumps(record) + "\n")
    return path
