"""
Synthetic corpora with planted, recoverable label signal.

Three signal modes:

- ``mask_only``: the label lives only in which cells are observed. Signal
  sensors put most of their observations in the early half of the window for
  one class and in the late half for the other; observed values are
  N(0, noise^2), so at noise 0 the values channel is constant.
- ``cross_axis``: y = A AND B, where A is the sign of sensor 0's early values
  and B is the late-window missingness pattern of sensor 1. Neither axis alone
  determines the label.
- ``dense_multiclass``: C classes on a regular grid. Class c is a plane wave
  with c + 1 cycles over the window and its own phase step across sensors;
  the phase is drawn per sample, and level and amplitude are the same for
  every class. A single cell therefore says nothing about the class, which
  lives only in how cells relate along either axis.

Observed-cell counts are fixed per sample, so the corpus sparsity matches
the target up to per-sample rounding.
"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .data import Dataset, TimeSeriesSample
from .errors import SpecError

SIGNAL_MODES = ("cross_axis", "mask_only", "dense_multiclass")
VALUE_SHIFT = 1.5
SPARSITY_TOLERANCE = 0.01


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = 1000
    n_times: int = 16
    n_sensors: int = 8
    n_classes: int = 2
    sparsity: float = 0.5
    signal_mode: str = "mask_only"
    noise: float = 0.0
    seed: int = 0
    positive_rate: float = 0.5
    label_noise: float = 0.0
    n_demographics: int = 2
    name: str = "synthetic"

    def __post_init__(self):
        if self.signal_mode not in SIGNAL_MODES:
            raise SpecError(f"signal_mode must be one of {SIGNAL_MODES}, got {self.signal_mode!r}")
        if self.n_samples < 1 or self.n_times < 2 or self.n_sensors < 1:
            raise SpecError(
                f"extents must satisfy N >= 1, T >= 2, D >= 1; got N={self.n_samples}, "
                f"T={self.n_times}, D={self.n_sensors}"
            )
        if not 0.0 <= self.sparsity < 1.0:
            raise SpecError(f"sparsity must be in [0, 1), got {self.sparsity!r}")
        if self.noise < 0:
            raise SpecError(f"noise must be >= 0, got {self.noise!r}")
        if not 0.0 < self.positive_rate < 1.0:
            raise SpecError(f"positive_rate must be in (0, 1), got {self.positive_rate!r}")
        if not 0.0 <= self.label_noise <= 0.5:
            raise SpecError(f"label_noise must be in [0, 0.5], got {self.label_noise!r}")
        if self.n_demographics < 0:
            raise SpecError("n_demographics must be >= 0")
        if self.signal_mode == "dense_multiclass":
            if self.n_classes < 2:
                raise SpecError("dense_multiclass needs at least 2 classes")
            if self.n_times <= 2 * self.n_classes:
                raise SpecError(
                    f"dense_multiclass needs n_times > 2 * n_classes so every class frequency "
                    f"stays below Nyquist; got T={self.n_times}, C={self.n_classes}"
                )
        elif self.n_classes != 2:
            raise SpecError(f"{self.signal_mode} is a binary mode, got n_classes={self.n_classes}")
        if self.signal_mode == "cross_axis" and self.n_sensors < 2:
            raise SpecError("cross_axis needs at least 2 sensors")


def multiclass_amplitude(spec: SyntheticSpec) -> float:
    return 3.0 * max(spec.noise, 1.0)


def _plane_wave(spec: SyntheticSpec, label: int, phase: float) -> np.ndarray:
    cycles = label + 1
    step = 2.0 * np.pi * cycles / (spec.n_sensors * (spec.n_classes + 1))
    t = np.arange(spec.n_times, dtype=np.float64)[:, None]
    d = np.arange(spec.n_sensors, dtype=np.float64)[None, :]
    angle = 2.0 * np.pi * cycles * t / spec.n_times + step * d + phase
    return multiclass_amplitude(spec) * np.sin(angle)


def multiclass_templates(spec: SyntheticSpec) -> np.ndarray:
    """
    (C, T, D) noiseless class patterns at phase 0.

    Frequencies are distinct and below Nyquist, so any two templates are
    exactly the amplitude 3 * max(noise, 1) apart in root-mean-square.
    """
    return np.stack([_plane_wave(spec, c, 0.0) for c in range(spec.n_classes)])


def _split_counts(spec: SyntheticSpec) -> Tuple[int, int]:
    """Early/late observation counts of a signal sensor for the 'high early' class."""
    early = spec.n_times // 2
    density = 2.0 * (1.0 - spec.sparsity)
    k_hi = int(round(min(1.0, density) * early))
    k_lo = int(round(max(0.0, density - 1.0) * early))
    if k_hi == k_lo:
        raise SpecError(
            f"sparsity {spec.sparsity} leaves no room for a missingness signal over "
            f"{spec.n_times} time steps"
        )
    return k_hi, k_lo


def _irregular_times(rng: np.random.Generator, n: int) -> np.ndarray:
    gaps = rng.uniform(0.5, 1.5, size=n)
    return np.cumsum(gaps) - gaps[0]


def _observe(rng: np.random.Generator, size: int, count: int, offset: int = 0) -> np.ndarray:
    return offset + rng.choice(size, size=count, replace=False)


def _fill_free(rng, observed: np.ndarray, free: List[int], remaining: int) -> None:
    """Spread ``remaining`` observations uniformly over the cells of the free sensors."""
    if not free or remaining <= 0:
        return
    t = observed.shape[0]
    cells = np.array([(ti, d) for d in free for ti in range(t)])
    pick = rng.choice(len(cells), size=min(remaining, len(cells)), replace=False)
    observed[cells[pick, 0], cells[pick, 1]] = True


def _budget(spec: SyntheticSpec) -> int:
    return int(round((1.0 - spec.sparsity) * spec.n_times * spec.n_sensors))


def _mask_only(spec, rng, label: int) -> Tuple[np.ndarray, np.ndarray]:
    t, d = spec.n_times, spec.n_sensors
    early = t // 2
    k_hi, k_lo = _split_counts(spec)
    n_signal = max(1, d // 2)
    observed = np.zeros((t, d), dtype=bool)
    planted = 0
    for s in range(n_signal):
        k_early, k_late = (k_hi, k_lo) if label == 1 else (k_lo, k_hi)
        observed[_observe(rng, early, k_early), s] = True
        observed[_observe(rng, t - early, k_late, early), s] = True
        planted += k_early + k_late
    _fill_free(rng, observed, list(range(n_signal, d)), _budget(spec) - planted)
    values = spec.noise * rng.standard_normal((t, d))
    return values, observed


def _cross_axis(spec, rng, a: bool, b: bool) -> Tuple[np.ndarray, np.ndarray]:
    t, d = spec.n_times, spec.n_sensors
    early = t // 2
    k_hi, k_lo = _split_counts(spec)
    observed = np.zeros((t, d), dtype=bool)

    k_a = max(2, int(round((1.0 - spec.sparsity) * t)))
    a_early = min(early, (k_a + 1) // 2)
    a_late = min(t - early, k_a - a_early)
    observed[_observe(rng, early, a_early), 0] = True
    observed[_observe(rng, t - early, a_late, early), 0] = True

    k_late, k_early = (k_hi, k_lo) if b else (k_lo, k_hi)
    observed[_observe(rng, early, k_early), 1] = True
    observed[_observe(rng, t - early, k_late, early), 1] = True

    planted = a_early + a_late + k_early + k_late
    _fill_free(rng, observed, list(range(2, d)), _budget(spec) - planted)

    values = rng.standard_normal((t, d))
    shift = VALUE_SHIFT if a else -VALUE_SHIFT
    values[:early, 0] = shift + spec.noise * rng.standard_normal(early)
    return values, observed


def _dense_multiclass(spec, rng, label: int) -> Tuple[np.ndarray, np.ndarray]:
    t, d = spec.n_times, spec.n_sensors
    phase = rng.uniform(0.0, 2.0 * np.pi)
    values = _plane_wave(spec, label, phase) + spec.noise * rng.standard_normal((t, d))
    observed = np.zeros(t * d, dtype=bool)
    observed[rng.choice(t * d, size=_budget(spec), replace=False)] = True
    return values, observed.reshape(t, d)


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Build a raw (unstandardized) corpus for ``spec``; deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    if spec.signal_mode in ("mask_only", "cross_axis"):
        _split_counts(spec)
    factor_rate = float(np.sqrt(spec.positive_rate))

    samples = []
    for i in range(spec.n_samples):
        if spec.signal_mode == "mask_only":
            label = int(rng.random() < spec.positive_rate)
            values, observed = _mask_only(spec, rng, label)
            times = _irregular_times(rng, spec.n_times)
        elif spec.signal_mode == "cross_axis":
            a = bool(rng.random() < factor_rate)
            b = bool(rng.random() < factor_rate)
            label = int(a and b)
            values, observed = _cross_axis(spec, rng, a, b)
            times = _irregular_times(rng, spec.n_times)
        else:
            label = int(rng.integers(spec.n_classes))
            values, observed = _dense_multiclass(spec, rng, label)
            times = np.arange(spec.n_times, dtype=np.float64)

        if spec.label_noise > 0 and rng.random() < spec.label_noise:
            if spec.n_classes == 2:
                label = 1 - label
            else:
                label = int((label + rng.integers(1, spec.n_classes)) % spec.n_classes)

        samples.append(TimeSeriesSample(
            values=np.where(observed, values, np.nan),
            times=times,
            demographics=rng.standard_normal(spec.n_demographics),
            label=label,
            sample_id=f"{spec.name}-{i:05d}",
            source=spec.name,
        ))

    dataset = Dataset(
        name=spec.name,
        samples=tuple(samples),
        sensor_names=tuple(f"sensor_{d:02d}" for d in range(spec.n_sensors)),
        demographic_names=tuple(f"static_{p}" for p in range(spec.n_demographics)),
        n_classes=spec.n_classes,
    )
    if abs(dataset.sparsity - spec.sparsity) > SPARSITY_TOLERANCE:
        raise SpecError(
            f"{spec.signal_mode} cannot reach sparsity {spec.sparsity:.3f} with T={spec.n_times}, "
            f"D={spec.n_sensors} (achieved {dataset.sparsity:.3f})"
        )
    return dataset
