"""
Per-observation embeddings.

Each (time, sensor) cell becomes an E-vector built from two halves:

    [ Linear([x; m]) | identity row of the sensor ]  + temporal encoding of h[t]

x is the zero-filled standardized value and m the indicator bit. Identity rows
live in a ``SensorRegistry`` that several datasets can share, so a sensor that
appears in two corpora can be mapped to one row ("shared") or to one row per
corpus ("separate").
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import tensor as T
from .data import Batch, Dataset, TimeSeriesSample, collate
from .errors import ConfigError, DimensionError, RegistryError
from .nn import Linear, Module, init_rng
from .tensor import DiffTensor, Parameter

REGISTRY_MODES = ("shared", "separate")
CLASSIC_SCALE = 10000.0


class SensorRegistry(Module):
    """Vocabulary of sensor identities backed by one learned row per entry."""

    def __init__(self, width: int, mode: str = "shared", seed: int = 0, name: str = "registry"):
        super().__init__(name)
        if mode not in REGISTRY_MODES:
            raise ConfigError(f"registry mode must be one of {REGISTRY_MODES}, got {mode!r}")
        if width < 1:
            raise DimensionError(f"registry width must be >= 1, got {width}")
        self.width = width
        self.mode = mode
        self.seed = seed
        self.vocabulary: List[str] = []
        self.aliases: Dict[str, List[int]] = {}
        self._index: Dict[str, int] = {}
        self.identity = Parameter(np.zeros((0, width)), f"{name}.identity")

    def __len__(self) -> int:
        return len(self.vocabulary)

    @property
    def vocab_size(self) -> int:
        return len(self.vocabulary)

    def _entry(self, dataset_name: str, sensor: str) -> str:
        return sensor if self.mode == "shared" else f"{dataset_name}/{sensor}"

    def _initial_row(self, entry: str) -> np.ndarray:
        rng = init_rng(self.seed, f"{self.name}.identity/{entry}")
        return rng.normal(0.0, 1.0 / np.sqrt(self.width), size=self.width)

    def register(self, dataset_name: str, sensor_names: Sequence[str]) -> np.ndarray:
        """Map a dataset's local sensor order onto vocabulary rows, adding new entries."""
        sensor_names = list(sensor_names)
        if len(set(sensor_names)) != len(sensor_names):
            raise RegistryError(f"duplicate sensor names for {dataset_name!r}")
        new_rows = []
        local = []
        for sensor in sensor_names:
            entry = self._entry(dataset_name, sensor)
            if entry not in self._index:
                self._index[entry] = len(self.vocabulary)
                self.vocabulary.append(entry)
                new_rows.append(self._initial_row(entry))
            local.append(self._index[entry])
        if dataset_name in self.aliases and self.aliases[dataset_name] != local:
            raise RegistryError(f"{dataset_name!r} is already registered with a different sensor order")
        if new_rows:
            self.identity.data = np.vstack([self.identity.data, np.stack(new_rows)])
            self.identity.grad = None
        self.aliases[dataset_name] = local
        return np.array(local, dtype=np.int64)

    def register_dataset(self, dataset: Dataset) -> None:
        for source, names in dataset.source_sensors.items():
            self.register(source, names)

    def lookup(self, dataset_name: str) -> np.ndarray:
        try:
            return np.array(self.aliases[dataset_name], dtype=np.int64)
        except KeyError:
            raise RegistryError(
                f"dataset {dataset_name!r} is not registered (known: {sorted(self.aliases)})"
            )

    def row(self, entry: str) -> np.ndarray:
        if entry not in self._index:
            raise RegistryError(f"unknown sensor {entry!r}")
        return self.identity.data[self._index[entry]].copy()

    def row_for(self, dataset_name: str, local_index: int) -> np.ndarray:
        rows = self.lookup(dataset_name)
        if not 0 <= local_index < rows.size:
            raise RegistryError(
                f"{dataset_name!r} has {rows.size} sensors, index {local_index} is out of range"
            )
        return self.identity.data[rows[local_index]].copy()

    def to_header(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "mode": self.mode,
            "width": self.width,
            "seed": self.seed,
            "vocabulary": list(self.vocabulary),
            "aliases": {k: list(v) for k, v in sorted(self.aliases.items())},
        }

    @classmethod
    def from_header(cls, header: Dict[str, Any], rows: Optional[np.ndarray] = None) -> "SensorRegistry":
        registry = cls(
            width=int(header["width"]),
            mode=header["mode"],
            seed=int(header.get("seed", 0)),
            name=header.get("name", "registry"),
        )
        registry.vocabulary = list(header["vocabulary"])
        registry._index = {entry: i for i, entry in enumerate(registry.vocabulary)}
        registry.aliases = {k: [int(i) for i in v] for k, v in header["aliases"].items()}
        if rows is None:
            rows = np.stack([registry._initial_row(e) for e in registry.vocabulary]) \
                if registry.vocabulary else np.zeros((0, registry.width))
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape != (len(registry.vocabulary), registry.width):
            raise DimensionError(
                f"registry rows have shape {rows.shape}, header expects "
                f"({len(registry.vocabulary)}, {registry.width})"
            )
        registry.identity.data = rows.copy()
        return registry


@dataclass(frozen=True)
class TemporalEncodingConfig:
    dim: int
    max_time: float = CLASSIC_SCALE

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2:
            raise ConfigError(f"temporal encoding dimension must be a positive even integer, got {self.dim}")
        if not self.max_time > 0:
            raise ConfigError(f"max_time must be > 0, got {self.max_time}")


def temporal_encoding(t, cfg: TemporalEncodingConfig) -> np.ndarray:
    """
    Sinusoidal encoding of absolute observation times.

    Component k is sin(t / T^(k/dim)) for even k and cos(t / T^((k-1)/dim)) for
    odd k. ``t`` may be a scalar or an array; the encoding is appended as a
    trailing axis.
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("observation times must be >= 0")
    even = np.arange(0, cfg.dim, 2, dtype=np.float64)
    angles = t[..., None] / cfg.max_time ** (even / cfg.dim)
    out = np.empty(t.shape + (cfg.dim,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def classic_positional_encoding(pos, dim: int) -> np.ndarray:
    """Sequence-position encoding with the conventional 10000 scale."""
    pos = np.asarray(pos)
    if np.any(pos < 0):
        raise ValueError("positions must be >= 0")
    return temporal_encoding(pos, TemporalEncodingConfig(dim, CLASSIC_SCALE))


@dataclass
class EmbeddedSeries:
    tensor: DiffTensor
    padding: np.ndarray


class ObservationEmbedder(Module):
    """
    Batched cell embedding. Ablation switches zero the value or mask input of
    the value projection, leaving parameter shapes untouched.
    """

    def __init__(self, embed_dim: int, registry: SensorRegistry, max_time: float, seed: int = 0,
                 name: str = "embed"):
        super().__init__(name)
        if embed_dim % 2:
            raise DimensionError(f"embedding size must be even, got {embed_dim}")
        if registry.width != embed_dim // 2:
            raise DimensionError(
                f"registry width {registry.width} must be half the embedding size {embed_dim}"
            )
        self.embed_dim = embed_dim
        self.registry = registry
        self.encoding = TemporalEncodingConfig(embed_dim, max_time)
        self.value_proj = Linear(2, embed_dim // 2, f"{name}.value", seed)

    def __call__(self, batch: Batch, use_values: bool = True, use_mask: bool = True) -> DiffTensor:
        b, t, d = batch.values.shape
        half = self.embed_dim // 2
        cell = np.stack(
            [batch.values * float(use_values), batch.mask * float(use_mask)], axis=-1
        )
        value_part = self.value_proj(DiffTensor(cell))
        identity = T.take_rows(self.registry.identity, batch.sensor_index)
        identity = T.expand(identity.reshape(b, 1, d, half), (b, t, d, half))
        joined = T.concat([value_part, identity], axis=-1)
        encoding = temporal_encoding(batch.times, self.encoding).reshape(b, t, 1, self.embed_dim)
        return joined + encoding


def embed_observations(sample: TimeSeriesSample, embedder: ObservationEmbedder) -> EmbeddedSeries:
    """T x D x E embedding of one standardized sample."""
    batch = collate([sample], embedder.registry)
    out = embedder(batch)
    return EmbeddedSeries(tensor=out.reshape(out.shape[1:]), padding=batch.padding[0])


def embed_demographics(demographics, layer: Linear) -> DiffTensor:
    return layer(T.as_tensor(demographics))
