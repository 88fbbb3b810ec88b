"""
Bi-axial encoder.

Input embeddings have shape (B, T, D, E). An axial pass folds one axis onto
the batch axis and runs an ordinary encoder block over the other:

    time pass:    (B, T, D, E) -> (B*D, T, E)   each sensor lane attends over time
    sensor pass:  (B, T, D, E) -> (B*T, D, E)   each time row attends over sensors

A track owns one stack of L blocks. In every layer it runs its first axis pass
and then its second with the same block. The biaxial model runs two tracks in
opposite orders on the same input; ``time_only`` and ``sensor_only`` run one
track along a single axis. Each track output is pooled over (T, D) with the
padding mask, and the pooled vectors go through merge, demographic fusion and
a two-layer head.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import tensor as T
from .data import Batch, Dataset
from .embedding import ObservationEmbedder, SensorRegistry
from .errors import ConfigError, DegenerateAttentionError, DimensionError
from .nn import FeedForward, LayerNorm, Linear, Module
from .tensor import DiffTensor

MODES = ("biaxial", "time_only", "sensor_only")
POOL_MODES = ("mean", "max")
AXES = ("time", "sensor")
TRACK_ORDERS = {
    "biaxial": (("time", "sensor"), ("sensor", "time")),
    "time_only": (("time",),),
    "sensor_only": (("sensor",),),
}
FFN_MULTIPLIER = 4


@dataclass(frozen=True)
class ModelConfig:
    mode: str = "biaxial"
    embed_dim: int = 32
    n_heads: int = 4
    n_layers: int = 1
    pool: str = "mean"
    dropout: float = 0.1
    attention_dropout: float = 0.1
    max_time: float = 1000.0
    n_demographics: int = 0
    n_classes: int = 2
    use_values: bool = True
    use_mask: bool = True
    use_demographics: bool = True
    registry_mode: str = "shared"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.pool not in POOL_MODES:
            raise ConfigError(f"pool must be one of {POOL_MODES}, got {self.pool!r}")
        if self.embed_dim < 4 or self.embed_dim % 4:
            raise ConfigError(f"embed_dim must be a positive multiple of 4, got {self.embed_dim}")
        if self.n_heads < 1 or self.embed_dim % self.n_heads:
            raise ConfigError(f"embed_dim {self.embed_dim} is not divisible by n_heads {self.n_heads}")
        if self.n_layers < 1:
            raise ConfigError(f"n_layers must be >= 1, got {self.n_layers}")
        for key in ("dropout", "attention_dropout"):
            value = getattr(self, key)
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"{key} must be in [0, 1), got {value!r}")
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be >= 2, got {self.n_classes}")
        if self.n_demographics < 0:
            raise ConfigError("n_demographics must be >= 0")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.n_heads

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        return cls(**data)


# ---------------------------------------------------------------------------
# Attention capture
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttentionRecord:
    sample_id: str
    track: str
    pass_axis: str
    layer: int
    head: int
    lane_index: int
    query_index: int
    key_index: int
    weight: float


@dataclass
class _CapturedPass:
    track: str
    axis: str
    layer: int
    weights: np.ndarray  # (B, lanes, H, S, S)


@dataclass
class AttentionCapture:
    """Attention weights gathered during one forward call."""

    passes: List[_CapturedPass] = field(default_factory=list)
    padding: Optional[np.ndarray] = None
    sensor_padding: Optional[np.ndarray] = None
    sample_ids: Tuple[str, ...] = ()

    def add(self, track: str, axis: str, layer: int, weights: np.ndarray) -> None:
        self.passes.append(_CapturedPass(track, axis, layer, weights))


def top_k_records(capture: AttentionCapture, k: int = 20) -> List[AttentionRecord]:
    """
    Largest ``k`` weights per (sample, track, pass axis), across layers, heads,
    lanes and queries. Entries touching padded time steps or padded sensors
    are skipped.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if capture.padding is None:
        return []
    groups: Dict[Tuple[int, str, str], List[Tuple[np.ndarray, ...]]] = {}
    for captured in capture.passes:
        for b in range(captured.weights.shape[0]):
            valid_t = int(capture.padding[b].sum())
            w = captured.weights[b]
            valid = np.ones(w.shape, dtype=bool)
            padded_sensors = (
                np.zeros(w.shape[0] if captured.axis == "time" else w.shape[-1], dtype=bool)
                if capture.sensor_padding is None else ~capture.sensor_padding[b]
            )
            if captured.axis == "time":
                valid[:, :, valid_t:, :] = False
                valid[:, :, :, valid_t:] = False
                valid[padded_sensors] = False
            else:
                valid[valid_t:] = False
                valid[:, :, padded_sensors, :] = False
                valid[:, :, :, padded_sensors] = False
            lane, head, query, key = np.nonzero(valid)
            groups.setdefault((b, captured.track, captured.axis), []).append(
                (np.full(lane.size, captured.layer), head, lane, query, key, w[valid])
            )

    records: List[AttentionRecord] = []
    for (b, track, axis), parts in groups.items():
        layer, head, lane, query, key, weight = (np.concatenate(col) for col in zip(*parts))
        order = np.argsort(-weight, kind="stable")[:k]
        sample_id = capture.sample_ids[b] if b < len(capture.sample_ids) else str(b)
        for i in order:
            records.append(AttentionRecord(
                sample_id=sample_id,
                track=track,
                pass_axis=axis,
                layer=int(layer[i]),
                head=int(head[i]),
                lane_index=int(lane[i]),
                query_index=int(query[i]),
                key_index=int(key[i]),
                weight=float(weight[i]),
            ))
    return records


@dataclass
class ForwardContext:
    """Per-call state threaded through the encoder."""

    rng: Optional[np.random.Generator] = None
    capture: Optional[AttentionCapture] = None
    score_entries: int = 0


# ---------------------------------------------------------------------------
# Attention and encoder blocks
# ---------------------------------------------------------------------------

def attention_weights(q: DiffTensor, k: DiffTensor,
                      key_padding: Optional[np.ndarray] = None) -> DiffTensor:
    """
    softmax(q k^T / sqrt(z_k)) over the last axis.

    ``key_padding`` broadcasts against the score tensor's key axis; True marks
    a valid key. Padded keys get -inf before the softmax and so zero weight.
    """
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"attention widths disagree: q {q.shape}, k {k.shape}")
    z_k = q.shape[-1]
    scores = T.matmul(q, T.transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)))
    scores = scores / math.sqrt(z_k)
    if key_padding is not None:
        valid = np.asarray(key_padding, dtype=bool)
        if not valid.any(axis=-1).all():
            raise DegenerateAttentionError("every key is padded for at least one query")
        while valid.ndim < scores.ndim:
            valid = np.expand_dims(valid, -2)
        scores = T.masked_fill(scores, ~valid, -np.inf)
    return T.softmax(scores, axis=-1)


def scaled_dot_attention(
    q: DiffTensor,
    k: DiffTensor,
    v: DiffTensor,
    key_padding: Optional[np.ndarray] = None,
) -> Tuple[DiffTensor, DiffTensor]:
    """softmax(q k^T / sqrt(z_k)) v over the last two axes, plus the weights."""
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"attention widths disagree: k {k.shape}, v {v.shape}")
    weights = attention_weights(q, k, key_padding)
    return T.matmul(weights, v), weights


class MultiHeadAttention(Module):
    def __init__(self, width: int, n_heads: int, name: str, seed: int = 0, dropout: float = 0.0):
        super().__init__(name)
        if width % n_heads:
            raise DimensionError(f"width {width} is not divisible by {n_heads} heads")
        self.width = width
        self.n_heads = n_heads
        self.dropout = dropout
        self.query = Linear(width, width, f"{name}.query", seed)
        self.key = Linear(width, width, f"{name}.key", seed)
        self.value = Linear(width, width, f"{name}.value", seed)
        self.output = Linear(width, width, f"{name}.output", seed)

    def _heads(self, x: DiffTensor) -> DiffTensor:
        n, s, _ = x.shape
        return x.reshape(n, s, self.n_heads, self.width // self.n_heads).transpose(0, 2, 1, 3)

    def __call__(
        self, x: DiffTensor, key_padding: Optional[np.ndarray], ctx: ForwardContext
    ) -> Tuple[DiffTensor, DiffTensor]:
        n, s, _ = x.shape
        mask = None if key_padding is None else np.asarray(key_padding, bool)[:, None, :]
        weights = attention_weights(self._heads(self.query(x)), self._heads(self.key(x)), mask)
        ctx.score_entries += weights.size
        applied = weights
        if self.training and self.dropout > 0:
            # captured weights stay undropped
            applied = T.dropout(weights, self.dropout, ctx.rng, True)
        attended = T.matmul(applied, self._heads(self.value(x)))
        merged = attended.transpose(0, 2, 1, 3).reshape(n, s, self.width)
        return self.output(merged), weights


class EncoderBlock(Module):
    """Pre-norm block: x + attn(norm(x)), then x + ffn(norm(x))."""

    def __init__(self, width: int, n_heads: int, name: str, seed: int = 0,
                 dropout: float = 0.0, attention_dropout: float = 0.0):
        super().__init__(name)
        self.dropout = dropout
        self.attention_norm = LayerNorm(width, f"{name}.attention_norm")
        self.attention = MultiHeadAttention(width, n_heads, f"{name}.attention", seed, attention_dropout)
        self.ffn_norm = LayerNorm(width, f"{name}.ffn_norm")
        self.ffn = FeedForward(width, FFN_MULTIPLIER * width, f"{name}.ffn", seed, dropout)

    def __call__(self, x: DiffTensor, key_padding: Optional[np.ndarray],
                 ctx: ForwardContext) -> Tuple[DiffTensor, DiffTensor]:
        attended, weights = self.attention(self.attention_norm(x), key_padding, ctx)
        x = x + T.dropout(attended, self.dropout, ctx.rng, self.training)
        x = x + T.dropout(self.ffn(self.ffn_norm(x), ctx.rng), self.dropout, ctx.rng, self.training)
        return x, weights


def axial_pass(
    x: DiffTensor,
    blocks: Union[EncoderBlock, Sequence[EncoderBlock]],
    axis: str,
    padding: np.ndarray,
    ctx: Optional[ForwardContext] = None,
    track: str = "",
    first_layer: int = 0,
    sensor_padding: Optional[np.ndarray] = None,
) -> DiffTensor:
    """
    Run ``blocks`` along ``axis`` of a (B, T, D, E) tensor with the other axis
    folded onto the batch; the fold is undone before returning.

    Padded time steps are excluded as keys in time passes and padded sensor
    columns (``sensor_padding`` False) as keys in sensor passes. Rows and
    lanes at padded positions are computed but never read downstream.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    if x.ndim != 4:
        raise DimensionError(f"axial_pass expects (B, T, D, E), got {x.shape}")
    ctx = ctx or ForwardContext()
    if isinstance(blocks, EncoderBlock):
        blocks = [blocks]
    b, t, d, e = x.shape
    padding = np.asarray(padding, dtype=bool)
    if padding.shape != (b, t):
        raise DimensionError(f"padding has shape {padding.shape}, expected {(b, t)}")
    if sensor_padding is not None:
        sensor_padding = np.asarray(sensor_padding, dtype=bool)
        if sensor_padding.shape != (b, d):
            raise DimensionError(f"sensor_padding has shape {sensor_padding.shape}, expected {(b, d)}")

    if axis == "time":
        folded = x.transpose(0, 2, 1, 3).reshape(b * d, t, e)
        key_padding = np.repeat(padding, d, axis=0)
        lanes, length = d, t
    else:
        folded = x.reshape(b * t, d, e)
        key_padding = None
        if sensor_padding is not None and not sensor_padding.all():
            key_padding = np.repeat(sensor_padding, t, axis=0)
        lanes, length = t, d

    for offset, block in enumerate(blocks):
        folded, weights = block(folded, key_padding, ctx)
        if ctx.capture is not None:
            heads = weights.shape[1]
            ctx.capture.add(track, axis, first_layer + offset,
                            weights.data.reshape(b, lanes, heads, length, length).copy())

    if axis == "time":
        return folded.reshape(b, d, t, e).transpose(0, 2, 1, 3)
    return folded.reshape(b, t, d, e)


class AxialTrack(Module):
    """L shared blocks; every layer runs one pass per axis in ``order``."""

    def __init__(self, order: Tuple[str, ...], config: ModelConfig, name: str):
        super().__init__(name)
        if not order or any(a not in AXES for a in order):
            raise ValueError(f"invalid axis order {order!r}")
        self.order = tuple(order)
        self.blocks = [
            EncoderBlock(config.embed_dim, config.n_heads, f"{name}.layer{i}", config.seed,
                         config.dropout, config.attention_dropout)
            for i in range(config.n_layers)
        ]

    @property
    def label(self) -> str:
        return "_then_".join(self.order)

    def __call__(self, x: DiffTensor, padding: np.ndarray, ctx: ForwardContext,
                 sensor_padding: Optional[np.ndarray] = None) -> DiffTensor:
        for layer, block in enumerate(self.blocks):
            for axis in self.order:
                x = axial_pass(x, block, axis, padding, ctx, self.label, layer, sensor_padding)
        return x


def track_forward(x: DiffTensor, track: AxialTrack, padding: np.ndarray,
                  ctx: Optional[ForwardContext] = None,
                  sensor_padding: Optional[np.ndarray] = None) -> DiffTensor:
    return track(x, padding, ctx or ForwardContext(), sensor_padding)


# ---------------------------------------------------------------------------
# Full model
# ---------------------------------------------------------------------------

class BiAxialTransformer(Module):
    def __init__(self, config: ModelConfig, registry: SensorRegistry):
        super().__init__("model")
        self.config = config
        e = config.embed_dim
        seed = config.seed
        self.embedder = ObservationEmbedder(e, registry, config.max_time, seed)
        self.tracks = [
            AxialTrack(order, config, f"track_{'_then_'.join(order)}")
            for order in TRACK_ORDERS[config.mode]
        ]
        self.merge = Linear(len(self.tracks) * e, e, "merge", seed)
        self.demographics = (
            Linear(config.n_demographics, e, "demographics", seed) if config.n_demographics else None
        )
        self.fuse = Linear(2 * e, e, "fuse", seed)
        self.head_hidden = Linear(e, e // 2, "head.hidden", seed)
        self.head_out = Linear(e // 2, config.n_classes, "head.out", seed)
        self.last_score_entries = 0

    @property
    def registry(self) -> SensorRegistry:
        return self.embedder.registry

    def pooled(self, batch: Batch, ctx: ForwardContext) -> DiffTensor:
        cfg = self.config
        b = batch.size
        width = len(self.tracks) * cfg.embed_dim
        if not cfg.use_values and not cfg.use_mask:
            # nothing time-varying survives the ablation; every mode pools the same zeros
            return DiffTensor(np.zeros((b, width)))
        x = self.embedder(batch, cfg.use_values, cfg.use_mask)
        keep = batch.padding[:, :, None, None] & batch.sensor_padding[:, None, :, None]
        pooled = [
            T.masked_pool(track(x, batch.padding, ctx, batch.sensor_padding), keep,
                          axes=(1, 2), mode=cfg.pool)
            for track in self.tracks
        ]
        return T.concat(pooled, axis=-1) if len(pooled) > 1 else pooled[0]

    def __call__(self, batch: Batch, rng: Optional[np.random.Generator] = None,
                 capture: Optional[AttentionCapture] = None) -> DiffTensor:
        cfg = self.config
        ctx = ForwardContext(rng=rng, capture=capture)
        if capture is not None:
            capture.padding = batch.padding.copy()
            capture.sensor_padding = batch.sensor_padding.copy()
            capture.sample_ids = tuple(batch.sample_ids)
        merged = T.relu(self.merge(self.pooled(batch, ctx)))

        if self.demographics is not None:
            demographics = batch.demographics * float(cfg.use_demographics)
            context = self.demographics(DiffTensor(demographics))
        else:
            context = DiffTensor(np.zeros((batch.size, cfg.embed_dim)))
        fused = T.relu(self.fuse(T.concat([merged, context], axis=-1)))
        self.last_score_entries = ctx.score_entries
        return self.head_out(T.relu(self.head_hidden(fused)))


def model_forward(
    model: BiAxialTransformer,
    batch: Batch,
    rng: Optional[np.random.Generator] = None,
    capture_k: Optional[int] = None,
) -> Tuple[DiffTensor, List[AttentionRecord]]:
    """Logits plus, when ``capture_k`` is set, the top-k attention records."""
    capture = AttentionCapture() if capture_k else None
    logits = model(batch, rng, capture)
    return logits, (top_k_records(capture, capture_k) if capture is not None else [])


# ---------------------------------------------------------------------------
# Representation cost
# ---------------------------------------------------------------------------

COST_SCHEMES = ("dense_tuple", "dense_tuple_with_missing", "axial")


@dataclass(frozen=True)
class CostReport:
    scheme: str
    rows: int
    score_entries: int
    dense_score_entries: int

    @property
    def saving(self) -> float:
        """Score entries of full attention over all T*D cells divided by this scheme's."""
        return self.dense_score_entries / self.score_entries if self.score_entries else math.inf


def representation_cost(n_times: int, n_sensors: int, sparsity: float, scheme: str) -> CostReport:
    if n_times < 1 or n_sensors < 1:
        raise ValueError(f"T and D must be >= 1, got T={n_times}, D={n_sensors}")
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError(f"sparsity must be in [0, 1], got {sparsity!r}")
    cells = n_times * n_sensors
    dense = cells * cells
    if scheme == "dense_tuple":
        rows = int(round(cells * (1.0 - sparsity)))
        return CostReport(scheme, rows, rows * rows, dense)
    if scheme == "dense_tuple_with_missing":
        return CostReport(scheme, cells, dense, dense)
    if scheme == "axial":
        scores = n_sensors * n_times ** 2 + n_times * n_sensors ** 2
        return CostReport(scheme, cells, scores, dense)
    raise ValueError(f"scheme must be one of {COST_SCHEMES}, got {scheme!r}")


def build_model(config: ModelConfig, datasets: Sequence[Dataset] = ()) -> BiAxialTransformer:
    """Fresh registry holding every source of ``datasets``, wrapped in a model."""
    registry = SensorRegistry(config.embed_dim // 2, config.registry_mode, config.seed)
    for dataset in datasets:
        registry.register_dataset(dataset)
    return BiAxialTransformer(config, registry)
