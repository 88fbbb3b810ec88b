"""
Dense float64 tensors with reverse-mode differentiation.

Every op builds its output eagerly with numpy and, when any input tracks
gradients, records a closure that maps the output gradient back onto its
inputs. ``DiffTensor.backward()`` walks the recorded graph in reverse
topological order and accumulates into the ``grad`` buffers of leaves.

    from bataxis.tensor import DiffTensor, matmul

    a = DiffTensor([[1.0, 2.0]], requires_grad=True)
    b = DiffTensor([[3.0], [4.0]])
    out = matmul(a, b).sum()
    out.backward()
    a.grad   # [[3., 4.]]

Broadcasting follows numpy rules; gradients are summed back over the
broadcast axes. Values are never mutated by an op: each output owns a fresh
array, only ``grad`` buffers change during ``backward()``.
"""

import contextlib
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DegenerateSliceError, DimensionError, NumericError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_anomaly = threading.local()


def _anomaly_active() -> bool:
    return getattr(_anomaly, "depth", 0) > 0


@contextlib.contextmanager
def detect_anomaly() -> Iterator[None]:
    """Raise NumericError from the first op whose output is NaN or Inf."""
    _anomaly.depth = getattr(_anomaly, "depth", 0) + 1
    try:
        yield
    finally:
        _anomaly.depth -= 1


class DiffTensor:
    """n-d float64 array that can take part in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents: Tuple["DiffTensor", ...] = ()
        self._backward: Optional[BackwardFn] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        return float(self.data.item())

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "DiffTensor":
        return DiffTensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"DiffTensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(leaf) into every leaf that tracks gradients."""
        if grad is None:
            if self.data.size != 1:
                raise DimensionError(
                    f"backward() without an explicit gradient needs a scalar, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.shape:
                raise DimensionError(f"gradient shape {grad.shape} does not match {self.shape}")

        pending = {id(self): grad}
        for node in reversed(_topological_order(self)):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = parent_grad if key not in pending else pending[key] + parent_grad

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False) -> "DiffTensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "DiffTensor":
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "DiffTensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "DiffTensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


class Parameter(DiffTensor):
    """Named leaf tensor that always tracks gradients."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter(name={self.name!r}, shape={self.shape})"


TensorLike = Union[DiffTensor, np.ndarray, float, int, Sequence]


def as_tensor(value: TensorLike) -> DiffTensor:
    return value if isinstance(value, DiffTensor) else DiffTensor(value)


def record_op(
    data: np.ndarray,
    parents: Sequence[DiffTensor],
    backward: BackwardFn,
    op: str,
    allow_inf: bool = False,
) -> DiffTensor:
    """Wrap an op result; the graph edge is kept only if a parent tracks gradients."""
    if _anomaly_active():
        bad = np.isnan(data).any() if allow_inf else not np.isfinite(data).all()
        if bad:
            raise NumericError(f"non-finite output from op {op!r}")
    out = DiffTensor.__new__(DiffTensor)
    out.data = data
    out.grad = None
    out.op = op
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _topological_order(root: DiffTensor) -> List[DiffTensor]:
    order: List[DiffTensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: DiffTensor, b: DiffTensor, op: str) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible")


def _normalize_axis(axis: int, ndim: int, op: str) -> int:
    if not -ndim <= axis < ndim:
        raise DimensionError(f"{op}: axis {axis} is invalid for a {ndim}-d tensor")
    return axis % ndim


def _normalize_axes(axes, ndim: int, op: str) -> Tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    normalized = tuple(sorted({_normalize_axis(a, ndim, op) for a in axes}))
    if len(normalized) != len(tuple(axes)):
        raise DimensionError(f"{op}: repeated axis in {tuple(axes)}")
    return normalized


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a: TensorLike, b: TensorLike) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record_op(a.data + b.data, (a, b), backward, "add")


def sub(a: TensorLike, b: TensorLike) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return record_op(a.data - b.data, (a, b), backward, "sub")


def mul(a: TensorLike, b: TensorLike) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return record_op(a.data * b.data, (a, b), backward, "mul")


def div(a: TensorLike, b: TensorLike) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        )

    return record_op(out, (a, b), backward, "div")


def power(x: TensorLike, exponent: float) -> DiffTensor:
    x = as_tensor(x)
    exponent = float(exponent)

    def backward(g):
        return (g * exponent * x.data ** (exponent - 1.0),)

    return record_op(x.data ** exponent, (x,), backward, "power")


def exp(x: TensorLike) -> DiffTensor:
    x = as_tensor(x)
    out = np.exp(x.data)

    def backward(g):
        return (g * out,)

    return record_op(out, (x,), backward, "exp")


def log(x: TensorLike) -> DiffTensor:
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)

    def backward(g):
        return (g / x.data,)

    return record_op(out, (x,), backward, "log")


def relu(x: TensorLike) -> DiffTensor:
    x = as_tensor(x)
    active = x.data > 0.0

    def backward(g):
        return (g * active,)

    return record_op(np.where(active, x.data, 0.0), (x,), backward, "relu")


def dropout(
    x: TensorLike, p: float, rng: Optional[np.random.Generator], training: bool
) -> DiffTensor:
    """Inverted dropout: survivors are scaled by 1/(1-p); identity when not training."""
    x = as_tensor(x)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p!r}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)

    def backward(g):
        return (g * keep,)

    return record_op(x.data * keep, (x,), backward, "dropout")


# ---------------------------------------------------------------------------
# Contractions and reductions
# ---------------------------------------------------------------------------

def matmul(a: TensorLike, b: TensorLike) -> DiffTensor:
    """Batched matrix product; leading axes broadcast, the last two contract."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot contract shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul: batch axes of {a.shape} and {b.shape} do not broadcast")

    def backward(g):
        grad_a = np.matmul(g, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return record_op(np.matmul(a.data, b.data), (a, b), backward, "matmul")


def tensor_sum(x: TensorLike, axis=None, keepdims: bool = False) -> DiffTensor:
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.ndim, "sum")

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return record_op(np.sum(x.data, axis=axes, keepdims=keepdims), (x,), backward, "sum")


def tensor_mean(x: TensorLike, axis=None, keepdims: bool = False) -> DiffTensor:
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.ndim, "mean")
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return div(tensor_sum(x, axis=axes, keepdims=keepdims), float(count))


def softmax(x: TensorLike, axis: int = -1) -> DiffTensor:
    """Max-subtracted softmax; slices along ``axis`` sum to one."""
    x = as_tensor(x)
    axis = _normalize_axis(axis, x.ndim, "softmax")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return record_op(out, (x,), backward, "softmax")


def log_softmax(x: TensorLike, axis: int = -1) -> DiffTensor:
    x = as_tensor(x)
    axis = _normalize_axis(axis, x.ndim, "log_softmax")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),)

    return record_op(out, (x,), backward, "log_softmax")


def layer_norm(x: TensorLike, gain: DiffTensor, bias: DiffTensor, eps: float = 1e-5) -> DiffTensor:
    """Normalize the last axis to zero mean / unit variance, then apply gain and bias."""
    x = as_tensor(x)
    width = x.shape[-1] if x.ndim else 0
    if gain.shape != (width,) or bias.shape != (width,):
        raise DimensionError(
            f"layer_norm: gain {gain.shape} and bias {bias.shape} must both be ({width},) "
            f"for input {x.shape}"
        )
    centred = x.data - np.mean(x.data, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(np.mean(centred * centred, axis=-1, keepdims=True) + eps)
    normed = centred * inv_std
    out = normed * gain.data + bias.data
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        g_normed = g * gain.data
        grad_x = inv_std * (
            g_normed
            - np.mean(g_normed, axis=-1, keepdims=True)
            - normed * np.mean(g_normed * normed, axis=-1, keepdims=True)
        )
        return grad_x, np.sum(g * normed, axis=lead), np.sum(g, axis=lead)

    return record_op(out, (x, gain, bias), backward, "layer_norm")


def masked_pool(x: TensorLike, mask, axes, mode: str = "mean") -> DiffTensor:
    """
    Reduce ``axes`` of x over unmasked entries only.

    ``mask`` is any array broadcastable to x (nonzero = keep). Values stored at
    masked positions never reach the output or receive gradient. A slice with
    no unmasked entry raises DegenerateSliceError.
    """
    x = as_tensor(x)
    mask_data = mask.data if isinstance(mask, DiffTensor) else np.asarray(mask)
    try:
        keep = np.broadcast_to(mask_data != 0, x.shape)
    except ValueError:
        raise DimensionError(f"masked_pool: mask {mask_data.shape} does not broadcast to {x.shape}")
    axes = _normalize_axes(axes, x.ndim, "masked_pool")
    counts = np.sum(keep, axis=axes)
    if np.any(counts == 0):
        raise DegenerateSliceError("masked_pool: at least one pooled slice is fully masked")

    if mode == "mean":
        out = np.sum(np.where(keep, x.data, 0.0), axis=axes) / counts

        def backward(g):
            g = np.expand_dims(g / counts, axes)
            return (np.where(keep, np.broadcast_to(g, x.shape), 0.0),)

        return record_op(out, (x,), backward, "masked_pool_mean")

    if mode == "max":
        kept_axes = tuple(a for a in range(x.ndim) if a not in axes)
        perm = kept_axes + axes
        filled = np.where(keep, x.data, -np.inf).transpose(perm)
        lead_shape = filled.shape[: len(kept_axes)]
        flat = filled.reshape(lead_shape + (-1,))
        winners = np.argmax(flat, axis=-1)[..., None]
        out = np.take_along_axis(flat, winners, axis=-1)[..., 0]
        inverse = np.argsort(perm)

        def backward(g):
            scattered = np.zeros_like(flat)
            np.put_along_axis(scattered, winners, g[..., None], axis=-1)
            return (scattered.reshape(filled.shape).transpose(inverse),)

        return record_op(out, (x,), backward, "masked_pool_max")

    raise ValueError(f"masked_pool mode must be 'mean' or 'max', got {mode!r}")


# ---------------------------------------------------------------------------
# Shape manipulation
# ---------------------------------------------------------------------------

def reshape(x: TensorLike, shape: Sequence[int]) -> DiffTensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(tuple(shape)).copy()
    except ValueError:
        raise DimensionError(f"reshape: cannot view {x.shape} as {tuple(shape)}")

    def backward(g):
        return (g.reshape(x.shape),)

    return record_op(out, (x,), backward, "reshape")


def transpose(x: TensorLike, axes: Optional[Sequence[int]] = None) -> DiffTensor:
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    if sorted(a % max(x.ndim, 1) for a in axes) != list(range(x.ndim)):
        raise DimensionError(f"transpose: {axes} is not a permutation of {x.ndim} axes")
    inverse = np.argsort([a % x.ndim for a in axes])

    def backward(g):
        return (np.transpose(g, inverse),)

    return record_op(np.ascontiguousarray(np.transpose(x.data, axes)), (x,), backward, "transpose")


def concat(tensors: Sequence[TensorLike], axis: int = -1) -> DiffTensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise DimensionError("concat: nothing to concatenate")
    axis = _normalize_axis(axis, parts[0].ndim, "concat")
    for part in parts[1:]:
        if part.ndim != parts[0].ndim or any(
            part.shape[i] != parts[0].shape[i] for i in range(part.ndim) if i != axis
        ):
            raise DimensionError(
                f"concat: shapes {parts[0].shape} and {part.shape} differ off axis {axis}"
            )
    cuts = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return record_op(np.concatenate([p.data for p in parts], axis=axis), parts, backward, "concat")


def expand(x: TensorLike, shape: Sequence[int]) -> DiffTensor:
    """Materialize a broadcast of x to ``shape``."""
    x = as_tensor(x)
    try:
        out = np.broadcast_to(x.data, tuple(shape)).copy()
    except ValueError:
        raise DimensionError(f"expand: cannot broadcast {x.shape} to {tuple(shape)}")

    def backward(g):
        return (_unbroadcast(g, x.shape),)

    return record_op(out, (x,), backward, "expand")


def take_rows(table: DiffTensor, indices) -> DiffTensor:
    """Gather rows of a 2-d table; gradient is scatter-added back to the used rows."""
    indices = np.asarray(indices, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError(f"take_rows: table must be 2-d, got {table.shape}")
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise DimensionError(f"take_rows: index out of range for {table.shape[0]} rows")

    def backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, indices, g)
        return (grad,)

    return record_op(table.data[indices], (table,), backward, "take_rows")


def masked_fill(x: TensorLike, mask, value: float) -> DiffTensor:
    """Replace entries where ``mask`` is true; those entries get no gradient."""
    x = as_tensor(x)
    try:
        where = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    except ValueError:
        raise DimensionError(f"masked_fill: mask does not broadcast to {x.shape}")

    def backward(g):
        return (np.where(where, 0.0, g),)

    return record_op(np.where(where, value, x.data), (x,), backward, "masked_fill", allow_inf=True)


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    """Max relative error per input between analytic and central-difference gradients."""

    errors: List[float] = field(default_factory=list)
    tol: float = 1e-4

    @property
    def max_error(self) -> float:
        return max(self.errors) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol


def _relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-7) -> float:
    scale = max(float(np.max(np.abs(analytic), initial=0.0)),
                float(np.max(np.abs(numeric), initial=0.0)), floor)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def grad_check(
    f: Callable[..., DiffTensor],
    inputs: Sequence[DiffTensor],
    eps: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """
    Compare backprop gradients of scalar ``f(*inputs)`` with central differences.

    ``f`` must be deterministic (dropout off). Inputs are perturbed in place and
    restored; their ``grad`` buffers are overwritten with the analytic result.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps!r}")
    saved_flags = [t.requires_grad for t in inputs]
    for t in inputs:
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
    try:
        with detect_anomaly():
            out = f(*inputs)
            if out.size != 1:
                raise DimensionError(f"grad_check needs a scalar function, got shape {out.shape}")
            out.backward()
            analytic = [
                t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs
            ]

            report = GradCheckReport(tol=tol)
            for t, exact in zip(inputs, analytic):
                numeric = np.zeros_like(t.data)
                flat = t.data.reshape(-1)
                numeric_flat = numeric.reshape(-1)
                for i in range(flat.size):
                    original = flat[i]
                    flat[i] = original + eps
                    upper = f(*inputs).item()
                    flat[i] = original - eps
                    lower = f(*inputs).item()
                    flat[i] = original
                    numeric_flat[i] = (upper - lower) / (2.0 * eps)
                report.errors.append(_relative_error(exact, numeric))
    finally:
        for t, flag in zip(inputs, saved_flags):
            t.requires_grad = flag
    return report
