"""Dense tensors with reverse-mode automatic differentiation.

Every primitive records a backward rule on the tape when any input requires
a gradient. The primitive set is:

    add, sub, mul, div, neg, matmul, sum, mean, exp, log, gelu, dropout,
    concat (last axis), embedding (row gather), transpose, reshape,
    softmax_last_axis, log_softmax_last_axis, layer_norm, cross_entropy

float64 matmuls accumulate the inner dimension sequentially (one rank-1
update at a time), so results are bit-identical to a naive triple loop and
independent of the BLAS build. float32 matmuls go through BLAS.
"""

from __future__ import annotations

import contextlib
import contextvars
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .exceptions import DegenerateRowError, DeterminismError, EmptyBatchError, ShapeError

IGNORE_INDEX = -100

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
_grad_enabled = contextvars.ContextVar("grad_enabled", default=True)


@contextlib.contextmanager
def no_grad():
    """Run a block without recording the autodiff tape."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


class Tensor:
    """A numpy array plus an optional gradient and the op that produced it."""

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._prev: tuple[Tensor, ...] = ()
        self._backward = None
        self._op = "leaf"

    @classmethod
    def _from_op(cls, data, parents, backward, op):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._op = op
        track = _grad_enabled.get() and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._prev = tuple(parents) if track else ()
        out._backward = backward if track else None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag}, op={self._op})"

    def backward(self):
        """Accumulate d(self)/d(t) into ``t.grad`` for every reachable ``t`` with requires_grad."""
        if self.data.ndim != 0:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        topo = _topological_order(self)
        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            node.grad = np.array(g, copy=True) if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._prev, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg

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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._prev:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _pair(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return a, b


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(a.data / b.data, (a, b), backward, "div")


def neg(a: Tensor) -> Tensor:
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)
    return Tensor._from_op(out_data, (a,), lambda g: (g * out_data,), "exp")


def log(a: Tensor) -> Tensor:
    return Tensor._from_op(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))

    def backward(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        return (g * (cdf + x * pdf),)

    return Tensor._from_op(x * cdf, (a,), backward, "gelu")


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None = None, train: bool = True) -> Tensor:
    """Inverted dropout. Identity in eval mode or at rate 0."""
    if not train or rate == 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rng is None:
        raise ValueError("dropout in train mode needs an explicit rng")
    keep = (rng.random(a.shape) >= rate).astype(a.dtype) / a.dtype.type(1.0 - rate)
    return Tensor._from_op(a.data * keep, (a,), lambda g: (g * keep,), "dropout")


# ---------------------------------------------------------------- reductions

def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return Tensor._from_op(np.asarray(out_data), (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis=axis, keepdims=keepdims) / float(count)


# ---------------------------------------------------------------- linear algebra

def _sequential_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = a[..., :, 0:1] * b[..., 0:1, :]
    for t in range(1, a.shape[-1]):
        out = out + a[..., :, t : t + 1] * b[..., t : t + 1, :]
    return out


def matmul_data(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.dtype == np.float64 and b.dtype == np.float64:
        return _sequential_matmul(a, b)
    return np.matmul(a, b)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    if a.dtype != b.dtype:
        raise ShapeError(f"matmul dtype mismatch: {a.dtype} @ {b.dtype}")
    try:
        out_data = matmul_data(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}") from exc

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(matmul_data(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(matmul_data(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return Tensor._from_op(out_data, (a, b), backward, "matmul")


# ---------------------------------------------------------------- shape ops

def reshape(a: Tensor, shape) -> Tensor:
    return Tensor._from_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(ax % a.ndim for ax in axes)
    inverse = tuple(np.argsort(axes))
    return Tensor._from_op(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    axes = list(range(a.ndim))
    axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
    return transpose(a, axes)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = list(tensors)
    if len(tensors) == 1:
        return tensors[0]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def embedding(weight: Tensor, ids) -> Tensor:
    """Gather rows of ``weight`` at integer ``ids`` (any shape)."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise IndexError(f"token id out of range [0, {weight.shape[0]})")

    def backward(g):
        gw = np.zeros_like(weight.data)
        np.add.at(gw, ids, g)
        return (gw,)

    return Tensor._from_op(weight.data[ids], (weight,), backward, "embedding")


# ---------------------------------------------------------------- normalizers

def softmax_last_axis(x: Tensor, mask=None) -> Tensor:
    """Softmax over the last axis.

    ``mask`` is a boolean array broadcastable to ``x`` that is True where an
    entry is excluded; those entries get probability exactly 0.
    """
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if np.any(np.all(mask, axis=-1)):
            raise DegenerateRowError("softmax row has every entry masked")
        z = np.where(mask, -np.inf, z)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return Tensor._from_op(y, (x,), backward, "softmax")


def log_softmax_last_axis(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    out_data = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))

    def backward(g):
        return (g - np.exp(out_data) * g.sum(axis=-1, keepdims=True),)

    return Tensor._from_op(out_data, (x,), backward, "log_softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each last-axis slice to zero mean, unit population variance."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: gamma {gamma.shape} / beta {beta.shape} vs feature size {d}")
    if eps < 0:
        raise ValueError("layer_norm eps must be non-negative")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std

    def backward(g):
        gx = None
        if x.requires_grad:
            dxhat = g * gamma.data
            gx = inv_std * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
        g2 = g.reshape(-1, d)
        return gx, (g2 * xhat.reshape(-1, d)).sum(axis=0), g2.sum(axis=0)

    return Tensor._from_op(xhat * gamma.data + beta.data, (x, gamma, beta), backward, "layer_norm")


def cross_entropy(logits: Tensor, targets, ignore_index: int = IGNORE_INDEX) -> Tensor:
    """Mean token-level cross-entropy over positions whose target != ignore_index."""
    k = logits.shape[-1]
    flat = logits.data.reshape(-1, k)
    targets = np.asarray(targets).reshape(-1)
    if targets.shape[0] != flat.shape[0]:
        raise ShapeError(f"cross_entropy: {flat.shape[0]} positions but {targets.shape[0]} targets")
    valid = targets != ignore_index
    count = int(valid.sum())
    if count == 0:
        raise EmptyBatchError("every target position is ignored")
    picked = targets[valid]
    if picked.min() < 0 or picked.max() >= k:
        raise ValueError(f"targets must lie in [0, {k}) or equal {ignore_index}")
    z = flat - flat.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    rows = np.nonzero(valid)[0]
    loss = -logp[rows, picked].sum() / count

    def backward(g):
        grad = np.exp(logp)
        grad[rows, picked] -= 1.0
        grad[~valid] = 0.0
        return ((grad * (g / count)).reshape(logits.shape).astype(logits.dtype, copy=False),)

    return Tensor._from_op(np.asarray(loss, dtype=logits.dtype), (logits,), backward, "cross_entropy")


# ---------------------------------------------------------------- gradient oracle

def relative_error(analytic, numeric, floor: float = 1e-8) -> np.ndarray:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


@dataclass
class GradReport:
    """Analytic vs central-difference gradients, keyed by parameter name."""

    analytic: dict[str, np.ndarray] = field(default_factory=dict)
    numeric: dict[str, np.ndarray] = field(default_factory=dict)
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def max_relative_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def failures(self, tol: float = 1e-4) -> list[str]:
        return [name for name, err in self.errors.items() if err > tol]

    def format_table(self) -> str:
        width = max([len(n) for n in self.errors] + [9])
        lines = [f"{'parameter':<{width}}  {'size':>6}  max_rel_error"]
        for name, err in self.errors.items():
            lines.append(f"{name:<{width}}  {self.analytic[name].size:>6}  {err:.3e}")
        lines.append(f"{'overall':<{width}}  {'':>6}  {self.max_relative_error:.3e}")
        return "\n".join(lines)


def _value(out) -> float:
    return float(out.data) if isinstance(out, Tensor) else float(out)


def finite_difference_gradient(f, params: dict[str, Tensor], epsilon: float = 1e-5) -> GradReport:
    """Compare autodiff gradients of ``f()`` against central differences.

    ``f`` takes no arguments and reads the current values of ``params``; it
    must be deterministic. Parameters are perturbed in place and restored.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    for p in params.values():
        p.grad = None
    out = f()
    baseline = _value(out)
    if isinstance(out, Tensor):
        out.backward()
    with no_grad():
        if _value(f()) != baseline:
            raise DeterminismError("f() returned different values on two identical evaluations")

    report = GradReport()
    for name, p in params.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        numeric = np.zeros(p.shape, dtype=np.float64)
        flat = p.data.reshape(-1)
        if not np.shares_memory(flat, p.data):
            raise ValueError(f"parameter {name} is not contiguous")
        with no_grad():
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                f_plus = _value(f())
                flat[i] = orig - epsilon
                f_minus = _value(f())
                flat[i] = orig
                numeric.flat[i] = (f_plus - f_minus) / (2.0 * epsilon)
        report.analytic[name] = analytic
        report.numeric[name] = numeric
        report.errors[name] = float(relative_error(analytic, numeric).max()) if numeric.size else 0.0
    return report
