"""Reverse-mode automatic differentiation on numpy arrays.

Values are computed eagerly: constructing an operation evaluates it and
records a node holding the inputs plus a closure that maps the output
gradient to input gradients.  `backward` walks the recorded graph from a
scalar root and accumulates gradients for every leaf that requires them.

`stop_gradient` inserts an identity whose node blocks the reverse sweep:
leaves reachable only through it receive exactly zero.

All arithmetic is float64.  Any NaN appearing in a gradient aborts the
sweep with a NumericError naming the operation that produced it.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from . import kernels
from .errors import NumericError, ShapeError

DTYPE = np.float64


def _as_array(value) -> np.ndarray:
    return np.asarray(value, dtype=DTYPE)


class Tensor:
    """A value in the computation graph.

    Leaves are constructed directly (parameters with requires_grad=True,
    constants without); interior nodes come from the op constructors below.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 parents: tuple = (), _backward: Callable | None = None):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self.parents = parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach_value(self) -> np.ndarray:
        return np.array(self.data)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; constants are wrapped on the fly
    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __pow__(self, exponent):
        return pow_scalar(self, exponent)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(data: np.ndarray, op: str, parents: tuple[Tensor, ...],
          backward: Callable) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=requires, op=op, parents=parents,
                  _backward=backward if requires else None)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitive operations


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}")

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape)))

    return _node(out, "add", (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}")

    def backward(g):
        return ((a, _unbroadcast(g * b.data, a.shape)),
                (b, _unbroadcast(g * a.data, b.shape)))

    return _node(out, "mul", (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        return ((a, -g),)

    return _node(-a.data, "neg", (a,), backward)


def pow_scalar(a: Tensor, exponent: float) -> Tensor:
    """Elementwise a**exponent for a python scalar exponent."""
    exponent = float(exponent)
    out = a.data ** exponent

    def backward(g):
        return ((a, g * exponent * a.data ** (exponent - 1.0)),)

    return _node(out, "pow", (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        return ((a, g @ b.data.T), (b, a.data.T @ g))

    return _node(out, "matmul", (a, b), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g):
        return ((a, g * mask),)

    return _node(a.data * mask, "relu", (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    y = expit(a.data)

    def backward(g):
        return ((a, g * y * (1.0 - y)),)

    return _node(y, "sigmoid", (a,), backward)


def tensor_sum(a: Tensor, axis: int | tuple[int, ...] | None = None,
               keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else axis
            g = np.expand_dims(g, axes)
        return ((a, np.broadcast_to(g, a.shape).astype(DTYPE, copy=False)),)

    return _node(out, "sum", (a,), backward)


def tensor_mean(a: Tensor, axis: int | tuple[int, ...] | None = None,
                keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[i] for i in axes]))
    return mul(tensor_sum(a, axis=axis, keepdims=keepdims), Tensor(1.0 / count))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def backward(g):
        return ((a, g.reshape(a.shape)),)

    return _node(a.data.reshape(shape), "reshape", (a,), backward)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        return ((a, y * (g - inner)),)

    return _node(y, "softmax", (a,), backward)


def stop_gradient(a: Tensor) -> Tensor:
    """Identity in value; the reverse sweep does not cross this node."""
    return Tensor(a.data, requires_grad=False, op="stop_gradient", parents=(a,))


def conv1d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError(f"conv1d: need 3-d input and kernels, got {x.shape}, {w.shape}")
    if x.shape[2] != w.shape[1]:
        raise ShapeError(
            f"conv1d: input channels {x.shape[2]} != kernel channels {w.shape[1]}")
    if stride < 1:
        raise ShapeError(f"conv1d: stride must be >= 1, got {stride}")
    width = w.shape[0]
    t_in = x.shape[1]
    if width > t_in + 2 * padding:
        raise ShapeError(
            f"conv1d: kernel width {width} exceeds padded length {t_in + 2 * padding}")
    out = kernels.conv1d_forward(x.data, w.data, stride, padding)

    def backward(g):
        return ((x, kernels.conv1d_grad_input(g, w.data, stride, padding, t_in)),
                (w, kernels.conv1d_grad_kernels(x.data, g, stride, padding, width)))

    return _node(out, "conv1d", (x, w), backward)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy between softmax(logits) [B,N] and integer labels [B]."""
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(
            f"softmax_cross_entropy: logits {logits.shape} with labels {labels.shape}")
    batch = logits.shape[0]
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    losses = log_z - shifted[np.arange(batch), labels]
    out = losses.mean()

    def backward(g):
        probs = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)
        probs[np.arange(batch), labels] -= 1.0
        return ((logits, (g / batch) * probs),)

    return _node(out, "softmax_cross_entropy", (logits,), backward)


def sigmoid_bce(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy between sigmoid(logits) and 0/1 targets."""
    targets = _as_array(targets)
    if targets.shape != logits.shape:
        raise ShapeError(
            f"sigmoid_bce: logits {logits.shape} with targets {targets.shape}")
    x = logits.data
    losses = np.maximum(x, 0.0) - x * targets + np.log1p(np.exp(-np.abs(x)))
    count = x.size

    def backward(g):
        return ((logits, (g / count) * (expit(x) - targets)),)

    return _node(losses.mean(), "sigmoid_bce", (logits,), backward)


# ---------------------------------------------------------------------------
# composites


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return add(matmul(x, w), b)


def global_avg_pool(x: Tensor) -> Tensor:
    """[B, T, C] -> [B, C] by averaging over time."""
    if x.ndim != 3:
        raise ShapeError(f"global_avg_pool: need 3-d input, got {x.shape}")
    return tensor_mean(x, axis=1)


def batch_standardize(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize each column of [B, D] by batch mean and variance."""
    if x.ndim != 2:
        raise ShapeError(f"batch_standardize: need 2-d input, got {x.shape}")
    mu = tensor_mean(x, axis=0, keepdims=True)
    centered = add(x, neg(mu))
    var = tensor_mean(mul(centered, centered), axis=0, keepdims=True)
    return mul(centered, pow_scalar(add(var, Tensor(eps)), -0.5))


def cosine_similarity(p: Tensor, z: Tensor) -> Tensor:
    """Row-wise cosine similarity; [B,D]x[B,D] -> [B], or [D]x[D] -> scalar."""
    if p.shape != z.shape:
        raise ShapeError(f"cosine_similarity: shapes differ {p.shape} vs {z.shape}")
    axis = p.ndim - 1
    norms_p = np.linalg.norm(p.data, axis=axis)
    norms_z = np.linalg.norm(z.data, axis=axis)
    if np.any(norms_p == 0.0) or np.any(norms_z == 0.0):
        raise NumericError("cosine_similarity: zero-norm vector")
    dots = tensor_sum(mul(p, z), axis=axis)
    pn = pow_scalar(tensor_sum(mul(p, p), axis=axis), 0.5)
    zn = pow_scalar(tensor_sum(mul(z, z), axis=axis), 0.5)
    return mul(dots, pow_scalar(mul(pn, zn), -1.0))


# ---------------------------------------------------------------------------
# reverse sweep


def forward(root: Tensor) -> np.ndarray:
    """Value of a graph node.  Evaluation is eager, so this just reads it."""
    return root.data


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Tensor) -> dict[int, np.ndarray]:
    """Accumulate d(root)/d(leaf) for every requires_grad leaf under root.

    Returns a map keyed by id(leaf); each leaf's .grad is also set.  Leaves
    reachable only through stop_gradient get exact zeros.  Raises
    NumericError if the root is not scalar or any gradient contains NaN.
    """
    if root.data.ndim != 0:
        raise NumericError(f"backward: root must be scalar, got shape {root.shape}")
    if np.isnan(root.data):
        raise NumericError(f"backward: root of op '{root.op}' is NaN")

    order = _topo_order(root)
    grads: dict[int, np.ndarray] = {id(root): np.ones((), dtype=DTYPE)}

    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node._backward is None or not node.requires_grad:
            continue
        for parent, contribution in node._backward(g):
            if not parent.requires_grad:
                continue
            if np.isnan(contribution).any():
                raise NumericError(
                    f"backward: NaN gradient produced by op '{node.op}'")
            held = grads.get(id(parent))
            if held is None:
                grads[id(parent)] = np.asarray(contribution, dtype=DTYPE)
            else:
                grads[id(parent)] = held + contribution

    result: dict[int, np.ndarray] = {}
    for node in order:
        if node.op == "leaf" and node.requires_grad:
            g = grads.get(id(node))
            if g is None:
                g = np.zeros(node.shape, dtype=DTYPE)
            node.grad = g
            result[id(node)] = g
    return result


def grads_for(root: Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    """Backward pass returning gradients keyed by parameter name.

    Parameters absent from the graph get zeros, matching the leaf policy.
    """
    by_id = backward(root)
    return {
        name: by_id.get(id(p), np.zeros(p.shape, dtype=DTYPE))
        for name, p in params.items()
        if p.requires_grad
    }
