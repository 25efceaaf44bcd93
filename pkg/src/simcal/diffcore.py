"""Minimal reverse-mode autodiff on dense numpy arrays, plus Adam.

The graph is rebuilt on every forward pass (define-by-run). Arrays are
dense row-major float64 with rank <= 3, which covers every network in
this package (batch x time x feature at most). Not thread-safe: a graph
must be built and differentiated on a single thread.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Node",
    "Parameter",
    "ParamStore",
    "constant",
    "tanh",
    "relu",
    "exp",
    "log",
    "sigmoid",
    "logsumexp",
    "concat",
    "backward",
]

_MAX_RANK = 3


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim > _MAX_RANK:
        raise ValueError(f"rank {arr.ndim} exceeds supported maximum {_MAX_RANK}")
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the shape of its source."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Node:
    """A value in the computation graph.

    ``value`` and ``grad`` always share a shape. ``grad`` is allocated
    lazily by :func:`backward`.
    """

    __slots__ = ("value", "grad", "op", "parents", "_backward_fn", "requires_grad")

    def __init__(self, value, op="leaf", parents=(), backward_fn=None,
                 requires_grad=False):
        self.value = _as_array(value)
        self.grad = None
        self.op = op
        self.parents = tuple(parents)
        self._backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape})"

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take_slice(self, index)

    def sum(self, axis=None):
        return reduce_sum(self, axis)

    def mean(self, axis=None):
        return reduce_mean(self, axis)


class Parameter(Node):
    """A persistent leaf node holding trainable state."""

    def __init__(self, value, name=""):
        super().__init__(value, op="param", requires_grad=True)
        self.name = name

    __slots__ = ("name",)


def constant(value) -> Node:
    return Node(value, op="const")


def _wrap(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


# -- primitives --------------------------------------------------------


def add(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    try:
        out = a.value + b.value
    except ValueError:
        raise ValueError(
            f"add: shapes {a.value.shape} and {b.value.shape} do not broadcast"
        ) from None

    def bwd(g, out):
        return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)

    return Node(out, "add", (a, b), bwd)


def mul(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    try:
        out = a.value * b.value
    except ValueError:
        raise ValueError(
            f"mul: shapes {a.value.shape} and {b.value.shape} do not broadcast"
        ) from None

    def bwd(g, out):
        return (_unbroadcast(g * b.value, a.value.shape),
                _unbroadcast(g * a.value, b.value.shape))

    return Node(out, "mul", (a, b), bwd)


def matmul(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ValueError(
            f"matmul: incompatible shapes {a.value.shape} and {b.value.shape}"
        )
    out = a.value @ b.value

    def bwd(g, out):
        return g @ b.value.T, a.value.T @ g

    return Node(out, "matmul", (a, b), bwd)


def tanh(a) -> Node:
    a = _wrap(a)
    out = np.tanh(a.value)

    def bwd(g, out):
        return (g * (1.0 - out * out),)

    return Node(out, "tanh", (a,), bwd)


def relu(a) -> Node:
    a = _wrap(a)
    out = np.maximum(a.value, 0.0)

    def bwd(g, out):
        return (g * (a.value > 0.0),)

    return Node(out, "relu", (a,), bwd)


def exp(a) -> Node:
    a = _wrap(a)
    out = np.exp(a.value)

    def bwd(g, out):
        return (g * out,)

    return Node(out, "exp", (a,), bwd)


def log(a) -> Node:
    a = _wrap(a)
    out = np.log(a.value)

    def bwd(g, out):
        return (g / a.value,)

    return Node(out, "log", (a,), bwd)


def sigmoid(a) -> Node:
    a = _wrap(a)
    out = _sigmoid_np(a.value)

    def bwd(g, out):
        return (g * out * (1.0 - out),)

    return Node(out, "sigmoid", (a,), bwd)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    # Evaluate through exp of a non-positive argument so neither branch overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logsumexp(a, axis=None) -> Node:
    a = _wrap(a)
    m = np.max(a.value, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    shifted = np.exp(a.value - m)
    total = shifted.sum(axis=axis, keepdims=True)
    out = np.log(total) + m
    out = out.reshape(()) if axis is None else np.squeeze(out, axis=axis)

    softmax = shifted / total

    def bwd(g, out):
        if axis is None:
            return (g * softmax,)
        return (np.expand_dims(g, axis) * softmax,)

    return Node(out, "logsumexp", (a,), bwd)


def concat(nodes, axis=0) -> Node:
    nodes = [_wrap(n) for n in nodes]
    ranks = {n.value.ndim for n in nodes}
    if len(ranks) != 1:
        raise ValueError(f"concat: mixed ranks {sorted(ranks)}")
    out = np.concatenate([n.value for n in nodes], axis=axis)
    sizes = [n.value.shape[axis] for n in nodes]
    offsets = np.cumsum([0] + sizes)

    def bwd(g, out):
        grads = []
        for k, n in enumerate(nodes):
            sl = [np.s_[:]] * g.ndim
            sl[axis] = np.s_[offsets[k]:offsets[k + 1]]
            grads.append(g[tuple(sl)])
        return tuple(grads)

    return Node(out, "concat", tuple(nodes), bwd)


def take_slice(a, index) -> Node:
    a = _wrap(a)
    out = a.value[index]
    if np.isscalar(out) or out.ndim == 0:
        out = np.asarray(out, dtype=np.float64)

    def bwd(g, out):
        full = np.zeros_like(a.value)
        np.add.at(full, index, g)
        return (full,)

    return Node(out, "slice", (a,), bwd)


def reduce_sum(a, axis=None) -> Node:
    a = _wrap(a)
    out = a.value.sum(axis=axis)

    def bwd(g, out):
        if axis is None:
            return (np.full_like(a.value, g),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.value.shape).copy(),)

    return Node(out, "sum", (a,), bwd)


def reduce_mean(a, axis=None) -> Node:
    a = _wrap(a)
    out = a.value.mean(axis=axis)
    n = a.value.size if axis is None else a.value.shape[axis]

    def bwd(g, out):
        if axis is None:
            return (np.full_like(a.value, g / n),)
        return (np.broadcast_to(np.expand_dims(g, axis) / n, a.value.shape).copy(),)

    return Node(out, "mean", (a,), bwd)


# -- backward pass -----------------------------------------------------


def backward(root: Node) -> None:
    """Accumulate d(root)/d(leaf) into ``.grad`` of every reachable node.

    ``root`` must be scalar. Gradients add onto existing ``.grad``
    buffers of :class:`Parameter` leaves, so call
    :meth:`ParamStore.zero_grad` between steps.
    """
    if root.value.ndim != 0:
        raise ValueError(f"backward: root must be scalar, got shape {root.value.shape}")

    topo: list[Node] = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(root): np.asarray(1.0)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.grad is None:
            node.grad = np.array(g, dtype=np.float64)
        else:
            node.grad = node.grad + g
        if node._backward_fn is None:
            continue
        parent_grads = node._backward_fn(np.asarray(g, dtype=np.float64), node.value)
        for p, pg in zip(node.parents, parent_grads):
            if not p.requires_grad:
                continue
            acc = grads.get(id(p))
            grads[id(p)] = pg if acc is None else acc + pg


# -- parameters and Adam -----------------------------------------------


class ParamStore:
    """Named trainable arrays with per-array Adam moments."""

    def __init__(self):
        self.params: dict[str, Parameter] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def register(self, name: str, value) -> Parameter:
        if name in self.params:
            raise ValueError(f"parameter {name!r} already registered")
        p = Parameter(np.array(value, dtype=np.float64), name=name)
        self.params[name] = p
        self._m[name] = np.zeros_like(p.value)
        self._v[name] = np.zeros_like(p.value)
        return p

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def adam_step(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8) -> None:
        """One bias-corrected Adam update over all registered parameters.

        Parameters with no accumulated gradient are left untouched;
        non-finite gradients refuse the whole step.
        """
        for name, p in self.params.items():
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        self.step_count += 1
        b1, b2 = betas
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.value -= lr * (m / c1) / (np.sqrt(v / c2) + eps)

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, arr in state.items():
            self.params[name].value[...] = arr

    def clone_values(self) -> dict[str, np.ndarray]:
        return self.state()
