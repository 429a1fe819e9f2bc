"""Reverse-mode automatic differentiation over an append-only tape.

Values are float64 numpy arrays of any rank; leading axes broadcast like numpy
(the model uses a leading batch axis). Every public op accepts either plain
arrays, in which case it simply computes the result, or :class:`Var` handles,
in which case the op is recorded on the operands' tape.

    tape = Tape()
    x = tape.leaf(3.0, "x")
    y = x * x
    tape.backward(y)["x"]      # -> array(6.)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from moldgnn.errors import ShapeError

OP_KINDS = (
    "leaf",
    "const",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "sigmoid",
    "tanh",
    "relu",
    "concat",
    "reshape",
    "transpose",
    "sum",
    "mean",
)


@dataclass
class TapeNode:
    op: str
    parents: tuple[int, ...]
    value: np.ndarray
    # maps the output cotangent to one cotangent per parent
    vjp: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None = None
    name: str | None = None


@dataclass
class Tape:
    nodes: list[TapeNode] = field(default_factory=list)
    _names: dict[str, int] = field(default_factory=dict)

    def _push(self, node: TapeNode) -> "Var":
        for p in node.parents:
            assert p < len(self.nodes)
        self.nodes.append(node)
        return Var(self, len(self.nodes) - 1)

    def leaf(self, value, name: str) -> "Var":
        """Register a differentiable input under a unique name."""
        if name in self._names:
            raise ValueError(f"duplicate leaf name {name!r}")
        arr = np.array(value, dtype=np.float64)
        v = self._push(TapeNode("leaf", (), arr, name=name))
        self._names[name] = v.index
        return v

    def constant(self, value) -> "Var":
        return self._push(TapeNode("const", (), np.asarray(value, dtype=np.float64)))

    def leaves(self) -> dict[str, "Var"]:
        return {name: Var(self, i) for name, i in self._names.items()}

    def backward(self, root: "Var") -> dict[str, np.ndarray]:
        """Gradient of the scalar ``root`` with respect to every named leaf.

        Leaves that do not influence ``root`` receive zeros.
        """
        if root.tape is not self:
            raise ValueError("root belongs to a different tape")
        if root.value.size != 1:
            raise ShapeError(f"backward needs a scalar root, got shape {root.value.shape}")
        grads: list[np.ndarray | None] = [None] * (root.index + 1)
        grads[root.index] = np.ones_like(root.value)
        for i in range(root.index, -1, -1):
            g = grads[i]
            node = self.nodes[i]
            if g is None or node.vjp is None:
                continue
            for p, gp in zip(node.parents, node.vjp(g)):
                grads[p] = gp if grads[p] is None else grads[p] + gp
        out = {}
        for name, i in self._names.items():
            g = grads[i] if i < len(grads) else None
            out[name] = np.zeros_like(self.nodes[i].value) if g is None else g
        return out


class Var:
    """Handle to one node of a tape."""

    __slots__ = ("tape", "index")
    __array_priority__ = 100.0

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def T(self) -> "Var":
        return transpose(self)

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __neg__(self):
        return neg(self)

    def __repr__(self) -> str:
        node = self.tape.nodes[self.index]
        return f"Var(op={node.op}, shape={self.shape})"


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _tape_of(args: Sequence) -> Tape | None:
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is not None and a.tape is not tape:
                raise ValueError("operands recorded on different tapes")
            tape = a.tape
    return tape


def _record(op: str, args: Sequence, value: np.ndarray, vjp) -> Var | np.ndarray:
    tape = _tape_of(args)
    if tape is None:
        return value
    parents = tuple((a if isinstance(a, Var) else tape.constant(a)).index for a in args)
    return tape._push(TapeNode(op, parents, value, vjp))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast cotangent back down to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def matmul(a, b):
    """Matrix product over the last two axes; leading axes broadcast."""
    av, bv = value_of(a), value_of(b)
    if av.ndim < 2 or bv.ndim < 2:
        raise ShapeError(f"matmul needs operands of rank >= 2, got {av.shape} and {bv.shape}")
    if av.shape[-1] != bv.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {av.shape} @ {bv.shape}")
    out = av @ bv

    def vjp(g):
        return (_unbroadcast(g @ _swap(bv), av.shape), _unbroadcast(_swap(av) @ g, bv.shape))

    return _record("matmul", (a, b), out, vjp)


def _check_broadcast(op: str, av: np.ndarray, bv: np.ndarray) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(av.shape, bv.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {av.shape} and {bv.shape} do not broadcast") from None


def add(a, b):
    av, bv = value_of(a), value_of(b)
    _check_broadcast("add", av, bv)
    return _record("add", (a, b), av + bv, lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def sub(a, b):
    av, bv = value_of(a), value_of(b)
    _check_broadcast("sub", av, bv)
    return _record("sub", (a, b), av - bv, lambda g: (_unbroadcast(g, av.shape), _unbroadcast(-g, bv.shape)))


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    _check_broadcast("mul", av, bv)
    return _record(
        "mul", (a, b), av * bv, lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape))
    )


def neg(a):
    return _record("neg", (a,), -value_of(a), lambda g: (-g,))


def elementwise(a, b, kind: str):
    """``kind`` is one of add, sub, mul. Shapes must match exactly."""
    av, bv = value_of(a), value_of(b)
    if av.shape != bv.shape:
        raise ShapeError(f"elementwise {kind}: shape mismatch {av.shape} vs {bv.shape}")
    try:
        fn = {"add": add, "sub": sub, "mul": mul}[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}") from None
    return fn(a, b)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x):
    s = _sigmoid(value_of(x))
    return _record("sigmoid", (x,), s, lambda g: (g * s * (1.0 - s),))


def tanh(x):
    t = np.tanh(value_of(x))
    return _record("tanh", (x,), t, lambda g: (g * (1.0 - t * t),))


def relu(x):
    xv = value_of(x)
    mask = xv > 0
    return _record("relu", (x,), np.where(mask, xv, 0.0), lambda g: (g * mask,))


def activation(x, kind: str):
    try:
        fn = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(x)


def concat(xs: Sequence, axis: int = -1):
    vals = [value_of(x) for x in xs]
    try:
        out = np.concatenate(vals, axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _record("concat", tuple(xs), out, vjp)


def reshape(x, shape: tuple[int, ...]):
    xv = value_of(x)
    try:
        out = xv.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: {exc}") from None
    return _record("reshape", (x,), out, lambda g: (g.reshape(xv.shape),))


def transpose(x):
    """Swap the last two axes."""
    xv = value_of(x)
    return _record("transpose", (x,), _swap(xv), lambda g: (_swap(g),))


def sum_all(x):
    xv = value_of(x)
    return _record("sum", (x,), np.array(xv.sum()), lambda g: (np.full(xv.shape, float(g)),))


def mean_all(x):
    xv = value_of(x)
    n = xv.size
    return _record("mean", (x,), np.array(xv.mean()), lambda g: (np.full(xv.shape, float(g) / n),))
