"""Tape-based reverse-mode differentiation over dense float64 matrices.

Every value is a ``numpy`` array whose last two axes are the matrix axes.
Leading axes, when present, are a batch of independent matrices: ``matmul``
follows numpy's batched semantics, everything else is strictly shape-checked.
Bias addition is the only broadcasting op and has to be asked for
explicitly through :meth:`Tape.add_bias`.

Operations are recorded as :class:`Node` entries tagged with an :class:`Op`
member; the adjoint rules live in a table keyed by that tag rather than in
closures, so a tape can be listed with :meth:`Tape.records`.

Example
-------
>>> tape = Tape()
>>> w = tape.leaf(np.ones((2, 2)), name="w")
>>> loss = tape.sum(tape.mul(w, w))
>>> grads = tape.backward(loss)
>>> grads["w"]
array([[2., 2.],
       [2., 2.]])
"""

from __future__ import annotations

import contextlib
import enum
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ContractError, DimensionError

__all__ = ["Op", "Node", "Tape", "corrupted_adjoint"]


class Op(str, enum.Enum):
    LEAF = "leaf"
    MATMUL = "matmul"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    SCALE = "scale"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    RELU = "relu"
    ADD_BIAS = "add_bias"
    DROPOUT = "dropout"
    SOFTMAX_ROW = "softmax_row"
    CONCAT = "concat"
    TRANSPOSE = "transpose"
    MEAN_ROWS = "mean_rows"
    MAX_ROWS = "max_rows"
    TAKE = "take"
    SUM = "sum"
    LOG = "log"
    SPMM = "spmm"
    RESHAPE = "reshape"


@dataclass(eq=False)
class Node:
    """One recorded value on a tape."""

    tape: "Tape" = field(repr=False)
    index: int
    op: Op
    value: np.ndarray
    parents: tuple["Node", ...] = ()
    attrs: dict[str, Any] = field(default_factory=dict, repr=False)
    requires_grad: bool = False
    name: str | None = None
    grad: np.ndarray | None = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __add__(self, other):
        return self.tape.add(self, other)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)


# ops whose adjoint is scaled by this factor (negative-control hook for gradcheck)
_CORRUPTED: dict[Op, float] = {}


@contextlib.contextmanager
def corrupted_adjoint(op: Op | str, factor: float = 1.5):
    """Deliberately scale the adjoint of ``op`` while the context is active."""
    op = Op(op)
    _CORRUPTED[op] = factor
    try:
        yield
    finally:
        _CORRUPTED.pop(op, None)


def _as_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim < 2:
        raise DimensionError(f"expected at least 2 axes, got shape {arr.shape}")
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # sum out batch axes introduced by numpy matmul broadcasting
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # route batch-times-matrix products through one large GEMM
    if a.ndim > 2 and b.ndim == 2:
        return (a.reshape(-1, a.shape[-1]) @ b).reshape(a.shape[:-1] + (b.shape[-1],))
    if a.ndim == 2 and b.ndim > 2:
        return np.swapaxes(_mm(np.swapaxes(b, -1, -2), a.T), -1, -2)
    return np.matmul(a, b)


def _same_shape(opname: str, a: Node, b: Node) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{opname}: shape mismatch {a.shape} vs {b.shape}")


class Tape:
    """Single-writer record of operations, replayed in reverse by :meth:`backward`."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _push(self, op: Op, value: np.ndarray, parents=(), name=None, requires_grad=None, **attrs) -> Node:
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        node = Node(self, len(self.nodes), op, value, tuple(parents), attrs, requires_grad, name)
        self.nodes.append(node)
        return node

    def _own(self, *nodes: Node) -> None:
        for n in nodes:
            if not isinstance(n, Node) or n.tape is not self:
                raise ContractError("operand is not a node of this tape")

    # -- leaves -------------------------------------------------------------

    def leaf(self, value, name: str | None = None, requires_grad: bool = True) -> Node:
        return self._push(Op.LEAF, _as_matrix(value), (), name=name, requires_grad=requires_grad)

    def const(self, value, name: str | None = None) -> Node:
        return self.leaf(value, name=name, requires_grad=False)

    # -- linear algebra -----------------------------------------------------

    def matmul(self, a: Node, b: Node) -> Node:
        self._own(a, b)
        if a.shape[-1] != b.shape[-2]:
            raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
        try:
            value = _mm(a.value, b.value)
        except ValueError as exc:
            raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}") from exc
        return self._push(Op.MATMUL, value, (a, b))

    def spmm(self, matrix, a: Node) -> Node:
        """Constant (typically ``scipy.sparse``) matrix times a 2-D node."""
        self._own(a)
        if a.value.ndim != 2 or matrix.shape[1] != a.shape[0]:
            raise DimensionError(f"spmm: cannot multiply {matrix.shape} by {a.shape}")
        return self._push(Op.SPMM, np.asarray(matrix @ a.value), (a,), matrix=matrix)

    def reshape(self, a: Node, shape: tuple[int, ...]) -> Node:
        self._own(a)
        try:
            value = a.value.reshape(shape)
        except ValueError as exc:
            raise DimensionError(f"reshape: cannot view {a.shape} as {shape}") from exc
        if value.ndim < 2:
            raise DimensionError(f"reshape target {shape} must keep two matrix axes")
        return self._push(Op.RESHAPE, value, (a,))

    def transpose(self, a: Node) -> Node:
        self._own(a)
        return self._push(Op.TRANSPOSE, np.swapaxes(a.value, -1, -2), (a,))

    def concat(self, axis: str, ms: Sequence[Node]) -> Node:
        """Join along ``"rows"`` (stack vertically) or ``"cols"`` (side by side)."""
        if axis not in ("rows", "cols"):
            raise ContractError(f"concat axis must be 'rows' or 'cols', got {axis!r}")
        if not ms:
            raise DimensionError("concat of an empty list")
        self._own(*ms)
        ax = -2 if axis == "rows" else -1
        other = -1 if axis == "rows" else -2
        ref = ms[0].shape
        for m in ms[1:]:
            if m.shape[:-2] != ref[:-2] or m.shape[other] != ref[other]:
                raise DimensionError(f"concat({axis}): non-conforming shapes {ref} and {m.shape}")
        if len(ms) == 1:
            value = ms[0].value
        else:
            value = np.concatenate([m.value for m in ms], axis=ax)
        sizes = [m.shape[ax] for m in ms]
        return self._push(Op.CONCAT, value, ms, axis=ax, sizes=sizes)

    def take(self, a: Node, indices) -> Node:
        """Select entries of the leading (batch) axis; repeated indices are allowed."""
        self._own(a)
        if a.value.ndim < 3:
            raise DimensionError(f"take needs a batch axis, got shape {a.shape}")
        idx = np.asarray(indices, dtype=np.intp)
        return self._push(Op.TAKE, a.value[idx], (a,), indices=idx)

    # -- elementwise --------------------------------------------------------

    def add(self, a: Node, b: Node) -> Node:
        self._own(a, b)
        _same_shape("add", a, b)
        return self._push(Op.ADD, a.value + b.value, (a, b))

    def sub(self, a: Node, b: Node) -> Node:
        self._own(a, b)
        _same_shape("sub", a, b)
        return self._push(Op.SUB, a.value - b.value, (a, b))

    def mul(self, a: Node, b: Node) -> Node:
        self._own(a, b)
        _same_shape("mul", a, b)
        return self._push(Op.MUL, a.value * b.value, (a, b))

    def scale(self, a: Node, c: float) -> Node:
        self._own(a)
        return self._push(Op.SCALE, a.value * float(c), (a,), c=float(c))

    def add_bias(self, a: Node, bias: Node) -> Node:
        """Add a ``1 x c`` row to every row of ``a``."""
        self._own(a, bias)
        if bias.value.ndim != 2 or bias.shape[0] != 1 or bias.shape[1] != a.shape[-1]:
            raise DimensionError(f"add_bias: bias {bias.shape} does not fit rows of {a.shape}")
        return self._push(Op.ADD_BIAS, a.value + bias.value, (a, bias))

    def tanh(self, a: Node) -> Node:
        self._own(a)
        return self._push(Op.TANH, np.tanh(a.value), (a,))

    def sigmoid(self, a: Node) -> Node:
        self._own(a)
        x = a.value
        # split by sign so exp never overflows
        e = np.exp(-np.abs(x))
        value = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return self._push(Op.SIGMOID, value, (a,))

    def relu(self, a: Node) -> Node:
        self._own(a)
        return self._push(Op.RELU, np.maximum(a.value, 0.0), (a,))

    def dropout(self, a: Node, mask=None) -> Node:
        """Multiply by a caller-drawn mask; ``mask=None`` is the identity (eval mode)."""
        self._own(a)
        if mask is None:
            return a
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != a.shape:
            raise DimensionError(f"dropout: mask {mask.shape} vs input {a.shape}")
        return self._push(Op.DROPOUT, a.value * mask, (a,), mask=mask)

    def log(self, a: Node, floor: float = 1e-12) -> Node:
        """Natural log with the argument clamped below at ``floor``."""
        self._own(a)
        return self._push(Op.LOG, np.log(np.maximum(a.value, floor)), (a,), floor=floor)

    # -- reductions ---------------------------------------------------------

    def softmax_row(self, a: Node) -> Node:
        """Softmax along each row (last axis)."""
        self._own(a)
        if a.shape[-1] == 0:
            raise DimensionError("softmax_row of an empty row")
        shifted = a.value - a.value.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return self._push(Op.SOFTMAX_ROW, e / e.sum(axis=-1, keepdims=True), (a,))

    def mean_rows(self, a: Node) -> Node:
        self._own(a)
        if a.shape[-2] == 0:
            raise DimensionError("mean over zero rows")
        return self._push(Op.MEAN_ROWS, a.value.mean(axis=-2, keepdims=True), (a,))

    def max_rows(self, a: Node) -> Node:
        self._own(a)
        if a.shape[-2] == 0:
            raise DimensionError("max over zero rows")
        arg = a.value.argmax(axis=-2)[..., None, :]
        value = np.take_along_axis(a.value, arg, axis=-2)
        return self._push(Op.MAX_ROWS, value, (a,), argmax=arg)

    def sum(self, a: Node) -> Node:
        self._own(a)
        return self._push(Op.SUM, np.array([[a.value.sum()]]), (a,))

    # -- reverse pass -------------------------------------------------------

    def backward(self, loss: Node) -> dict[str, np.ndarray]:
        """Accumulate d(loss)/d(node) into ``node.grad`` for every node.

        Returns the gradients of named leaves. Nodes that do not influence
        ``loss`` end up with a zero gradient.
        """
        self._own(loss)
        if loss.shape != (1, 1):
            raise ContractError(f"backward needs a 1x1 loss, got shape {loss.shape}")
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[loss.index] = np.ones((1, 1))
        for node in reversed(self.nodes[: loss.index + 1]):
            g = grads[node.index]
            if g is None or node.op is Op.LEAF or not node.requires_grad:
                continue
            parent_grads = _ADJOINTS[node.op](node, g)
            factor = _CORRUPTED.get(node.op)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if factor is not None:
                    pg = pg * factor
                if grads[parent.index] is None:
                    grads[parent.index] = pg
                else:
                    grads[parent.index] = grads[parent.index] + pg
        for node, g in zip(self.nodes, grads):
            node.grad = np.zeros_like(node.value) if g is None else np.asarray(g).reshape(node.shape)
        return {n.name: n.grad for n in self.nodes if n.op is Op.LEAF and n.name is not None}

    def records(self) -> list[dict[str, Any]]:
        """Plain description of the tape, in recording order."""
        return [
            {
                "index": n.index,
                "op": n.op.value,
                "parents": [p.index for p in n.parents],
                "shape": list(n.shape),
                "name": n.name,
            }
            for n in self.nodes
        ]


# -- adjoint table ------------------------------------------------------------


def _adj_matmul(node, g):
    a, b = node.parents
    if a.value.ndim > 2 and b.value.ndim == 2:
        ga = (g.reshape(-1, g.shape[-1]) @ b.value.T).reshape(a.shape) if a.requires_grad else None
        gb = a.value.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1]) if b.requires_grad else None
        return ga, gb
    if a.value.ndim == 2 and b.value.ndim == 3:
        if a.requires_grad:
            gt, bt = np.swapaxes(g, -1, -2), np.swapaxes(b.value, -1, -2)
            ga = gt.reshape(-1, gt.shape[-1]).T @ bt.reshape(-1, bt.shape[-1])
        else:
            ga = None
        gb = _mm(a.value.T, g) if b.requires_grad else None
        return ga, gb
    ga = _unbroadcast(_mm(g, np.swapaxes(b.value, -1, -2)), a.shape) if a.requires_grad else None
    gb = _unbroadcast(_mm(np.swapaxes(a.value, -1, -2), g), b.shape) if b.requires_grad else None
    return ga, gb


def _adj_concat(node, g):
    ax = node.attrs["axis"]
    cuts = np.cumsum(node.attrs["sizes"])[:-1]
    return np.split(g, cuts, axis=ax)


def _adj_take(node, g):
    (a,) = node.parents
    out = np.zeros_like(a.value)
    np.add.at(out, node.attrs["indices"], g)
    return (out,)


def _adj_add_bias(node, g):
    a, bias = node.parents
    gb = g.reshape(-1, g.shape[-1]).sum(axis=0, keepdims=True)
    return g, gb


def _adj_softmax(node, g):
    y = node.value
    return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)


def _adj_max_rows(node, g):
    (a,) = node.parents
    out = np.zeros_like(a.value)
    np.put_along_axis(out, node.attrs["argmax"], g, axis=-2)
    return (out,)


def _adj_log(node, g):
    (a,) = node.parents
    x = a.value
    safe = np.where(x > node.attrs["floor"], x, 1.0)
    return (np.where(x > node.attrs["floor"], g / safe, 0.0),)


_ADJOINTS = {
    Op.MATMUL: _adj_matmul,
    Op.TRANSPOSE: lambda n, g: (np.swapaxes(g, -1, -2),),
    Op.CONCAT: _adj_concat,
    Op.TAKE: _adj_take,
    Op.ADD: lambda n, g: (g, g),
    Op.SUB: lambda n, g: (g, -g),
    Op.MUL: lambda n, g: (g * n.parents[1].value, g * n.parents[0].value),
    Op.SCALE: lambda n, g: (g * n.attrs["c"],),
    Op.ADD_BIAS: _adj_add_bias,
    Op.TANH: lambda n, g: (g * (1.0 - n.value**2),),
    Op.SIGMOID: lambda n, g: (g * n.value * (1.0 - n.value),),
    Op.RELU: lambda n, g: (g * (n.parents[0].value > 0),),
    Op.DROPOUT: lambda n, g: (g * n.attrs["mask"],),
    Op.SOFTMAX_ROW: _adj_softmax,
    Op.MEAN_ROWS: lambda n, g: (np.broadcast_to(g / n.parents[0].shape[-2], n.parents[0].shape),),
    Op.MAX_ROWS: _adj_max_rows,
    Op.SUM: lambda n, g: (np.full(n.parents[0].shape, g.item()),),
    Op.LOG: _adj_log,
    Op.SPMM: lambda n, g: (np.asarray(n.attrs["matrix"].T @ g),),
    Op.RESHAPE: lambda n, g: (g.reshape(n.parents[0].shape),),
}
