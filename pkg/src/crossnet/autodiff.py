"""Dense float64 tensors with reverse-mode automatic differentiation.

Just enough of an engine for LSTMs, attention, and an MLP: every primitive
computes its value eagerly with numpy and registers a backward rule on an
op record. `backward(loss)` walks the records reachable from a scalar loss
in reverse topological order and accumulates gradients into the leaves.

Gradients of leaves accumulate across backward() calls until `zero_grad`;
gradients of interior nodes are scratch and are reset at the start of each
backward pass. Nodes never reachable from the loss keep zero gradients.

A graph lives on one thread. The only shared state is the thread-local
grad-mode flag used by `no_grad()`.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operands do not conform for a primitive; names the op and the shapes."""

    def __init__(self, op_name: str, *shapes, detail: str = ""):
        self.op_name = op_name
        self.shapes = tuple(shapes)
        msg = f"{op_name}: incompatible shapes {', '.join(str(s) for s in shapes)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NondeterministicFunctionError(RuntimeError):
    """Two evaluations of a supposedly deterministic function disagreed."""


_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording on this thread (e.g. for evaluation passes)."""
    prev = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


def _as_value(value) -> np.ndarray:
    # np.ascontiguousarray would promote 0-d scalars to shape (1,)
    return np.asarray(value, dtype=np.float64, order="C")


class OpRecord:
    """One executed primitive: its inputs, outputs, and backward rule."""

    __slots__ = ("name", "inputs", "outputs", "backward_fn")

    def __init__(self, name, inputs, outputs, backward_fn):
        self.name = name
        self.inputs = tuple(inputs)
        self.outputs = tuple(outputs)
        self.backward_fn = backward_fn


class TensorNode:
    """A tensor value plus a same-shaped gradient buffer in a graph."""

    __slots__ = ("value", "grad", "op", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = _as_value(value)
        self.grad = np.zeros_like(self.value)
        self.op: OpRecord | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError("item", self.shape, detail="not a scalar")
        return float(self.value)

    def __repr__(self) -> str:
        tag = self.name or (self.op.name if self.op else "leaf")
        return f"TensorNode({tag}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scalar_mul(other, -1.0))

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(value, name: str | None = None) -> TensorNode:
    return TensorNode(value, requires_grad=False, name=name)


def parameter(value, name: str | None = None) -> TensorNode:
    return TensorNode(value, requires_grad=True, name=name)


def record_op(
    name: str,
    inputs: Sequence[TensorNode],
    outputs: Sequence[TensorNode],
    backward_fn: Callable[[], None],
) -> None:
    """Attach a backward rule to freshly created output nodes.

    Skipped entirely when grad mode is off or no input needs gradients, in
    which case the outputs stay plain leaves.
    """
    if not grad_enabled():
        return
    if not any(i.requires_grad for i in inputs):
        return
    rec = OpRecord(name, inputs, outputs, backward_fn)
    for out in outputs:
        out.op = rec
        out.requires_grad = True


def _toposort(root: OpRecord) -> list[OpRecord]:
    order: list[OpRecord] = []
    seen: set[int] = set()
    # Iterative post-order: producers end up before consumers.
    stack: list[tuple[OpRecord, bool]] = [(root, False)]
    while stack:
        rec, expanded = stack.pop()
        if expanded:
            order.append(rec)
            continue
        if id(rec) in seen:
            continue
        seen.add(id(rec))
        stack.append((rec, True))
        for inp in rec.inputs:
            if inp.op is not None and id(inp.op) not in seen:
                stack.append((inp.op, False))
    return order


def backward(loss: TensorNode) -> None:
    """Accumulate d(loss)/d(leaf) into every requires-grad leaf.

    Interior gradients are zeroed first, so repeated calls without zeroing
    the leaves sum the leaf gradients of each call.
    """
    if loss.value.ndim != 0:
        raise ShapeError("backward", loss.shape, detail="loss must be a scalar")
    if loss.op is None:
        if loss.requires_grad:
            loss.grad[...] += 1.0
        return
    order = _toposort(loss.op)
    for rec in order:
        for out in rec.outputs:
            out.grad[...] = 0.0
    loss.grad[...] = 1.0
    for rec in reversed(order):
        rec.backward_fn()


# ---------------------------------------------------------------------------
# Primitives. Each validates shapes, computes the value, registers backward.
# ---------------------------------------------------------------------------


def add(a: TensorNode, b: TensorNode) -> TensorNode:
    """Elementwise add; also matrix + row vector and tensor + scalar."""
    av, bv = a.value, b.value
    if av.shape == bv.shape:
        mode = "same"
    elif av.ndim == 2 and bv.ndim == 1 and av.shape[1] == bv.shape[0]:
        mode = "rows"
    elif bv.ndim == 0:
        mode = "scalar"
    elif av.ndim == 0:
        return add(b, a)
    else:
        raise ShapeError("add", av.shape, bv.shape)
    out = TensorNode(av + bv)

    def bw():
        if a.requires_grad:
            a.grad += out.grad
        if b.requires_grad:
            if mode == "same":
                b.grad += out.grad
            elif mode == "rows":
                b.grad += out.grad.sum(axis=0)
            else:
                b.grad += out.grad.sum()

    record_op("add", (a, b), (out,), bw)
    return out


def mul(a: TensorNode, b: TensorNode) -> TensorNode:
    """Elementwise multiply; either side may be a scalar node."""
    av, bv = a.value, b.value
    if not (av.shape == bv.shape or av.ndim == 0 or bv.ndim == 0):
        raise ShapeError("mul", av.shape, bv.shape)
    out = TensorNode(av * bv)

    def bw():
        if a.requires_grad:
            g = out.grad * bv
            a.grad += g.sum() if av.ndim == 0 and g.ndim != 0 else g
        if b.requires_grad:
            g = out.grad * av
            b.grad += g.sum() if bv.ndim == 0 and g.ndim != 0 else g

    record_op("mul", (a, b), (out,), bw)
    return out


def scalar_mul(a: TensorNode, s: float) -> TensorNode:
    s = float(s)
    out = TensorNode(a.value * s)

    def bw():
        if a.requires_grad:
            a.grad += out.grad * s

    record_op("scalar_mul", (a,), (out,), bw)
    return out


def matmul(a: TensorNode, b: TensorNode) -> TensorNode:
    """matrix @ matrix, matrix @ vector, or vector . vector."""
    av, bv = a.value, b.value
    if av.ndim == 2 and bv.ndim == 2:
        if av.shape[1] != bv.shape[0]:
            raise ShapeError("matmul", av.shape, bv.shape)
        mode = "mm"
    elif av.ndim == 2 and bv.ndim == 1:
        if av.shape[1] != bv.shape[0]:
            raise ShapeError("matmul", av.shape, bv.shape)
        mode = "mv"
    elif av.ndim == 1 and bv.ndim == 1:
        if av.shape[0] != bv.shape[0]:
            raise ShapeError("matmul", av.shape, bv.shape)
        mode = "dot"
    else:
        raise ShapeError("matmul", av.shape, bv.shape, detail="unsupported ranks")
    out = TensorNode(av @ bv)

    def bw():
        g = out.grad
        if mode == "mm":
            if a.requires_grad:
                a.grad += g @ bv.T
            if b.requires_grad:
                b.grad += av.T @ g
        elif mode == "mv":
            if a.requires_grad:
                a.grad += np.outer(g, bv)
            if b.requires_grad:
                b.grad += av.T @ g
        else:
            if a.requires_grad:
                a.grad += g * bv
            if b.requires_grad:
                b.grad += g * av

    record_op("matmul", (a, b), (out,), bw)
    return out


def tanh(a: TensorNode) -> TensorNode:
    out = TensorNode(np.tanh(a.value))
    y = out.value

    def bw():
        if a.requires_grad:
            a.grad += out.grad * (1.0 - y * y)

    record_op("tanh", (a,), (out,), bw)
    return out


def sigmoid(a: TensorNode) -> TensorNode:
    out = TensorNode(1.0 / (1.0 + np.exp(-a.value)))
    y = out.value

    def bw():
        if a.requires_grad:
            a.grad += out.grad * y * (1.0 - y)

    record_op("sigmoid", (a,), (out,), bw)
    return out


def log(a: TensorNode, floor: float = 0.0) -> TensorNode:
    """Natural log; values below `floor` are clamped (zero gradient there)."""
    v = np.maximum(a.value, floor) if floor > 0.0 else a.value
    out = TensorNode(np.log(v))

    def bw():
        if a.requires_grad:
            g = out.grad / v
            if floor > 0.0:
                g = np.where(a.value > floor, g, 0.0)
            a.grad += g

    record_op("log", (a,), (out,), bw)
    return out


def softmax(a: TensorNode) -> TensorNode:
    """Softmax over a vector, computed with max subtraction."""
    if a.value.ndim != 1:
        raise ShapeError("softmax", a.shape, detail="expects a vector")
    shifted = a.value - a.value.max()
    e = np.exp(shifted)
    out = TensorNode(e / e.sum())
    y = out.value

    def bw():
        if a.requires_grad:
            g = out.grad
            a.grad += y * (g - np.dot(y, g))

    record_op("softmax", (a,), (out,), bw)
    return out


def concat(nodes: Iterable[TensorNode], axis: int = 0) -> TensorNode:
    nodes = list(nodes)
    if not nodes:
        raise ShapeError("concat", (), detail="no inputs")
    ndim = nodes[0].value.ndim
    for n in nodes[1:]:
        if n.value.ndim != ndim:
            raise ShapeError("concat", *(x.shape for x in nodes))
    try:
        out = TensorNode(np.concatenate([n.value for n in nodes], axis=axis))
    except ValueError as exc:
        raise ShapeError("concat", *(x.shape for x in nodes), detail=str(exc))
    sizes = [n.value.shape[axis] for n in nodes]
    offsets = np.cumsum([0] + sizes)

    def bw():
        for n, lo, hi in zip(nodes, offsets[:-1], offsets[1:]):
            if n.requires_grad:
                if axis == 0:
                    n.grad += out.grad[lo:hi]
                else:
                    n.grad += out.grad[:, lo:hi]

    record_op("concat", nodes, (out,), bw)
    return out


def gather_rows(a: TensorNode, indices) -> TensorNode:
    """Row lookup: (V, n) tensor and k indices -> (k, n)."""
    if a.value.ndim != 2:
        raise ShapeError("gather_rows", a.shape, detail="expects a matrix")
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError("gather_rows", idx.shape, detail="indices must be 1-d")
    out = TensorNode(a.value[idx])

    def bw():
        if a.requires_grad:
            np.add.at(a.grad, idx, out.grad)

    record_op("gather_rows", (a,), (out,), bw)
    return out


def transpose(a: TensorNode) -> TensorNode:
    if a.value.ndim != 2:
        raise ShapeError("transpose", a.shape, detail="expects a matrix")
    out = TensorNode(a.value.T)

    def bw():
        if a.requires_grad:
            a.grad += out.grad.T

    record_op("transpose", (a,), (out,), bw)
    return out


def reshape(a: TensorNode, shape) -> TensorNode:
    try:
        out = TensorNode(a.value.reshape(shape))
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(shape))

    def bw():
        if a.requires_grad:
            a.grad += out.grad.reshape(a.value.shape)

    record_op("reshape", (a,), (out,), bw)
    return out


def flip_rows(a: TensorNode) -> TensorNode:
    """Reverse the row order of a matrix (time reversal for sequences)."""
    if a.value.ndim != 2:
        raise ShapeError("flip_rows", a.shape, detail="expects a matrix")
    out = TensorNode(a.value[::-1])

    def bw():
        if a.requires_grad:
            a.grad += out.grad[::-1]

    record_op("flip_rows", (a,), (out,), bw)
    return out


def vsum(a: TensorNode) -> TensorNode:
    out = TensorNode(a.value.sum())

    def bw():
        if a.requires_grad:
            a.grad += out.grad

    record_op("sum", (a,), (out,), bw)
    return out


def vmean(a: TensorNode) -> TensorNode:
    n = a.value.size
    out = TensorNode(a.value.mean())

    def bw():
        if a.requires_grad:
            a.grad += out.grad / n

    record_op("mean", (a,), (out,), bw)
    return out


def add_n(nodes: Sequence[TensorNode]) -> TensorNode:
    """Sum of same-shaped nodes (one record instead of a chain of adds)."""
    nodes = list(nodes)
    if not nodes:
        raise ShapeError("add_n", (), detail="no inputs")
    shape = nodes[0].shape
    for n in nodes[1:]:
        if n.shape != shape:
            raise ShapeError("add_n", *(x.shape for x in nodes))
    total = nodes[0].value.copy()
    for n in nodes[1:]:
        total += n.value
    out = TensorNode(total)

    def bw():
        for n in nodes:
            if n.requires_grad:
                n.grad += out.grad

    record_op("add_n", nodes, (out,), bw)
    return out


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def gradient_check(
    f: Callable[[], TensorNode],
    params: Sequence[TensorNode],
    epsilon: float = 1e-5,
) -> float:
    """Max relative error between backprop and central finite differences.

    `f` must rebuild the scalar loss graph on every call and be deterministic
    (dropout off); determinism is verified by evaluating twice. The error for
    each parameter entry is |analytic - numeric| / max(1, |analytic| + |numeric|).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    with no_grad():
        v1 = f().item()
        v2 = f().item()
    if v1 != v2:
        raise NondeterministicFunctionError(
            f"two evaluations differ: {v1!r} vs {v2!r}"
        )

    for p in params:
        p.zero_grad()
    loss = f()
    backward(loss)
    analytic = [p.grad.copy() for p in params]

    max_rel = 0.0
    for p, grad in zip(params, analytic):
        flat_value = p.value.reshape(-1)
        flat_grad = grad.reshape(-1)
        for i in range(flat_value.size):
            orig = flat_value[i]
            flat_value[i] = orig + epsilon
            with no_grad():
                f_plus = f().item()
            flat_value[i] = orig - epsilon
            with no_grad():
                f_minus = f().item()
            flat_value[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            a = flat_grad[i]
            rel = abs(a - numeric) / max(1.0, abs(a) + abs(numeric))
            if rel > max_rel:
                max_rel = rel
    return max_rel
