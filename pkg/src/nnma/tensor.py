"""Dense 2-D tensors with reverse-mode automatic differentiation.

Every value is a double-precision matrix; vectors are single-column
matrices, so the whole model reduces to matrix products, concatenation
and elementwise maps. Each operation records its inputs and a
vector-Jacobian product, and ``backward()`` on a 1x1 result walks the
recorded graph once in reverse topological order, accumulating exact
partial derivatives into ``.grad`` of every tensor that requires them.

``grad_check`` compares those partials against central finite
differences and is the verification oracle for everything built on top.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible with an operation."""


class Tensor:
    """A 2-D float64 array plus the bookkeeping needed for backward.

    Attributes:
        data: the (rows, cols) float64 array. 1-D input is treated as a
            column vector, scalars as 1x1.
        requires_grad: whether backward should deliver a gradient here.
        grad: accumulated partial derivatives, same shape as ``data``;
            ``None`` until a backward pass reaches this tensor. Repeated
            backward calls keep adding; call ``zero_grad`` between steps.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D at most, got ndim={arr.ndim}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]] | None = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def zeros(rows: int, cols: int, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.zeros((rows, cols)), requires_grad=requires_grad)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """Value snapshot outside the graph (no grad, no parents)."""
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar --------------------------------------------------------

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return hadamard(self, other)

    # -- backward --------------------------------------------------------------

    def backward(self) -> None:
        """Reverse sweep from this scalar.

        Gradients are *added* into ``.grad`` (shared parameters may be
        reached along several paths, and a second backward call without
        ``zero_grad`` doubles them, by contract). Each recorded operation
        is visited exactly once, in reverse topological order; the order
        is a pure function of graph construction, so repeated runs are
        bitwise identical.
        """
        if self.data.shape != (1, 1):
            raise ShapeError(f"backward() starts from a 1x1 scalar, got {self.data.shape}")
        tape = topo_order(self)
        adjoint: dict[int, np.ndarray] = {id(self): np.ones((1, 1))}
        for node in reversed(tape):
            g = adjoint.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                if node.grad is None:
                    node.grad = g.copy()
                else:
                    node.grad += g
            if node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                prev = adjoint.get(key)
                adjoint[key] = pg if prev is None else prev + pg


def topo_order(root: Tensor) -> list[Tensor]:
    """Tape for the reverse sweep: every tensor reachable from ``root``
    through grad-requiring edges, with inputs preceding the operations
    that consume them. Iterative so sequence length never hits the
    recursion limit."""
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
        if node._vjp is not None:
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
    return order


def _make(data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


# -- primitive operations -----------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def vjp(g: np.ndarray):
        return g @ b.data.T, a.data.T @ g

    return _make(out, (a, b), vjp)


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Stack parts vertically; column vectors concatenate into one."""
    if len(parts) == 0:
        raise ShapeError("concat of an empty list")
    cols = parts[0].cols
    for p in parts[1:]:
        if p.cols != cols:
            raise ShapeError(f"concat column mismatch: {p.cols} vs {cols}")
    out = np.concatenate([p.data for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.rows for p in parts])

    def vjp(g: np.ndarray):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _make(out, tuple(parts), vjp)


def hstack(parts: Sequence[Tensor]) -> Tensor:
    """Stack parts horizontally (used to assemble per-word columns)."""
    if len(parts) == 0:
        raise ShapeError("hstack of an empty list")
    rows = parts[0].rows
    for p in parts[1:]:
        if p.rows != rows:
            raise ShapeError(f"hstack row mismatch: {p.rows} vs {rows}")
    out = np.concatenate([p.data for p in parts], axis=1)
    offsets = np.cumsum([0] + [p.cols for p in parts])

    def vjp(g: np.ndarray):
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _make(out, tuple(parts), vjp)


def sigmoid(x: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-x.data))

    def vjp(g: np.ndarray):
        return (g * out * (1.0 - out),)

    return _make(out, (x,), vjp)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def vjp(g: np.ndarray):
        return (g * (1.0 - out * out),)

    return _make(out, (x,), vjp)


_UNARY = {"sigmoid": sigmoid, "tanh": tanh}


def map_unary(x: Tensor, fn: str) -> Tensor:
    """Elementwise nonlinearity by name ('sigmoid' or 'tanh')."""
    try:
        return _UNARY[fn](x)
    except KeyError:
        raise ValueError(f"unknown unary fn {fn!r}") from None


def _require_same_shape(x: Tensor, y: Tensor, op: str) -> None:
    if x.shape != y.shape:
        raise ShapeError(f"{op} shape mismatch: {x.shape} vs {y.shape}")


def add(x: Tensor, y: Tensor) -> Tensor:
    _require_same_shape(x, y, "add")

    def vjp(g: np.ndarray):
        return g, g

    return _make(x.data + y.data, (x, y), vjp)


def sub(x: Tensor, y: Tensor) -> Tensor:
    _require_same_shape(x, y, "sub")

    def vjp(g: np.ndarray):
        return g, -g

    return _make(x.data - y.data, (x, y), vjp)


def hadamard(x: Tensor, y: Tensor) -> Tensor:
    _require_same_shape(x, y, "hadamard")

    def vjp(g: np.ndarray):
        return g * y.data, g * x.data

    return _make(x.data * y.data, (x, y), vjp)


_ZIP = {"add": add, "sub": sub, "hadamard": hadamard}


def zip_binary(x: Tensor, y: Tensor, fn: str) -> Tensor:
    """Elementwise binary op by name ('add', 'sub' or 'hadamard')."""
    try:
        return _ZIP[fn](x, y)
    except KeyError:
        raise ValueError(f"unknown binary fn {fn!r}") from None


def softmax(x: Tensor) -> Tensor:
    """Column-vector softmax, stabilized by subtracting the maximum."""
    if x.cols != 1:
        raise ShapeError(f"softmax expects a column vector, got {x.shape}")
    shifted = x.data - x.data.max()
    e = np.exp(shifted)
    out = e / e.sum()

    def vjp(g: np.ndarray):
        return (out * (g - float(np.vdot(g, out))),)

    return _make(out, (x,), vjp)


def mean_cols(m: Tensor) -> Tensor:
    """Arithmetic mean across columns.

    Computed as ``m @ (1/c, ..., 1/c)^T`` so that a uniform attention
    read-out over the same matrix reproduces it bitwise.
    """
    c = m.cols
    if c == 0:
        raise ShapeError("mean_cols over zero columns")
    weights = np.full((c, 1), 1.0 / c)
    out = m.data @ weights

    def vjp(g: np.ndarray):
        return (np.repeat(g * (1.0 / c), c, axis=1),)

    return _make(out, (m,), vjp)


def broadcast_repeat(v: Tensor, count: int) -> Tensor:
    """Repeat a column vector ``count`` times into a matrix; backward
    sums the incoming gradient across columns."""
    if v.cols != 1:
        raise ShapeError(f"broadcast_repeat expects a column vector, got {v.shape}")
    if count < 1:
        raise ShapeError(f"broadcast_repeat needs count >= 1, got {count}")
    out = np.repeat(v.data, count, axis=1)

    def vjp(g: np.ndarray):
        return (g.sum(axis=1, keepdims=True),)

    return _make(out, (v,), vjp)


def transpose(x: Tensor) -> Tensor:
    out = np.ascontiguousarray(x.data.T)

    def vjp(g: np.ndarray):
        return (np.ascontiguousarray(g.T),)

    return _make(out, (x,), vjp)


def sum_all(x: Tensor) -> Tensor:
    """Sum of every entry, as a 1x1 scalar."""
    out = np.array([[x.data.sum()]])

    def vjp(g: np.ndarray):
        return (np.full(x.shape, g[0, 0]),)

    return _make(out, (x,), vjp)


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a plain float constant."""
    factor = float(factor)

    def vjp(g: np.ndarray):
        return (g * factor,)

    return _make(x.data * factor, (x,), vjp)


def select_columns(m: Tensor, indices: Sequence[int]) -> Tensor:
    """Gather columns by index; backward scatter-adds into the source,
    so a column selected twice accumulates both contributions."""
    idx = list(indices)
    if len(idx) == 0:
        raise ShapeError("select_columns with no indices")
    for i in idx:
        if not 0 <= i < m.cols:
            raise ShapeError(f"column index {i} out of range for {m.shape}")
    out = m.data[:, idx]

    def vjp(g: np.ndarray):
        grad = np.zeros_like(m.data)
        np.add.at(grad, (slice(None), idx), g)
        return (grad,)

    return _make(out, (m,), vjp)


def nll_from_logits(logits: Tensor, target: int) -> Tensor:
    """Negative log of softmax(logits)[target], computed as
    ``logsumexp(logits) - logits[target]`` for stability."""
    if logits.cols != 1:
        raise ShapeError(f"nll_from_logits expects a column vector, got {logits.shape}")
    if not 0 <= target < logits.rows:
        raise IndexError(f"target {target} out of range for {logits.rows} classes")
    z = logits.data
    m = z.max()
    e = np.exp(z - m)
    total = e.sum()
    out = np.array([[m + np.log(total) - z[target, 0]]])

    def vjp(g: np.ndarray):
        p = e / total
        p[target, 0] -= 1.0
        return (g[0, 0] * p,)

    return _make(out, (logits,), vjp)


# -- gradient checking ---------------------------------------------------------


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-4) -> float:
    """Worst disagreement between analytic and numerical gradients.

    ``f`` rebuilds the scalar loss from the current parameter values and
    must be deterministic (disable dropout while checking). For every
    entry of every parameter the analytic partial is compared against
    the central difference ``(f(t+h) - f(t-h)) / 2h``; the per-entry
    error is ``|a - n| / max(1, |a|, |n|)`` (relative above 1, absolute
    below), and the maximum over all entries is returned.
    """
    for p in params:
        p.zero_grad()
    loss = f()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("grad_check: loss is not finite")
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        aflat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = f().item()
            flat[i] = orig - step
            f_minus = f().item()
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise FloatingPointError("grad_check: perturbed loss is not finite")
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = abs(aflat[i] - numeric) / max(1.0, abs(aflat[i]), abs(numeric))
            if err > worst:
                worst = err
    return float(worst)
