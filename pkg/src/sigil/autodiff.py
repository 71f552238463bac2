"""Dense-matrix reverse-mode automatic differentiation.

Every value is a 64-bit float matrix. Operations applied to tensors that
belong to a tape record a backward rule on it; tensors without a tape act
as constants and record nothing. Sparse matrices (scipy CSR/CSC) appear
only as constant left operands of :func:`sparse_dense_matmul`.

One tape serves one training iteration and is not shared across threads.
All forward evaluations use a fixed reduction order, so replaying a tape
with identical inputs is bit-identical.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

__all__ = [
    "ShapeError",
    "Tensor",
    "Tape",
    "backward",
    "constant",
    "matmul",
    "sparse_dense_matmul",
    "add",
    "sub",
    "add_bias",
    "add_colvec",
    "transpose",
    "row_softmax",
    "relu",
    "sigmoid",
    "elementwise_mul",
    "scalar_mul",
    "scalar_add",
    "row_l2_norm",
    "frobenius_sq",
    "row_normalize",
    "sum_rows",
    "sum_all",
    "gather_rows",
    "exp",
    "log",
    "rsqrt",
    "scale_rows",
    "scale_cols",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    """A dense float64 matrix, optionally attached to a tape."""

    __slots__ = ("value", "tape")

    def __init__(self, value, tape: "Tape | None" = None):
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D matrices, got ndim={arr.ndim}")
        self.value = arr
        self.tape = tape

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() requires a 1x1 tensor, got {self.shape}")
        return float(self.value[0, 0])

    def __repr__(self) -> str:
        taped = "taped" if self.tape is not None else "const"
        return f"Tensor(shape={self.shape}, {taped})"


class _Record:
    __slots__ = ("output", "inputs", "vjp")

    def __init__(self, output: Tensor, inputs: tuple[Tensor, ...], vjp):
        self.output = output
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Ordered record of operations; inputs always precede outputs."""

    def __init__(self):
        self._entries: list[_Record] = []
        self._params: list[Tensor] = []

    def watch(self, tensor: Tensor) -> Tensor:
        """Mark a leaf tensor as a parameter whose gradient is wanted."""
        tensor.tape = self
        self._params.append(tensor)
        return tensor

    @property
    def parameters(self) -> list[Tensor]:
        return list(self._params)

    def __len__(self) -> int:
        return len(self._entries)


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Reverse sweep from a scalar loss.

    Returns a map from ``id(parameter)`` to its gradient for every watched
    parameter; parameters the loss does not reach get zero gradients.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"loss must be 1x1, got {loss.shape}")
    if loss.tape is not tape:
        raise ValueError("loss was not recorded on this tape")
    adjoint: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for rec in reversed(tape._entries):
        out_grad = adjoint.pop(id(rec.output), None)
        if out_grad is None:
            continue
        for t, g in zip(rec.inputs, rec.vjp(out_grad)):
            if g is None or t.tape is None:
                continue
            key = id(t)
            prev = adjoint.get(key)
            adjoint[key] = g if prev is None else prev + g
    return {
        id(p): adjoint.get(id(p), np.zeros(p.shape)) for p in tape._params
    }


def _emit(value: np.ndarray, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    tape = None
    for t in inputs:
        if t.tape is not None:
            if tape is None:
                tape = t.tape
            elif tape is not t.tape:
                raise ValueError("operands belong to different tapes")
    out = Tensor(value, tape)
    if tape is not None:
        tape._entries.append(_Record(out, inputs, vjp))
    return out


def constant(value) -> Tensor:
    """Wrap a value as a tape-less constant tensor."""
    return Tensor(value, None)


def _require(cond: bool, msg: str):
    if not cond:
        raise ShapeError(msg)


# ---------------------------------------------------------------------------
# primitive operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape[1] == b.shape[0], f"matmul {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return _emit(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def sparse_dense_matmul(a, x: Tensor) -> Tensor:
    """Sparse constant times dense tensor; no gradient flows into ``a``."""
    if not sp.issparse(a):
        raise TypeError("left operand must be a scipy sparse matrix")
    _require(a.shape[1] == x.shape[0], f"sparse matmul {a.shape} @ {x.shape}")
    at = a.T.tocsr()
    value = np.asarray(a @ x.value)
    return _emit(value, (x,), lambda g: (np.asarray(at @ g),))


def add(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape == b.shape, f"add {a.shape} + {b.shape}")
    return _emit(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape == b.shape, f"sub {a.shape} - {b.shape}")
    return _emit(a.value - b.value, (a, b), lambda g: (g, -g))


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a 1 x d row vector to every row of x."""
    _require(
        bias.shape == (1, x.shape[1]),
        f"bias {bias.shape} does not broadcast over rows of {x.shape}",
    )
    return _emit(
        x.value + bias.value,
        (x, bias),
        lambda g: (g, g.sum(axis=0, keepdims=True)),
    )


def add_colvec(x: Tensor, v: Tensor) -> Tensor:
    """Add an n x 1 column vector to every column of x."""
    _require(
        v.shape == (x.shape[0], 1),
        f"column vector {v.shape} does not broadcast over columns of {x.shape}",
    )
    return _emit(
        x.value + v.value,
        (x, v),
        lambda g: (g, g.sum(axis=1, keepdims=True)),
    )


def transpose(x: Tensor) -> Tensor:
    return _emit(x.value.T.copy(), (x,), lambda g: (g.T,))


def row_softmax(x: Tensor) -> Tensor:
    """Softmax over each row, computed with max subtraction."""
    shifted = x.value - x.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return ((g - dot) * y,)

    return _emit(y, (x,), vjp)


def relu(x: Tensor) -> Tensor:
    mask = x.value > 0
    return _emit(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    y = expit(x.value)
    return _emit(y, (x,), lambda g: (g * y * (1.0 - y),))


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape == b.shape, f"elementwise_mul {a.shape} * {b.shape}")
    av, bv = a.value, b.value
    return _emit(av * bv, (a, b), lambda g: (g * bv, g * av))


def scalar_mul(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit(x.value * c, (x,), lambda g: (g * c,))


def scalar_add(x: Tensor, c: float) -> Tensor:
    return _emit(x.value + float(c), (x,), lambda g: (g,))


def row_l2_norm(x: Tensor) -> Tensor:
    """Euclidean norm of each row as an n x 1 tensor.

    Rows that are exactly zero get a zero (sub)gradient.
    """
    norms = np.sqrt((x.value**2).sum(axis=1, keepdims=True))
    safe = np.where(norms > 0, norms, 1.0)
    unit = x.value / safe

    def vjp(g):
        return (g * unit,)

    return _emit(norms, (x,), vjp)


def frobenius_sq(x: Tensor) -> Tensor:
    xv = x.value
    value = np.array([[np.dot(xv.ravel(), xv.ravel())]])
    return _emit(value, (x,), lambda g: (2.0 * g[0, 0] * xv,))


def row_normalize(x: Tensor) -> Tensor:
    """Scale each row to unit Euclidean norm; zero rows stay zero."""
    norms = np.sqrt((x.value**2).sum(axis=1, keepdims=True))
    safe = np.where(norms > 0, norms, 1.0)
    y = x.value / safe

    def vjp(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return ((g - y * dot) / safe,)

    return _emit(y, (x,), vjp)


def sum_rows(x: Tensor) -> Tensor:
    """Sum of each row as an n x 1 tensor."""
    cols = x.shape[1]
    return _emit(
        x.value.sum(axis=1, keepdims=True),
        (x,),
        lambda g: (np.repeat(g, cols, axis=1),),
    )


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return _emit(
        np.array([[x.value.sum()]]),
        (x,),
        lambda g: (np.full(shape, g[0, 0]),),
    )


def gather_rows(x: Tensor, indices: Sequence[int] | np.ndarray) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError("gather_rows expects a 1-D index array")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise IndexError("gather_rows index out of range")
    shape = x.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _emit(x.value[idx], (x,), vjp)


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.value)
    return _emit(y, (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    xv = x.value
    return _emit(np.log(xv), (x,), lambda g: (g / xv,))


def rsqrt(x: Tensor) -> Tensor:
    """Elementwise x**-1/2; inputs must be strictly positive."""
    y = 1.0 / np.sqrt(x.value)
    return _emit(y, (x,), lambda g: (-0.5 * g * y**3,))


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """Multiply row i of x by s[i]; s is n x 1."""
    _require(s.shape == (x.shape[0], 1), f"scale_rows {x.shape} by {s.shape}")
    xv, sv = x.value, s.value
    return _emit(
        xv * sv,
        (x, s),
        lambda g: (g * sv, (g * xv).sum(axis=1, keepdims=True)),
    )


def scale_cols(x: Tensor, s: Tensor) -> Tensor:
    """Multiply column j of x by s[j]; s is 1 x m."""
    _require(s.shape == (1, x.shape[1]), f"scale_cols {x.shape} by {s.shape}")
    xv, sv = x.value, s.value
    return _emit(
        xv * sv,
        (x, s),
        lambda g: (g * sv, (g * xv).sum(axis=0, keepdims=True)),
    )
