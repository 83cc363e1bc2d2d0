"""Minimal dense float64 tensors: the carrier for parameters, gradients and
optimizer state. Shapes are metadata over a flat row-major buffer; every
operation is elementwise, returns a new value, and matches a scalar loop
bit for bit."""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class NonFiniteError(ValueError):
    """A tensor contains NaN or Inf where finite values are required."""


class Tensor:
    """Immutable dense array: a read-only float64 buffer plus a shape tuple.

    The public constructor copies its input, so callers keep ownership of
    whatever they passed in. Internal code adopts freshly computed buffers
    via ``_adopt`` to avoid redundant copies.
    """

    __slots__ = ("shape", "data")

    def __init__(self, values, shape: Sequence[int] | None = None):
        arr = np.array(values, dtype=np.float64, order="C")
        if shape is None:
            shape = arr.shape
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape) and arr.size > 0:
            raise ShapeError(f"shape entries must be positive, got {shape}")
        if math.prod(shape) != arr.size:
            raise ShapeError(f"shape {shape} does not match {arr.size} elements")
        flat = arr.reshape(-1)
        flat.flags.writeable = False
        self.data = flat
        self.shape = shape

    @classmethod
    def _adopt(cls, arr: np.ndarray, shape: tuple[int, ...]) -> "Tensor":
        # arr must be a fresh float64 buffer owned by the caller
        t = object.__new__(cls)
        flat = arr.reshape(-1)
        flat.flags.writeable = False
        t.data = flat
        t.shape = shape
        return t

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> "Tensor":
        shape = tuple(int(s) for s in shape)
        return cls._adopt(np.zeros(math.prod(shape)), shape)

    @classmethod
    def full(cls, shape: Sequence[int], value: float) -> "Tensor":
        shape = tuple(int(s) for s in shape)
        return cls._adopt(np.full(math.prod(shape), float(value)), shape)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Tensor":
        return cls(arr)

    @property
    def size(self) -> int:
        return self.data.size

    def as_array(self) -> np.ndarray:
        """Read-only n-d view of the buffer."""
        return self.data.reshape(self.shape)

    def tolist(self):
        return self.as_array().tolist()

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def norm(self) -> float:
        return math.sqrt(float(np.dot(self.data, self.data)))

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, data={self.data!r})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Tensor)
            and self.shape == other.shape
            and np.array_equal(self.data, other.data)
        )

    def __hash__(self):
        return hash((self.shape, self.data.tobytes()))

    # arithmetic sugar over the elementwise kernels
    def __add__(self, other):
        return elementwise("add", self, other)

    def __radd__(self, other):
        return elementwise("add", self, other)

    def __sub__(self, other):
        return elementwise("sub", self, other)

    def __mul__(self, other):
        return elementwise("mul", self, other)

    def __rmul__(self, other):
        return elementwise("mul", self, other)

    def __truediv__(self, other):
        return elementwise("div", self, other)

    def __neg__(self):
        return elementwise("mul", self, -1.0)


_BINARY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
}
_UNARY = {
    "square": np.square,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sign": np.sign,  # sign(0) = 0
}

OP_CODES = tuple(_BINARY) + tuple(_UNARY) + ("axpy",)


def _coerce_operand(a: Tensor, b) -> np.ndarray | float:
    if isinstance(b, Tensor):
        if b.shape != a.shape:
            raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
        return b.data
    return float(b)


def elementwise(op_code: str, a: Tensor, b=None, *, alpha: float | None = None) -> Tensor:
    """Pointwise kernel dispatch.

    Binary ops take ``b`` as a Tensor of identical shape or a scalar; unary
    ops take none. ``axpy`` computes ``alpha * a + b``. Division by zero
    propagates Inf (callers guard with their own epsilon).
    """
    if op_code in _UNARY:
        if b is not None:
            raise ValueError(f"{op_code} takes a single operand")
        return Tensor._adopt(_UNARY[op_code](a.data), a.shape)
    if op_code in _BINARY:
        if b is None:
            raise ValueError(f"{op_code} needs a second operand")
        other = _coerce_operand(a, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = _BINARY[op_code](a.data, other)
        return Tensor._adopt(out, a.shape)
    if op_code == "axpy":
        if alpha is None or b is None:
            raise ValueError("axpy needs alpha and a second operand")
        other = _coerce_operand(a, b)
        return Tensor._adopt(float(alpha) * a.data + other, a.shape)
    raise ValueError(f"unknown op_code {op_code!r}")


def axpy(alpha: float, x: Tensor, y: Tensor) -> Tensor:
    """alpha * x + y, the moving-average building block."""
    return elementwise("axpy", x, y, alpha=alpha)


def square(t: Tensor) -> Tensor:
    return elementwise("square", t)


def sqrt(t: Tensor) -> Tensor:
    return elementwise("sqrt", t)


def sign(t: Tensor) -> Tensor:
    return elementwise("sign", t)


def global_norm(tensors: Iterable[Tensor]) -> float:
    """sqrt of the sum of squares over every element of every tensor."""
    tensors = list(tensors)
    if not tensors:
        raise ValueError("global_norm of an empty list")
    total = 0.0
    for t in tensors:
        total += float(np.dot(t.data, t.data))
    return math.sqrt(total)


def clip_by_global_norm(
    tensors: Sequence[Tensor], threshold: float
) -> tuple[list[Tensor], float]:
    """Rescale the whole list so its global norm is at most ``threshold``.

    Returns the (possibly shared) tensors and the applied scale: 1.0 when no
    clipping happened, threshold / norm otherwise.
    """
    if threshold <= 0:
        raise ValueError(f"clip threshold must be positive, got {threshold}")
    norm = global_norm(tensors)
    if norm <= threshold:
        return list(tensors), 1.0
    scale = threshold / norm
    return [t * scale for t in tensors], scale


def assert_finite(tensors: Iterable[Tensor], context: str = "") -> None:
    for i, t in enumerate(tensors):
        if not t.is_finite():
            bad = int(np.argmax(~np.isfinite(t.data)))
            raise NonFiniteError(
                f"non-finite value at tensor {i}, element {bad}"
                + (f" ({context})" if context else "")
            )


def cosine_similarity_flagged(a: Tensor, b: Tensor) -> tuple[float, bool]:
    """Cosine of the angle between two same-shape tensors.

    Returns (value, degenerate). Degenerate means at least one operand has
    zero norm; the value is then defined as 0. Bitwise-identical non-zero
    operands yield exactly 1.0.
    """
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = a.norm()
    nb = b.norm()
    if na == 0.0 or nb == 0.0:
        return 0.0, True
    if np.array_equal(a.data, b.data):
        return 1.0, False
    value = float(np.dot(a.data, b.data)) / (na * nb)
    return max(-1.0, min(1.0, value)), False


def cosine_similarity(a: Tensor, b: Tensor) -> float:
    return cosine_similarity_flagged(a, b)[0]
