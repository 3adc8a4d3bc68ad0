"""Reverse-mode automatic differentiation over dense numpy arrays.

Every op returns a :class:`DiffValue` whose ``_backward`` closure pushes the
output gradient into its inputs. ``backward()`` on a scalar walks the graph in
reverse topological order, calling each closure exactly once. Gradients of
leaves accumulate until :func:`adam_step` (or ``zero_grad``) clears them.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from hsfuse.errors import ArgumentError, DimensionError
from hsfuse.types import DenseArray

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8
DEFAULT_LEAKY_SLOPE = 0.01

# op name -> factor applied to its backward rule; test-only
_GRAD_FAULTS: dict[str, float] = {}
# regime arrays of non-smooth ops, collected while a recorder is active
_branch_log: list[NDArray] | None = None


class DiffValue:
    """A node of the differentiation graph: value, gradient and producer."""

    __slots__ = ("value", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(
        self,
        value: object,
        requires_grad: bool = False,
        parents: tuple["DiffValue", ...] = (),
        op: str = "leaf",
    ) -> None:
        array = np.asarray(value)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        self.value: DenseArray = array
        self.grad: DenseArray = np.zeros_like(array)
        self.requires_grad = requires_grad
        self.op = op
        self._parents = parents
        self._backward: Callable[[NDArray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        return float(self.value.item())

    def zero_grad(self) -> None:
        self.grad.fill(0)

    def backward(self) -> int:
        """Backpropagate from this scalar; returns the number of nodes visited."""
        if self.value.size != 1:
            raise DimensionError(f"backward() needs a scalar, got shape {self.shape}")

        order = _topological_order(self)
        self.grad += 1
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)
        return len(order)

    def __repr__(self) -> str:
        return f"DiffValue(op={self.op!r}, shape={self.shape}, requires_grad={self.requires_grad})"


def leaf(values: object, dtype: np.dtype | type | None = None) -> DiffValue:
    return DiffValue(np.array(values, dtype=dtype), requires_grad=True)


def constant(values: object, dtype: np.dtype | type | None = None) -> DiffValue:
    return DiffValue(np.asarray(values, dtype=dtype), requires_grad=False)


def _topological_order(root: DiffValue) -> list[DiffValue]:
    order: list[DiffValue] = []
    visited: set[int] = set()
    stack: list[tuple[DiffValue, bool]] = [(root, False)]
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
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _result(
    value: NDArray,
    parents: tuple[DiffValue, ...],
    op: str,
    backward: Callable[[NDArray], None],
) -> DiffValue:
    requires_grad = any(p.requires_grad for p in parents)
    out = DiffValue(value, requires_grad=requires_grad, parents=parents if requires_grad else (), op=op)
    if not requires_grad:
        return out

    # rules take the gradient as an argument; no node is reachable from its own rule
    factor = _GRAD_FAULTS.get(op)
    if factor is None:
        out._backward = backward
    else:
        out._backward = lambda g: backward(g * factor)
    return out


def _record(regime: NDArray) -> None:
    if _branch_log is not None:
        _branch_log.append(regime)


@contextmanager
def record_branches() -> Iterator[list[NDArray]]:
    """Collect the branch regime of every non-smooth op evaluated inside the block."""
    global _branch_log
    previous = _branch_log
    _branch_log = []
    try:
        yield _branch_log
    finally:
        _branch_log = previous


@contextmanager
def inject_grad_fault(op: str, factor: float) -> Iterator[None]:
    """Scale the backward rule of ``op`` for graphs built inside the block."""
    previous = _GRAD_FAULTS.get(op)
    _GRAD_FAULTS[op] = factor
    try:
        yield
    finally:
        if previous is None:
            _GRAD_FAULTS.pop(op, None)
        else:
            _GRAD_FAULTS[op] = previous


def _check_same_shape(a: DiffValue, b: DiffValue, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes differ, {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# Dense layer ops
# ---------------------------------------------------------------------------


def fully_connected(x: DiffValue, W: DiffValue, b: DiffValue) -> DiffValue:
    """``W @ x + b`` for a vector ``x`` or a batch of column vectors."""
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.ndim not in (1, 2) or x.shape[0] != W.shape[1]:
        raise DimensionError(
            f"fully_connected: W {W.shape}, b {b.shape} and x {x.shape} do not conform"
        )
    batched = x.ndim == 2
    bias = b.value[:, None] if batched else b.value
    value = W.value @ x.value + bias

    def backward(g: NDArray) -> None:
        if W.requires_grad:
            W.grad += g @ x.value.T if batched else np.outer(g, x.value)
        if b.requires_grad:
            b.grad += g.sum(axis=1) if batched else g
        if x.requires_grad:
            x.grad += W.value.T @ g

    return _result(value, (x, W, b), "fully_connected", backward)


def matmul(M: DiffValue, X: DiffValue) -> DiffValue:
    """Matrix product ``M @ X`` with ``X`` a vector or a matrix."""
    if M.ndim != 2 or X.ndim not in (1, 2) or X.shape[0] != M.shape[1]:
        raise DimensionError(f"matmul: {M.shape} and {X.shape} do not conform")
    value = M.value @ X.value

    def backward(g: NDArray) -> None:
        if M.requires_grad:
            M.grad += g @ X.value.T if X.ndim == 2 else np.outer(g, X.value)
        if X.requires_grad:
            X.grad += M.value.T @ g

    return _result(value, (M, X), "matmul", backward)


def leaky_relu(x: DiffValue, slope: float = DEFAULT_LEAKY_SLOPE) -> DiffValue:
    if not 0 < slope < 1:
        raise ArgumentError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    positive = x.value > 0
    _record(positive)
    value = np.where(positive, x.value, slope * x.value)

    def backward(g: NDArray) -> None:
        x.grad += np.where(positive, g, slope * g)

    return _result(value, (x,), "leaky_relu", backward)


def clamp01(x: DiffValue) -> DiffValue:
    """Elementwise clip to [0, 1]; the gradient passes on the closed interval."""
    inside = (x.value >= 0) & (x.value <= 1)
    _record(np.where(x.value < 0, 0, np.where(x.value > 1, 2, 1)))
    value = np.clip(x.value, 0, 1)

    def backward(g: NDArray) -> None:
        x.grad += g * inside

    return _result(value, (x,), "clamp01", backward)


def concat(xs: Sequence[DiffValue]) -> DiffValue:
    """Stack inputs along the leading (feature) axis."""
    if not xs:
        raise ArgumentError("concat needs at least one input")
    if any(x.ndim != xs[0].ndim or x.shape[1:] != xs[0].shape[1:] for x in xs) or xs[0].ndim not in (1, 2):
        raise DimensionError(f"concat: incompatible shapes {[x.shape for x in xs]}")
    bounds = np.cumsum([0] + [x.shape[0] for x in xs])
    value = np.concatenate([x.value for x in xs], axis=0)

    def backward(g: NDArray) -> None:
        for x, start, stop in zip(xs, bounds[:-1], bounds[1:]):
            if x.requires_grad:
                x.grad += g[start:stop]

    return _result(value, tuple(xs), "concat", backward)


# ---------------------------------------------------------------------------
# Spatial ops on (bands, height, width) values
# ---------------------------------------------------------------------------


def _check_kernel(kernel_shape: tuple[int, ...], height: int, width: int) -> int:
    if len(kernel_shape) != 2 or kernel_shape[0] != kernel_shape[1]:
        raise DimensionError(f"kernel must be square, got shape {kernel_shape}")
    k = kernel_shape[0]
    if k % 2 == 0:
        raise ArgumentError(f"kernel size must be odd, got {k}")
    if k > min(height, width):
        raise DimensionError(f"kernel size {k} exceeds image size {height}x{width}")
    return k


def _fold_matrix(n: int, half: int, dtype: np.dtype) -> NDArray:
    """Adjoint of symmetric padding along one axis, as an (n, n + 2*half) 0/1 matrix."""
    source = np.pad(np.arange(n), half, mode="symmetric")
    fold = np.zeros((n, n + 2 * half), dtype=dtype)
    fold[source, np.arange(n + 2 * half)] = 1
    return fold


def correlate_symmetric(x: NDArray, kernel: NDArray) -> NDArray:
    """Correlate every band of ``x`` with ``kernel`` under edge-repeating mirror padding."""
    if x.ndim != 3:
        raise DimensionError(f"expected a (bands, height, width) array, got shape {x.shape}")
    _, height, width = x.shape
    k = _check_kernel(kernel.shape, height, width)
    half = k // 2
    padded = np.pad(x, ((0, 0), (half, half), (half, half)), mode="symmetric")
    out = np.zeros(x.shape, dtype=np.result_type(x, kernel))
    for u in range(k):
        for v in range(k):
            out += kernel[u, v] * padded[:, u:u + height, v:v + width]
    return out


def conv2d_perband(x: DiffValue, kernel: DiffValue) -> DiffValue:
    """Per-band correlation with one shared kernel; gradients for image and kernel."""
    value = correlate_symmetric(x.value, kernel.value)
    _, height, width = x.shape
    k = kernel.shape[0]
    half = k // 2

    def backward(g: NDArray) -> None:
        if kernel.requires_grad:
            padded = np.pad(x.value, ((0, 0), (half, half), (half, half)), mode="symmetric")
            for u in range(k):
                for v in range(k):
                    kernel.grad[u, v] += np.vdot(g, padded[:, u:u + height, v:v + width])
        if x.requires_grad:
            spread = np.zeros((g.shape[0], height + 2 * half, width + 2 * half), dtype=g.dtype)
            for u in range(k):
                for v in range(k):
                    spread[:, u:u + height, v:v + width] += kernel.value[u, v] * g
            rows = _fold_matrix(height, half, g.dtype)
            cols = _fold_matrix(width, half, g.dtype)
            x.grad += rows @ spread @ cols.T

    return _result(value, (x, kernel), "conv2d_perband", backward)


def subsample_array(x: NDArray, r: int, offset: int) -> NDArray:
    if r < 1 or not 0 <= offset < r:
        raise ArgumentError(f"subsample needs r >= 1 and 0 <= offset < r, got r={r}, offset={offset}")
    if x.ndim != 3 or x.shape[1] % r or x.shape[2] % r:
        raise DimensionError(f"image size {x.shape[1:]} is not divisible by ratio {r}")
    return np.ascontiguousarray(x[:, offset::r, offset::r])


def subsample(x: DiffValue, r: int, offset: int) -> DiffValue:
    value = subsample_array(x.value, r, offset)

    def backward(g: NDArray) -> None:
        x.grad[:, offset::r, offset::r] += g

    return _result(value, (x,), "subsample", backward)


def crop(x: DiffValue, margin: int) -> DiffValue:
    """Drop ``margin`` pixels from each spatial border of a (bands, height, width) value."""
    if margin < 0:
        raise ArgumentError(f"crop margin must be >= 0, got {margin}")
    if x.ndim != 3 or 2 * margin >= min(x.shape[1], x.shape[2]):
        raise DimensionError(f"cannot crop {margin} pixels from shape {x.shape}")
    window = (slice(None), slice(margin, x.shape[1] - margin), slice(margin, x.shape[2] - margin))
    value = x.value[window].copy()

    def backward(g: NDArray) -> None:
        x.grad[window] += g

    return _result(value, (x,), "crop", backward)


def reshape(x: DiffValue, shape: tuple[int, ...]) -> DiffValue:
    try:
        value = x.value.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"cannot reshape {x.shape} to {shape}") from e

    def backward(g: NDArray) -> None:
        x.grad += g.reshape(x.shape)

    return _result(value, (x,), "reshape", backward)


# ---------------------------------------------------------------------------
# Reductions and arithmetic
# ---------------------------------------------------------------------------


def l1_loss(a: DiffValue, b: DiffValue) -> DiffValue:
    """Sum of absolute differences; the subgradient at zero is zero."""
    _check_same_shape(a, b, "l1_loss")
    sign = np.sign(a.value - b.value)
    _record(sign)
    value = np.abs(a.value - b.value).sum()

    def backward(g: NDArray) -> None:
        if a.requires_grad:
            a.grad += g * sign
        if b.requires_grad:
            b.grad -= g * sign

    return _result(value, (a, b), "l1_loss", backward)


def add(a: DiffValue, b: DiffValue) -> DiffValue:
    _check_same_shape(a, b, "add")

    def backward(g: NDArray) -> None:
        if a.requires_grad:
            a.grad += g
        if b.requires_grad:
            b.grad += g

    return _result(a.value + b.value, (a, b), "add", backward)


def scale(x: DiffValue, factor: float) -> DiffValue:
    def backward(g: NDArray) -> None:
        x.grad += factor * g

    return _result(x.value * factor, (x,), "scale", backward)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON
    step_count: int = 0
    m: list[NDArray] = field(default_factory=list)
    v: list[NDArray] = field(default_factory=list)


def adam_step(params: Sequence[DiffValue], state: AdamState, learning_rate: float) -> None:
    """One bias-corrected Adam update in place; gradients are zeroed afterwards."""
    if not state.m:
        state.m = [np.zeros_like(p.value) for p in params]
        state.v = [np.zeros_like(p.value) for p in params]
    if len(state.m) != len(params):
        raise ArgumentError(f"Adam state tracks {len(state.m)} parameters, got {len(params)}")

    state.step_count += 1
    correction1 = 1 - state.beta1 ** state.step_count
    correction2 = 1 - state.beta2 ** state.step_count
    for param, m, v in zip(params, state.m, state.v):
        g = param.grad
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        param.value -= learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        param.zero_grad()
