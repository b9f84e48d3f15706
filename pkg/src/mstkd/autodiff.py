"""Reverse-mode automatic differentiation over dense float64 arrays.

A `Tape` records every operation in creation order, which is already a
topological order of the computation graph. `backward` walks the node list
once in reverse, accumulating gradients into every tensor that requires
them. Only the operations needed by this pipeline's models and losses are
provided; there is no broadcasting framework beyond row-bias addition.

All randomness (dropout) is drawn from a caller-supplied
`numpy.random.Generator`, so replaying a graph with the same seed is
bit-identical.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from .errors import ContractError, DegenerateEmbeddingError, DimensionError

EPS_NORM = 1e-12     # row norms at or below this are degenerate
EPS_COS = 1e-7       # cosine clamp margin before arccos
PI = math.pi


class Node:
    """One recorded operation: kind, input node ids, backward closure."""

    __slots__ = ("kind", "input_ids", "backward")

    def __init__(self, kind: str, input_ids: tuple[int, ...],
                 backward: Optional[Callable[[np.ndarray], None]]):
        self.kind = kind
        self.input_ids = input_ids
        self.backward = backward


class DiffTensor:
    """Dense float64 array participating in a tape's gradient computation."""

    __slots__ = ("tape", "node_id", "values", "grad", "requires_grad")

    def __init__(self, tape: "Tape", node_id: int, values: np.ndarray,
                 requires_grad: bool):
        self.tape = tape
        self.node_id = node_id
        self.values = values
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def __repr__(self) -> str:
        return f"DiffTensor(shape={self.values.shape}, node={self.node_id})"


class Tape:
    """Ordered record of operations; nodes are appended after their inputs."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.tensors: list[DiffTensor] = []

    def _emit(self, kind: str, values: np.ndarray,
              inputs: tuple[DiffTensor, ...],
              backward: Optional[Callable[[np.ndarray], None]],
              requires_grad: Optional[bool] = None) -> DiffTensor:
        if requires_grad is None:
            requires_grad = any(t.requires_grad for t in inputs)
        node_id = len(self.nodes)
        out = DiffTensor(self, node_id, values, requires_grad)
        self.nodes.append(Node(kind, tuple(t.node_id for t in inputs),
                               backward if requires_grad else None))
        self.tensors.append(out)
        return out

    def param(self, values: np.ndarray) -> DiffTensor:
        """Leaf tensor that will receive gradients (shares the caller's array)."""
        arr = np.asarray(values, dtype=np.float64)
        return self._emit("param", arr, (), None, requires_grad=True)

    def constant(self, values) -> DiffTensor:
        """Leaf tensor excluded from gradient computation."""
        arr = np.asarray(values, dtype=np.float64)
        return self._emit("const", arr, (), None, requires_grad=False)

    def backward(self, loss: DiffTensor) -> None:
        """Populate `.grad` for every tensor reachable from `loss`.

        `loss` must be a scalar recorded on this tape; its own gradient is
        seeded with 1. Each node is visited exactly once, in reverse order.
        """
        if loss.tape is not self:
            raise ContractError("loss was recorded on a different tape")
        if loss.values.shape != ():
            raise ContractError(
                f"backward requires a scalar loss, got shape {loss.values.shape}")
        _accumulate(loss, np.ones((), dtype=np.float64))
        for node_id in range(loss.node_id, -1, -1):
            node = self.nodes[node_id]
            out = self.tensors[node_id]
            if node.backward is not None and out.grad is not None:
                node.backward(out.grad)


def backward(tape: Tape, loss: DiffTensor) -> None:
    tape.backward(loss)


def _accumulate(t: DiffTensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.values)
    t.grad += g


def _same_tape(*tensors: DiffTensor) -> Tape:
    tape = tensors[0].tape
    for t in tensors[1:]:
        if t.tape is not tape:
            raise ContractError("operands recorded on different tapes")
    return tape


def matmul(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    """Matrix product of two 2-D tensors."""
    tape = _same_tape(a, b)
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise DimensionError("matmul expects 2-D operands")
    if a.values.shape[1] != b.values.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions differ: {a.values.shape} x {b.values.shape}")
    out_values = a.values @ b.values

    def bwd(g: np.ndarray) -> None:
        _accumulate(a, g @ b.values.T)
        _accumulate(b, a.values.T @ g)

    return tape._emit("matmul", out_values, (a, b), bwd)


def transpose(a: DiffTensor) -> DiffTensor:
    if a.values.ndim != 2:
        raise DimensionError("transpose expects a 2-D tensor")

    def bwd(g: np.ndarray) -> None:
        _accumulate(a, g.T)

    return a.tape._emit("transpose", a.values.T.copy(), (a,), bwd)


def add(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    """Elementwise addition; also accepts a 1-D bias added to each matrix row."""
    tape = _same_tape(a, b)
    bias = a.values.ndim == 2 and b.values.ndim == 1
    if bias:
        if a.values.shape[1] != b.values.shape[0]:
            raise DimensionError(
                f"bias length {b.values.shape[0]} != row width {a.values.shape[1]}")
    elif a.values.shape != b.values.shape:
        raise DimensionError(f"add shapes differ: {a.values.shape} vs {b.values.shape}")
    out_values = a.values + b.values

    def bwd(g: np.ndarray) -> None:
        _accumulate(a, g)
        _accumulate(b, g.sum(axis=0) if bias else g)

    return tape._emit("add", out_values, (a, b), bwd)


def sub(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    tape = _same_tape(a, b)
    if a.values.shape != b.values.shape:
        raise DimensionError(f"sub shapes differ: {a.values.shape} vs {b.values.shape}")

    def bwd(g: np.ndarray) -> None:
        _accumulate(a, g)
        _accumulate(b, -g)

    return tape._emit("sub", a.values - b.values, (a, b), bwd)


def mul(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    """Elementwise (Hadamard) product of same-shape tensors."""
    tape = _same_tape(a, b)
    if a.values.shape != b.values.shape:
        raise DimensionError(f"mul shapes differ: {a.values.shape} vs {b.values.shape}")

    def bwd(g: np.ndarray) -> None:
        _accumulate(a, g * b.values)
        _accumulate(b, g * a.values)

    return tape._emit("mul", a.values * b.values, (a, b), bwd)


def scale(a: DiffTensor, c: float) -> DiffTensor:
    """Multiply by a python scalar constant."""
    c = float(c)

    def bwd(g: np.ndarray) -> None:
        _accumulate(a, g * c)

    return a.tape._emit("scale", a.values * c, (a,), bwd)


def leaky_relu(a: DiffTensor, slope: float) -> DiffTensor:
    """max(x, slope*x); the subgradient at 0 takes the positive branch."""
    if not 0.0 <= slope < 1.0:
        raise ContractError(f"leaky_relu slope must be in [0, 1), got {slope}")
    factor = np.where(a.values >= 0.0, 1.0, slope)
    out_values = a.values * factor

    def bwd(g: np.ndarray) -> None:
        _accumulate(a, g * factor)

    return a.tape._emit("leaky_relu", out_values, (a,), bwd)


def dropout(a: DiffTensor, p: float, mode: str,
            rng: Optional[np.random.Generator] = None) -> DiffTensor:
    """Inverted dropout: survivors scaled by 1/(1-p) in train mode, identity in eval."""
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout probability must be in [0, 1), got {p}")
    if mode not in ("train", "eval"):
        raise ContractError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or p == 0.0:
        def bwd_id(g: np.ndarray) -> None:
            _accumulate(a, g)
        return a.tape._emit("dropout", a.values.copy(), (a,), bwd_id)
    if rng is None:
        raise ContractError("train-mode dropout with p > 0 requires an rng")
    keep = (rng.random(a.values.shape) >= p) / (1.0 - p)

    def bwd(g: np.ndarray) -> None:
        _accumulate(a, g * keep)

    return a.tape._emit("dropout", a.values * keep, (a,), bwd)


def l2_normalize(a: DiffTensor) -> DiffTensor:
    """Scale each row of a 2-D tensor to unit L2 norm."""
    if a.values.ndim != 2:
        raise DimensionError("l2_normalize expects a 2-D tensor")
    norms = np.linalg.norm(a.values, axis=1, keepdims=True)
    if np.any(norms <= EPS_NORM):
        raise DegenerateEmbeddingError(
            f"row norm at or below {EPS_NORM}; cannot normalize")
    out_values = a.values / norms

    def bwd(g: np.ndarray) -> None:
        # d(x/r)/dx applied to g: (g - y * <g, y>_row) / r
        inner = np.sum(g * out_values, axis=1, keepdims=True)
        _accumulate(a, (g - out_values * inner) / norms)

    return a.tape._emit("l2_normalize", out_values, (a,), bwd)


def clamp(a: DiffTensor, lo: float, hi: float) -> DiffTensor:
    """Clip values to [lo, hi]; gradient is zero outside the open interval."""
    out_values = np.clip(a.values, lo, hi)
    inside = (a.values > lo) & (a.values < hi)

    def bwd(g: np.ndarray) -> None:
        _accumulate(a, g * inside)

    return a.tape._emit("clamp", out_values, (a,), bwd)


def arccos(a: DiffTensor) -> DiffTensor:
    """Elementwise arccos; inputs must lie in [-1, 1] (clamp first)."""
    if np.any(np.abs(a.values) > 1.0):
        raise ContractError("arccos input outside [-1, 1]")
    out_values = np.arccos(a.values)

    def bwd(g: np.ndarray) -> None:
        _accumulate(a, -g / np.sqrt(1.0 - a.values * a.values))

    return a.tape._emit("arccos", out_values, (a,), bwd)


def cos(a: DiffTensor) -> DiffTensor:
    def bwd(g: np.ndarray) -> None:
        _accumulate(a, -g * np.sin(a.values))

    return a.tape._emit("cos", np.cos(a.values), (a,), bwd)


def logsumexp_rows(a: DiffTensor) -> DiffTensor:
    """Row-wise log(sum(exp(x))) of a 2-D tensor, computed stably."""
    if a.values.ndim != 2:
        raise DimensionError("logsumexp_rows expects a 2-D tensor")
    m = a.values.max(axis=1, keepdims=True)
    expx = np.exp(a.values - m)
    sums = expx.sum(axis=1, keepdims=True)
    out_values = (m + np.log(sums)).reshape(-1)
    softmax = expx / sums

    def bwd(g: np.ndarray) -> None:
        _accumulate(a, softmax * g[:, None])

    return a.tape._emit("logsumexp", out_values, (a,), bwd)


def pick(a: DiffTensor, idx: np.ndarray) -> DiffTensor:
    """Select one column per row: out[i] = a[i, idx[i]]."""
    if a.values.ndim != 2:
        raise DimensionError("pick expects a 2-D tensor")
    idx = np.asarray(idx)
    if idx.shape != (a.values.shape[0],):
        raise DimensionError("pick needs one index per row")
    if np.any(idx < 0) or np.any(idx >= a.values.shape[1]):
        raise ContractError("pick index out of range")
    rows = np.arange(a.values.shape[0])
    out_values = a.values[rows, idx].copy()

    def bwd(g: np.ndarray) -> None:
        full = np.zeros_like(a.values)
        full[rows, idx] = g
        _accumulate(a, full)

    return a.tape._emit("pick", out_values, (a,), bwd)


def scatter_replace(a: DiffTensor, idx: np.ndarray, v: DiffTensor) -> DiffTensor:
    """Copy of `a` with out[i, idx[i]] = v[i]; gradients split accordingly."""
    tape = _same_tape(a, v)
    idx = np.asarray(idx)
    if a.values.ndim != 2 or v.values.shape != (a.values.shape[0],):
        raise DimensionError("scatter_replace expects matrix plus one value per row")
    if np.any(idx < 0) or np.any(idx >= a.values.shape[1]):
        raise ContractError("scatter_replace index out of range")
    rows = np.arange(a.values.shape[0])
    out_values = a.values.copy()
    out_values[rows, idx] = v.values

    def bwd(g: np.ndarray) -> None:
        ga = g.copy()
        ga[rows, idx] = 0.0
        _accumulate(a, ga)
        _accumulate(v, g[rows, idx])

    return tape._emit("scatter_replace", out_values, (a, v), bwd)


def sum_all(a: DiffTensor) -> DiffTensor:
    def bwd(g: np.ndarray) -> None:
        _accumulate(a, np.full_like(a.values, float(g)))

    return a.tape._emit("sum", np.asarray(a.values.sum()), (a,), bwd)


def mean_all(a: DiffTensor) -> DiffTensor:
    n = a.values.size

    def bwd(g: np.ndarray) -> None:
        _accumulate(a, np.full_like(a.values, float(g) / n))

    return a.tape._emit("mean", np.asarray(a.values.mean()), (a,), bwd)


def affine(x: DiffTensor, w: DiffTensor, b: DiffTensor) -> DiffTensor:
    """x @ w + b with a 1-D bias."""
    return add(matmul(x, w), b)
