"""Dense double-precision tensors with reverse-mode gradients.

Every differentiable operation used by the forecaster lives here. Each op
builds a node in a define-by-run graph; `backward` walks the graph once and
accumulates gradients additively, so a parameter used in several places (or
across several samples of a batch) collects the sum of its contributions.
Gradients persist until explicitly zeroed.

Conventions that tests rely on:
  - relu and absolute use the 0 subgradient at exactly 0,
  - dropout is inverted (survivors scaled by 1/(1-rate)), eval mode is the
    identity bit for bit,
  - softmax subtracts the max logit before exponentiation.
"""

from __future__ import annotations

from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, NumericError, ShapeError


class Tensor:
    """Immutable-by-convention dense array node of the computation graph.

    `data` is always a C-contiguous float64 ndarray. `grad` holds d(loss)/d(self)
    after `backward`; it is None for nodes no backward pass has reached.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _validate: bool = True):
        # asarray keeps 0-d shapes (ascontiguousarray would promote them to 1-d)
        arr = np.asarray(data, dtype=np.float64, order="C")
        if _validate:
            if any(dim <= 0 for dim in arr.shape):
                raise ShapeError(f"tensor dimensions must be positive, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise NumericError("tensor contains NaN or Inf values")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def check_finite(self, context: str = "tensor") -> "Tensor":
        if not np.all(np.isfinite(self.data)):
            raise NumericError(f"{context} contains NaN or Inf values")
        return self

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Small amount of operator sugar; the named functions are the real API.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def tensor(data) -> Tensor:
    """Validated constant tensor from array-like data."""
    return Tensor(data, requires_grad=False)


def constant(value: float) -> Tensor:
    """Scalar (shape ()) constant."""
    return Tensor(np.asarray(value, dtype=np.float64))


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), _validate=False)


def ones(shape) -> Tensor:
    return Tensor(np.ones(shape), _validate=False)


class Parameter:
    """Named learnable tensor with a persistent gradient accumulator."""

    __slots__ = ("name", "value")

    def __init__(self, name: str, data):
        self.name = name
        self.value = Tensor(data, requires_grad=True)
        self.value.grad = np.zeros(self.value.shape)

    @property
    def grad(self) -> np.ndarray:
        assert self.value.grad is not None
        return self.value.grad

    def zero_grad(self) -> None:
        self.value.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class ParamSet:
    """Ordered registry of uniquely named parameters."""

    def __init__(self) -> None:
        self._params: dict[str, Parameter] = {}

    def register(self, name: str, data) -> Parameter:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        p = Parameter(name, data)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.zero_grad()


_grad_enabled = True


class no_grad:
    """Context manager that skips graph construction for pure inference."""

    def __enter__(self):
        global _grad_enabled
        self._previous = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._previous
        return False


def _node(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(data, requires_grad=_grad_enabled and any(p.requires_grad for p in parents),
                 _validate=False)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.zeros(t.data.shape)
        t.grad += g


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op} needs equal shapes, got {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")

    def backward_fn(g):
        _accum(a, g)
        _accum(b, g)

    return _node(a.data + b.data, (a, b), backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")

    def backward_fn(g):
        _accum(a, g)
        _accum(b, -g)

    return _node(a.data - b.data, (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")

    def backward_fn(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _node(a.data * b.data, (a, b), backward_fn)


def add_scalar(x: Tensor, s: Tensor) -> Tensor:
    """x + s with s a shape-() tensor added to every entry."""
    if s.shape != ():
        raise ShapeError(f"add_scalar needs a scalar second operand, got shape {s.shape}")

    def backward_fn(g):
        _accum(x, g)
        _accum(s, np.asarray(g.sum()))

    return _node(x.data + s.data, (x, s), backward_fn)


def mul_scalar(x: Tensor, s: Tensor) -> Tensor:
    """x * s with s a shape-() tensor scaling every entry."""
    if s.shape != ():
        raise ShapeError(f"mul_scalar needs a scalar second operand, got shape {s.shape}")

    def backward_fn(g):
        _accum(x, g * s.data)
        _accum(s, np.asarray((g * x.data).sum()))

    return _node(x.data * s.data, (x, s), backward_fn)


def scale(x: Tensor, c: float) -> Tensor:
    """x scaled by a plain (non-learnable) constant."""

    def backward_fn(g):
        _accum(x, g * c)

    return _node(x.data * c, (x,), backward_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs two matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")

    def backward_fn(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), backward_fn)


def matvec(a: Tensor, v: Tensor) -> Tensor:
    """Matrix times column vector: [m x k] @ [k] -> [m]."""
    if a.data.ndim != 2 or v.data.ndim != 1 or a.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec shapes disagree: {a.shape} x {v.shape}")

    def backward_fn(g):
        _accum(a, np.outer(g, v.data))
        _accum(v, a.data.T @ g)

    return _node(a.data @ v.data, (a, v), backward_fn)


def vecmat(v: Tensor, a: Tensor) -> Tensor:
    """Row vector times matrix: [k] @ [k x n] -> [n]."""
    if v.data.ndim != 1 or a.data.ndim != 2 or v.shape[0] != a.shape[0]:
        raise ShapeError(f"vecmat shapes disagree: {v.shape} x {a.shape}")

    def backward_fn(g):
        _accum(v, a.data @ g)
        _accum(a, np.outer(v.data, g))

    return _node(v.data @ a.data, (v, a), backward_fn)


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two equal-length vectors, returns a scalar."""
    if a.data.ndim != 1 or b.data.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot needs equal-length vectors, got {a.shape} and {b.shape}")

    def backward_fn(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _node(np.asarray(a.data @ b.data), (a, b), backward_fn)


def conv_full_height(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Valid cross-correlation over the time axis with full-height kernels.

    x is [D x T], kernels are [d_c x D x w], bias is [d_c]; the output is
    [d_c x (T - w + 1)]. No activation is applied here.
    """
    if x.data.ndim != 2:
        raise ShapeError(f"conv input must be a D x T matrix, got shape {x.shape}")
    if kernels.data.ndim != 3:
        raise ShapeError(f"kernels must be d_c x D x w, got shape {kernels.shape}")
    d_c, kd, w = kernels.shape
    d, t = x.shape
    if kd != d:
        raise ShapeError(f"kernel height {kd} must equal variable count {d}")
    if w > t:
        raise ShapeError(f"kernel window w={w} exceeds input length T={t}")
    if bias.shape != (d_c,):
        raise ShapeError(f"bias must have shape ({d_c},), got {bias.shape}")

    windows = np.lib.stride_tricks.sliding_window_view(x.data, w, axis=1)  # [D, T_c, w]
    t_c = t - w + 1
    flat_windows = windows.transpose(1, 0, 2).reshape(t_c, d * w)
    flat_kernels = kernels.data.reshape(d_c, d * w)
    out = flat_kernels @ flat_windows.T + bias.data[:, None]

    def backward_fn(g):
        _accum(kernels, (g @ flat_windows).reshape(d_c, d, w))
        _accum(bias, g.sum(axis=1))
        if x.requires_grad:
            gx = np.zeros(x.data.shape)
            for j in range(w):
                gx[:, j:j + t_c] += kernels.data[:, :, j].T @ g
            _accum(x, gx)

    return _node(out, (x, kernels, bias), backward_fn)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0  # gradient at exactly 0 is 0

    def backward_fn(g):
        _accum(x, g * mask)

    return _node(np.maximum(x.data, 0.0), (x,), backward_fn)


def sigmoid(x: Tensor) -> Tensor:
    # exp overflow for very negative inputs saturates cleanly to 0.
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-x.data))

    def backward_fn(g):
        _accum(x, g * out * (1.0 - out))

    return _node(out, (x,), backward_fn)


def softmax(x: Tensor) -> Tensor:
    """Stable softmax over a vector of finite values."""
    if x.data.ndim != 1:
        raise ShapeError(f"softmax needs a vector, got shape {x.shape}")
    x.check_finite("softmax input")
    shifted = x.data - x.data.max()
    e = np.exp(shifted)
    out = e / e.sum()

    def backward_fn(g):
        _accum(x, out * (g - (g * out).sum()))

    return _node(out, (x,), backward_fn)


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate vectors left to right."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat needs at least one vector")
    for p in parts:
        if p.data.ndim != 1:
            raise ShapeError(f"concat operands must be vectors, got shape {p.shape}")
    offsets = np.cumsum([0] + [p.shape[0] for p in parts])

    def backward_fn(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[lo:hi])

    return _node(np.concatenate([p.data for p in parts]), parts, backward_fn)


def element(x: Tensor, i: int) -> Tensor:
    """Scalar view of entry i of a vector."""
    if x.data.ndim != 1:
        raise ShapeError(f"element needs a vector, got shape {x.shape}")

    def backward_fn(g):
        if x.requires_grad:
            gx = np.zeros(x.data.shape)
            gx[i] = g
            _accum(x, gx)

    return _node(np.asarray(x.data[i]), (x,), backward_fn)


def column(x: Tensor, j: int) -> Tensor:
    """Column j of a matrix as a vector."""
    if x.data.ndim != 2:
        raise ShapeError(f"column needs a matrix, got shape {x.shape}")

    def backward_fn(g):
        if x.requires_grad:
            gx = np.zeros(x.data.shape)
            gx[:, j] = g
            _accum(x, gx)

    return _node(x.data[:, j].copy(), (x,), backward_fn)


def stack_scalars(parts: Sequence[Tensor]) -> Tensor:
    """Stack shape-() scalars into a vector, order preserved."""
    parts = list(parts)
    if not parts:
        raise ShapeError("stack_scalars needs at least one scalar")
    for p in parts:
        if p.shape != ():
            raise ShapeError(f"stack_scalars operands must be scalars, got shape {p.shape}")

    def backward_fn(g):
        for i, p in enumerate(parts):
            _accum(p, np.asarray(g[i]))

    return _node(np.array([p.data for p in parts]), parts, backward_fn)


def col_scale(h: Tensor, w: Tensor) -> Tensor:
    """Scale column t of matrix h by w[t]."""
    if h.data.ndim != 2 or w.data.ndim != 1 or h.shape[1] != w.shape[0]:
        raise ShapeError(f"col_scale shapes disagree: {h.shape} and {w.shape}")

    def backward_fn(g):
        _accum(h, g * w.data[None, :])
        _accum(w, (g * h.data).sum(axis=0))

    return _node(h.data * w.data[None, :], (h, w), backward_fn)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when not training or rate is 0."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("training-mode dropout needs a seeded generator")
    keep = rng.random(x.data.shape) >= rate
    factor = keep / (1.0 - rate)

    def backward_fn(g):
        _accum(x, g * factor)

    return _node(x.data * factor, (x,), backward_fn)


def absolute(x: Tensor) -> Tensor:
    sign = np.sign(x.data)  # subgradient 0 at exactly 0, matching relu's convention

    def backward_fn(g):
        _accum(x, g * sign)

    return _node(np.abs(x.data), (x,), backward_fn)


def sum_all(x: Tensor) -> Tensor:
    """Sum of all entries, as a scalar."""

    def backward_fn(g):
        _accum(x, np.full(x.data.shape, float(g)))

    return _node(np.asarray(x.data.sum()), (x,), backward_fn)


def backward(loss: Tensor) -> None:
    """Populate grad on every reachable tensor with d(loss)/d(tensor).

    Gradients add into any existing grad arrays, so parameters accumulate
    across calls until zeroed.
    """
    if loss.shape != ():
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

    # Iterative topological sort; graphs from long recurrences overflow the
    # recursion limit.
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))

    _accum(loss, np.ones(()))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
