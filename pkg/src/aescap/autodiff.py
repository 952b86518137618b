"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is implicit: each op output records its parent tensors and a
closure that routes the output gradient back to them. ``backward`` replays
the closures in reverse topological order, accumulating by summation into
zero-initialized slots. Storage is flat row-major float64; ops never alias
their inputs, so tensors act as immutable values once created.

Broadcasting is deliberately narrow: binary ops require equal shapes or a
scalar (size-1) operand. Anything else raises ShapeError. This trades
convenience for the absence of silent shape bugs.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractError, DomainError, ShapeError

_FINITE_CHECKS = False


def set_finite_checks(enabled: bool) -> None:
    """Globally toggle post-op finiteness assertions (used by the test suite)."""
    global _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)


class Tensor:
    """An n-dimensional float64 array, optionally tracked by the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; all delegate to module-level ops.
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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: Sequence[Tensor], grad_fn) -> Tensor:
    if _FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise DomainError("op produced a non-finite value")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    requires = False
    for p in parents:
        if p.requires_grad:
            requires = True
            break
    out.requires_grad = requires
    if requires:
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    else:
        out._parents = ()
        out._grad_fn = None
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    # Copy on first write: grad_fns may pass arrays they still share.
    if t.grad is None:
        t.grad = np.array(g)
    else:
        t.grad += g


def _accum_binary(t: Tensor, g: np.ndarray) -> None:
    # Reduce the broadcast gradient back to a scalar operand's shape.
    if t.data.shape != g.shape:
        g = np.sum(g).reshape(t.data.shape)
    _accum(t, g)


def _check_binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape == b.data.shape:
        return
    if a.data.size == 1 or b.data.size == 1:
        return
    raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} are neither equal nor scalar")


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary_shapes(a, b, "add")
    data = a.data + b.data

    def grad_fn(g):
        if a.requires_grad:
            _accum_binary(a, g)
        if b.requires_grad:
            _accum_binary(b, g)

    return _make(data, (a, b), grad_fn)


def sub(a, b) -> Tensor:
    return add(a, neg(_as_tensor(b)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary_shapes(a, b, "mul")
    data = a.data * b.data

    def grad_fn(g):
        if a.requires_grad:
            _accum_binary(a, g * b.data)
        if b.requires_grad:
            _accum_binary(b, g * a.data)

    return _make(data, (a, b), grad_fn)


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def grad_fn(g):
        _accum(a, -g)

    return _make(-a.data, (a,), grad_fn)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    data = np.tanh(a.data)

    def grad_fn(g):
        _accum(a, g * (1.0 - data * data))

    return _make(data, (a,), grad_fn)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    # Split by sign so exp never overflows.
    x = a.data
    e = np.exp(-np.abs(x))
    pos = 1.0 / (1.0 + e)
    data = np.where(x >= 0, pos, 1.0 - pos)

    def grad_fn(g):
        _accum(a, g * data * (1.0 - data))

    return _make(data, (a,), grad_fn)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(over="ignore"):  # the finite-value guard reports overflow
        data = np.exp(a.data)

    def grad_fn(g):
        _accum(a, g * data)

    return _make(data, (a,), grad_fn)


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log: input has non-positive entries")
    data = np.log(a.data)

    def grad_fn(g):
        _accum(a, g / a.data)

    return _make(data, (a,), grad_fn)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.data.shape, b.data.shape
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ShapeError(f"matmul: operands must be 1-D or 2-D, got {sa} and {sb}")
    if sa[-1] != sb[0]:
        raise ShapeError(f"matmul: inner dimensions of {sa} and {sb} do not match")
    data = a.data @ b.data

    def grad_fn(g):
        if a.requires_grad:
            if a.data.ndim == 1 and b.data.ndim == 1:
                _accum(a, g * b.data)
            elif a.data.ndim == 1:  # (k,) @ (k,n) -> (n,)
                _accum(a, b.data @ g)
            elif b.data.ndim == 1:  # (m,k) @ (k,) -> (m,)
                _accum(a, g[:, None] * b.data[None, :])
            else:
                _accum(a, g @ b.data.T)
        if b.requires_grad:
            if a.data.ndim == 1 and b.data.ndim == 1:
                _accum(b, g * a.data)
            elif a.data.ndim == 1:
                _accum(b, a.data[:, None] * g[None, :])
            elif b.data.ndim == 1:
                _accum(b, a.data.T @ g)
            else:
                _accum(b, a.data.T @ g)

    return _make(data, (a, b), grad_fn)


def outer(a, b) -> Tensor:
    """Outer product of two vectors: (m,) x (n,) -> (m, n)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ShapeError(f"outer: expects two 1-D tensors, got {a.data.shape} and {b.data.shape}")
    data = a.data[:, None] * b.data[None, :]

    def grad_fn(g):
        if a.requires_grad:
            _accum(a, g @ b.data)
        if b.requires_grad:
            _accum(b, a.data @ g)

    return _make(data, (a, b), grad_fn)


def _norm_axis(axis: int, ndim: int, op: str) -> int:
    if not -ndim <= axis < ndim:
        raise ShapeError(f"{op}: axis {axis} out of range for {ndim}-dim tensor")
    return axis % ndim


def softmax(a, axis: int = -1) -> Tensor:
    """Softmax along ``axis``; subtracts the per-slice max before exponentiating."""
    a = _as_tensor(a)
    axis = _norm_axis(axis, max(a.data.ndim, 1), "softmax")
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / np.sum(e, axis=axis, keepdims=True)

    def grad_fn(g):
        dot = np.sum(g * data, axis=axis, keepdims=True)
        _accum(a, data * (g - dot))

    return _make(data, (a,), grad_fn)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    axis = _norm_axis(axis, max(a.data.ndim, 1), "log_softmax")
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    logz = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    data = shifted - logz
    soft = np.exp(data)

    def grad_fn(g):
        _accum(a, g - soft * np.sum(g, axis=axis, keepdims=True))

    return _make(data, (a,), grad_fn)


# ---------------------------------------------------------------------------
# shape / indexing ops


def reduce_sum(a, axis: int | None = None) -> Tensor:
    a = _as_tensor(a)
    if axis is None:
        data = np.sum(a.data)

        def grad_fn(g):
            _accum(a, np.full(a.data.shape, float(g)))

        return _make(np.asarray(data), (a,), grad_fn)

    axis = _norm_axis(axis, a.data.ndim, "reduce_sum")
    data = np.sum(a.data, axis=axis)

    def grad_fn(g):
        _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

    return _make(data, (a,), grad_fn)


def reduce_mean(a, axis: int | None = None) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[_norm_axis(axis, a.data.ndim, "reduce_mean")]
    return mul(reduce_sum(a, axis), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.data.size:
        raise ShapeError(f"reshape: cannot view {a.data.shape} as {shape}")
    old = a.data.shape

    def grad_fn(g):
        _accum(a, g.reshape(old))

    return _make(a.data.reshape(shape), (a,), grad_fn)


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors into one vector."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ContractError("concat: needs at least one tensor")
    for p in parts:
        if p.data.ndim != 1:
            raise ShapeError(f"concat: expects 1-D tensors, got shape {p.data.shape}")
    data = np.concatenate([p.data for p in parts])
    sizes = [p.data.size for p in parts]

    def grad_fn(g):
        off = 0
        for p, n in zip(parts, sizes):
            if p.requires_grad:
                _accum(p, g[off:off + n])
            off += n

    return _make(data, parts, grad_fn)


def stack(parts: Sequence[Tensor]) -> Tensor:
    """Stack equal-shape tensors along a new leading axis (scalars -> vector)."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ContractError("stack: needs at least one tensor")
    base = parts[0].data.shape
    for p in parts:
        if p.data.shape != base:
            raise ShapeError(f"stack: mixed shapes {base} and {p.data.shape}")
    data = np.stack([p.data for p in parts])

    def grad_fn(g):
        for i, p in enumerate(parts):
            if p.requires_grad:
                _accum(p, g[i])

    return _make(data, parts, grad_fn)


def pick(v, index: int) -> Tensor:
    """Select one entry of a 1-D tensor as a scalar."""
    v = _as_tensor(v)
    if v.data.ndim != 1:
        raise ShapeError(f"pick: expects a 1-D tensor, got shape {v.data.shape}")
    index = int(index)
    if not 0 <= index < v.data.size:
        raise ContractError(f"pick: index {index} out of range for size {v.data.size}")

    def grad_fn(g):
        gv = np.zeros_like(v.data)
        gv[index] = float(g)
        _accum(v, gv)

    return _make(np.asarray(v.data[index]), (v,), grad_fn)


def slice_vector(v, start: int, stop: int) -> Tensor:
    """Contiguous slice of a 1-D tensor; gradient zero-pads back."""
    v = _as_tensor(v)
    if v.data.ndim != 1:
        raise ShapeError(f"slice_vector: expects a 1-D tensor, got shape {v.data.shape}")
    if not 0 <= start <= stop <= v.data.size:
        raise ContractError(f"slice_vector: range [{start}, {stop}) invalid for size {v.data.size}")

    def grad_fn(g):
        gv = np.zeros_like(v.data)
        gv[start:stop] = g
        _accum(v, gv)

    return _make(v.data[start:stop].copy(), (v,), grad_fn)


def take_row(m, index: int) -> Tensor:
    """Select one row of a 2-D tensor (embedding lookup); gradient scatters back."""
    m = _as_tensor(m)
    if m.data.ndim != 2:
        raise ShapeError(f"take_row: expects a 2-D tensor, got shape {m.data.shape}")
    index = int(index)
    if not 0 <= index < m.data.shape[0]:
        raise ContractError(f"take_row: row {index} out of range for {m.data.shape[0]} rows")

    def grad_fn(g):
        gm = np.zeros_like(m.data)
        gm[index] = g
        _accum(m, gm)

    return _make(m.data[index].copy(), (m,), grad_fn)


def tile_cols(v, n: int) -> Tensor:
    """Repeat a vector (d,) as the n columns of a (d, n) matrix."""
    v = _as_tensor(v)
    if v.data.ndim != 1:
        raise ShapeError(f"tile_cols: expects a 1-D tensor, got shape {v.data.shape}")
    data = np.repeat(v.data[:, None], int(n), axis=1)

    def grad_fn(g):
        _accum(v, g.sum(axis=1))

    return _make(data, (v,), grad_fn)


def tile_rows(v, n: int) -> Tensor:
    """Repeat a vector (d,) as the n rows of an (n, d) matrix."""
    v = _as_tensor(v)
    if v.data.ndim != 1:
        raise ShapeError(f"tile_rows: expects a 1-D tensor, got shape {v.data.shape}")
    data = np.repeat(v.data[None, :], int(n), axis=0)

    def grad_fn(g):
        _accum(v, g.sum(axis=0))

    return _make(data, (v,), grad_fn)


# ---------------------------------------------------------------------------
# convolution


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    c_in = xp.shape[0]
    cols = np.empty((c_in, kh, kw, out_h * out_w), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i:i + stride * out_h:stride, j:j + stride * out_w:stride]
            cols[:, i, j, :] = patch.reshape(c_in, -1)
    return cols.reshape(c_in * kh * kw, out_h * out_w)


def conv2d(x, w, b, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D convolution of x:(C_in,H,W) with w:(C_out,C_in,kh,kw) and bias b:(C_out,)."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.data.ndim != 3 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: expects x (C,H,W) and w (O,C,kh,kw), got {x.data.shape} and {w.data.shape}")
    c_in, h, wd = x.data.shape
    c_out, c_in2, kh, kw = w.data.shape
    if c_in != c_in2:
        raise ShapeError(f"conv2d: input channels {c_in} do not match kernel channels {c_in2}")
    if b.data.shape != (c_out,):
        raise ShapeError(f"conv2d: bias shape {b.data.shape} does not match {c_out} output channels")
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (wd + 2 * padding - kw) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"conv2d: kernel {(kh, kw)} does not fit input {(h, wd)} with padding {padding}")

    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = _im2col(xp, kh, kw, stride, out_h, out_w)
    w2 = w.data.reshape(c_out, -1)
    data = (w2 @ cols + b.data[:, None]).reshape(c_out, out_h, out_w)

    def grad_fn(g):
        g2 = g.reshape(c_out, -1)
        if b.requires_grad:
            _accum(b, g2.sum(axis=1))
        if w.requires_grad:
            _accum(w, (g2 @ cols.T).reshape(w.data.shape))
        if x.requires_grad:
            dcols = (w2.T @ g2).reshape(c_in, kh, kw, out_h * out_w)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += (
                        dcols[:, i, j, :].reshape(c_in, out_h, out_w))
            _accum(x, dxp[:, padding:padding + h, padding:padding + wd] if padding else dxp)

    return _make(data, (x, w, b), grad_fn)


# ---------------------------------------------------------------------------
# backward pass and optimization


def _topo_order(root: Tensor) -> list[Tensor]:
    # Iterative DFS; children visited in their fixed registration order, so the
    # resulting order (and therefore gradient accumulation) is deterministic.
    order: list[Tensor] = []
    visited: set[int] = {id(root)}
    stack: list[tuple[Tensor, iter]] = [(root, iter(root._parents))]
    while stack:
        node, parents = stack[-1]
        descended = False
        for child in parents:
            if id(child) not in visited:
                visited.add(id(child))
                stack.append((child, iter(child._parents)))
                descended = True
                break
        if not descended:
            stack.pop()
            order.append(node)
    return order


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every tensor reachable from ``loss``.

    The loss must be scalar. Gradients of the reachable graph are recomputed
    from scratch on every call, so repeated calls are idempotent.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    order = _topo_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._grad_fn is not None and node.grad is not None:
            node._grad_fn(node.grad)


def zero_grads(params: Iterable[Tensor] | Mapping[str, Tensor]) -> None:
    values = params.values() if isinstance(params, Mapping) else params
    for p in values:
        p.grad = None


def sgd_step(params: Iterable[Tensor] | Mapping[str, Tensor],
             grads: Mapping[str, np.ndarray] | Sequence[np.ndarray] | None = None,
             lr: float = 0.01):
    """Vanilla SGD update p <- p - lr * g, in place.

    With ``grads`` omitted, each tensor's own ``grad`` is used; tensors whose
    gradient is absent are left untouched.
    """
    if lr < 0:
        raise ContractError(f"sgd_step: learning rate must be non-negative, got {lr}")
    if isinstance(params, Mapping):
        items = list(params.items())
        get = (lambda k, t: grads.get(k) if grads is not None else t.grad)
    else:
        items = list(enumerate(params))
        get = (lambda k, t: grads[k] if grads is not None else t.grad)
    for key, p in items:
        g = get(key, p)
        if g is None:
            continue
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise ContractError(f"sgd_step: gradient shape {g.shape} does not match parameter shape {p.data.shape}")
        p.data -= lr * g
    return params


def finite_diff_check(loss_fn: Callable[[], Tensor],
                      params: Iterable[Tensor] | Mapping[str, Tensor],
                      eps: float = 1e-4,
                      max_coords_per_tensor: int | None = None,
                      rng: np.random.Generator | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` rebuilds the scalar loss from the current parameter values.
    Error per coordinate is |analytic - numeric| / max(1, |numeric|). Large
    tensors can be subsampled via ``max_coords_per_tensor`` (seeded ``rng``);
    the default sweeps every coordinate.
    """
    values = list(params.values()) if isinstance(params, Mapping) else list(params)
    zero_grads(values)
    backward(loss_fn())
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in values]

    worst = 0.0
    for p, a in zip(values, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if max_coords_per_tensor is not None and n > max_coords_per_tensor:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(n, size=max_coords_per_tensor, replace=False)
        else:
            coords = range(n)
        aflat = a.reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn().item()
            flat[i] = orig - eps
            down = loss_fn().item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            err = abs(aflat[i] - numeric) / max(1.0, abs(numeric))
            if err > worst:
                worst = err
    return worst
