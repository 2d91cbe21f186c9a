"""Dense float64 tensors with reverse-mode automatic differentiation.

The engine is define-by-run: every operation records its inputs and a
gradient closure on the output tensor, and ``backward`` walks that graph
in reverse topological order.  All arithmetic is 64-bit.  Binary ops
require equal shapes; the only broadcasting allowed is scalar-vs-tensor
(a 0-d tensor or a Python number against anything).
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

_GRAD_ENABLED = [True]


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED[0]


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (forward-only evaluation)."""
    prev = _GRAD_ENABLED[0]
    _GRAD_ENABLED[0] = False
    try:
        yield
    finally:
        _GRAD_ENABLED[0] = prev


class Tensor:
    """N-dimensional float64 array, optionally tracked for gradients.

    ``grad`` holds the accumulated gradient after ``backward``; repeated
    backward calls without ``zero_grad`` keep accumulating.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 0:
            # ascontiguousarray would promote 0-d scalars to 1-d
            arr = np.ascontiguousarray(arr)
        if arr.ndim > 0 and min(arr.shape) < 1:
            raise ValueError(f"tensor extents must be positive, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # -- operator sugar -------------------------------------------------------

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- method-style elementwise helpers -------------------------------------

    def abs(self):
        return absolute(self)

    def exp(self):
        return exp(self)

    def sqrt(self):
        return sqrt(self)

    def sigmoid(self):
        return sigmoid(self)

    def sum(self):
        return total(self)

    def mean(self):
        return mean(self)

    def reshape(self, shape):
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _from_op(data: np.ndarray, parents: tuple[Tensor, ...], grad_fn) -> Tensor:
    if _GRAD_ENABLED[0] and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out._parents = parents
        out._grad_fn = grad_fn
        return out
    return Tensor(data)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

    ``loss`` must hold a single element.  Gradients accumulate into
    existing ``grad`` buffers, so calling twice without zeroing doubles them.
    """
    if loss.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")

    # Iterative post-order walk; recursion would overflow on long op chains.
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    flow: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = flow.get(id(node))
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g
        if node._grad_fn is None:
            continue
        for parent, pg in zip(node._parents, node._grad_fn(g)):
            if pg is None:
                continue
            pid = id(parent)
            if pid in flow:
                flow[pid] = flow[pid] + pg
            else:
                flow[pid] = pg


# ---------------------------------------------------------------------------
# elementwise and scalar-broadcast binary ops
# ---------------------------------------------------------------------------


def _binary_shapes(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape} "
                         "(only scalar broadcasting is supported)")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # Undo scalar broadcasting: a () operand collects the full gradient sum.
    if shape == () and g.shape != ():
        return np.asarray(g.sum())
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b)
    return _from_op(a.data + b.data, (a, b),
                    lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b)
    return _from_op(a.data - b.data, (a, b),
                    lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b)
    return _from_op(a.data * b.data, (a, b),
                    lambda g: (_reduce_to(g * b.data, a.shape),
                               _reduce_to(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b)
    return _from_op(a.data / b.data, (a, b),
                    lambda g: (_reduce_to(g / b.data, a.shape),
                               _reduce_to(-g * a.data / (b.data * b.data), b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _from_op(-a.data, (a,), lambda g: (-g,))


def maximum(a, b) -> Tensor:
    """Elementwise max; gradient routes to the larger input (ties go to ``a``)."""
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b)
    take_a = a.data >= b.data
    return _from_op(np.maximum(a.data, b.data), (a, b),
                    lambda g: (_reduce_to(np.where(take_a, g, 0.0), a.shape),
                               _reduce_to(np.where(take_a, 0.0, g), b.shape)))


def absolute(a) -> Tensor:
    a = as_tensor(a)
    sign = np.sign(a.data)
    return _from_op(np.abs(a.data), (a,), lambda g: (g * sign,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _from_op(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _from_op(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _from_op(out, (a,), lambda g: (g * 0.5 / out,))


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    return _from_op(a.data ** p, (a,), lambda g: (g * p * a.data ** (p - 1.0),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = expit(a.data)
    return _from_op(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a) -> Tensor:
    """log(1 + e^x), computed overflow-free; derivative is sigmoid(x)."""
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)
    return _from_op(out, (a,), lambda g: (g * expit(a.data),))


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    scale = np.where(pos, 1.0, slope)
    return _from_op(a.data * scale, (a,), lambda g: (g * scale,))


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def total(a) -> Tensor:
    a = as_tensor(a)
    return _from_op(np.asarray(a.data.sum()), (a,),
                    lambda g: (np.full_like(a.data, float(g)),))


def mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.size
    return _from_op(np.asarray(a.data.mean()), (a,),
                    lambda g: (np.full_like(a.data, float(g) / n),))


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return _from_op(a.data @ b.data, (a, b),
                    lambda g: (g @ b.data.T, a.data.T @ g))


def affine(x, w, b) -> Tensor:
    """Row-wise linear layer: x[M,n] @ w[n,m] + b[m] applied to every row."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.ndim != 2 or w.ndim != 2 or b.ndim != 1:
        raise ValueError("affine expects x[M,n], w[n,m], b[m]")
    if x.shape[1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ValueError(f"affine shape chain broken: {x.shape}, {w.shape}, {b.shape}")
    return _from_op(x.data @ w.data + b.data, (x, w, b),
                    lambda g: (g @ w.data.T, x.data.T @ g, g.sum(axis=0)))


# ---------------------------------------------------------------------------
# shape surgery
# ---------------------------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)
    out = a.data.reshape(shape)
    if out.ndim > 0:
        out = np.ascontiguousarray(out)
    return _from_op(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose2d(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ValueError(f"transpose2d expects a matrix, got {a.shape}")
    return _from_op(np.ascontiguousarray(a.data.T), (a,),
                    lambda g: (np.ascontiguousarray(g.T),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of an empty sequence")
    axis = axis % tensors[0].ndim
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def grad_fn(g):
        return tuple(np.ascontiguousarray(np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis))
                     for i in range(len(sizes)))

    return _from_op(np.concatenate([t.data for t in tensors], axis=axis),
                    tuple(tensors), grad_fn)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of ``length`` entries along ``axis``, starting at ``start``."""
    a = as_tensor(a)
    axis = axis % a.ndim
    if start < 0 or start + length > a.shape[axis]:
        raise ValueError(f"narrow [{start}:{start + length}] out of range for axis "
                         f"{axis} of shape {a.shape}")
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def grad_fn(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _from_op(np.ascontiguousarray(a.data[idx]), (a,), grad_fn)


def split(a, sizes: Sequence[int], axis: int = 0) -> list[Tensor]:
    """Inverse of concat: consecutive narrows covering the whole axis."""
    a = as_tensor(a)
    if sum(sizes) != a.shape[axis % a.ndim]:
        raise ValueError(f"split sizes {sizes} do not cover axis of shape {a.shape}")
    out, start = [], 0
    for s in sizes:
        out.append(narrow(a, axis, start, s))
        start += s
    return out


def take_rows(a, indices) -> Tensor:
    """Gather along axis 0; duplicate indices accumulate gradient."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ValueError("take_rows expects a flat index list")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ValueError("take_rows index out of range")

    def grad_fn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _from_op(a.data[idx].copy(), (a,), grad_fn)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if axis != 0:
        raise ValueError("stack supports axis 0 only")
    return concat([reshape(t, (1,) + t.shape) for t in tensors], axis=0)


def pad2d(a, top: int, bottom: int, left: int, right: int, fill: float = 0.0) -> Tensor:
    """Pad the trailing two axes with a constant; gradient is the inner crop."""
    a = as_tensor(a)
    if a.ndim < 2:
        raise ValueError("pad2d needs at least 2 dimensions")
    h, w = a.shape[-2:]
    out_shape = a.shape[:-2] + (h + top + bottom, w + left + right)
    out = np.full(out_shape, fill, dtype=np.float64)
    inner = (Ellipsis, slice(top, top + h), slice(left, left + w))
    out[inner] = a.data
    return _from_op(out, (a,), lambda g: (np.ascontiguousarray(g[inner]),))


# ---------------------------------------------------------------------------
# softmax
# ---------------------------------------------------------------------------


def softmax(a, axis: int = -1) -> Tensor:
    """Stable softmax along one axis (max subtraction before exponentiation)."""
    a = as_tensor(a)
    if not np.all(np.isfinite(a.data)):
        raise ValueError("softmax requires finite inputs")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return ((g - dot) * out,)

    return _from_op(out, (a,), grad_fn)


# ---------------------------------------------------------------------------
# convolution, pooling, resampling
# ---------------------------------------------------------------------------


def conv2d(x, kernels, bias=None) -> Tensor:
    """Stride-1 same-padding cross-correlation.

    ``x`` is [C_in, H, W] or batched [B, C_in, H, W]; ``kernels`` is
    [C_out, C_in, k, k] with odd k.  Output keeps the spatial extents.
    """
    x, k = as_tensor(x), as_tensor(kernels)
    batched = x.ndim == 4
    if not batched and x.ndim != 3:
        raise ValueError(f"conv2d input must be 3-D or 4-D, got {x.shape}")
    if k.ndim != 4 or k.shape[2] != k.shape[3]:
        raise ValueError(f"kernels must be [C_out, C_in, k, k], got {k.shape}")
    ksz = k.shape[2]
    if ksz % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {ksz}")
    cin = x.shape[1] if batched else x.shape[0]
    if k.shape[1] != cin:
        raise ValueError(f"channel mismatch: input has {cin}, kernels expect {k.shape[1]}")

    xb = x.data if batched else x.data[None]
    nb, _, h, w = xb.shape
    cout = k.shape[0]
    pad = (ksz - 1) // 2

    xpad = np.zeros((nb, cin, h + 2 * pad, w + 2 * pad))
    xpad[:, :, pad:pad + h, pad:pad + w] = xb
    windows = np.lib.stride_tricks.sliding_window_view(xpad, (ksz, ksz), axis=(2, 3))
    cols = np.ascontiguousarray(windows.transpose(0, 1, 4, 5, 2, 3)
                                ).reshape(nb, cin * ksz * ksz, h * w)
    kflat = k.data.reshape(cout, cin * ksz * ksz)
    out = (kflat @ cols).reshape(nb, cout, h, w)

    parents: list[Tensor] = [x, k]
    if bias is not None:
        b = as_tensor(bias)
        if b.shape != (cout,):
            raise ValueError(f"bias must have shape ({cout},), got {b.shape}")
        out = out + b.data[None, :, None, None]
        parents.append(b)
    if not batched:
        out = out[0]

    def grad_fn(g):
        gb = g if batched else g[None]
        gflat = gb.reshape(nb, cout, h * w)
        dk = np.einsum("bop,bip->oi", gflat, cols).reshape(k.shape)
        spread = kflat.T @ gflat  # [nb, cin*k*k, h*w]
        spread = spread.reshape(nb, cin, ksz, ksz, h, w)
        dxpad = np.zeros_like(xpad)
        for dy in range(ksz):
            for dx_ in range(ksz):
                dxpad[:, :, dy:dy + h, dx_:dx_ + w] += spread[:, :, dy, dx_]
        dx = dxpad[:, :, pad:pad + h, pad:pad + w]
        grads = [dx if batched else dx[0], dk]
        if bias is not None:
            grads.append(gb.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return _from_op(out, tuple(parents), grad_fn)


def global_avg_pool(x) -> Tensor:
    """Mean over the trailing two (spatial) axes: [..., C, H, W] -> [..., C]."""
    x = as_tensor(x)
    if x.ndim < 3:
        raise ValueError(f"global_avg_pool needs spatial axes, got {x.shape}")
    h, w = x.shape[-2:]
    out = x.data.mean(axis=(-2, -1))

    def grad_fn(g):
        return (np.broadcast_to(g[..., None, None] / (h * w), x.shape).copy(),)

    return _from_op(out, (x,), grad_fn)


def _pool_cells(n: int, out: int) -> list[tuple[int, int]]:
    # Partition when shrinking; overlapping PyTorch-style cells when growing.
    cells = []
    for i in range(out):
        lo = (i * n) // out
        hi = -(-((i + 1) * n) // out) if out > n else ((i + 1) * n) // out
        cells.append((lo, max(hi, lo + 1)))
    return cells


def adaptive_max_pool(x, out_h: int, out_w: int) -> Tensor:
    """Per-cell max over a near-equal partition of the spatial plane."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ValueError(f"adaptive_max_pool expects [C, H, W], got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError("pool target extents must be positive")
    c, h, w = x.shape
    rows = _pool_cells(h, out_h)
    cols = _pool_cells(w, out_w)
    out = np.empty((c, out_h, out_w))
    argmax = np.empty((c, out_h, out_w), dtype=np.intp)
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            cell = x.data[:, r0:r1, c0:c1].reshape(c, -1)
            flat = cell.argmax(axis=1)
            out[:, i, j] = cell[np.arange(c), flat]
            cw = c1 - c0
            argmax[:, i, j] = (r0 + flat // cw) * w + (c0 + flat % cw)

    def grad_fn(g):
        dx = np.zeros((c, h * w))
        np.add.at(dx, (np.repeat(np.arange(c), out_h * out_w),
                       argmax.reshape(c, -1).ravel()), g.reshape(c, -1).ravel())
        return (dx.reshape(c, h, w),)

    return _from_op(out, (x,), grad_fn)


def _resample_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic 1-D bilinear interpolation matrix [n_out, n_in].

    Align-corners-false source coordinates with edge clamping.
    """
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        src = (i + 0.5) * n_in / n_out - 0.5
        src = min(max(src, 0.0), n_in - 1.0)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        m[i, lo] += 1.0 - frac
        m[i, hi] += frac
    return m


def bilinear_resize(x, out_h: int, out_w: int) -> Tensor:
    """Separable bilinear resampling of the trailing two axes."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise ValueError("bilinear_resize needs spatial axes")
    if out_h < 1 or out_w < 1:
        raise ValueError("resize target extents must be positive")
    h, w = x.shape[-2:]
    ry = _resample_matrix(h, out_h)
    rx = _resample_matrix(w, out_w)
    out = ry @ x.data @ rx.T

    def grad_fn(g):
        return (np.ascontiguousarray(ry.T @ g @ rx),)

    return _from_op(np.ascontiguousarray(out), (x,), grad_fn)


# the head upsamples with the same resampler; the alias names that intent
bilinear_upsample = bilinear_resize


def avg_downsample2(x) -> Tensor:
    """2x2 average pooling with stride 2; odd edges average the valid cells."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise ValueError("avg_downsample2 needs spatial axes")
    h, w = x.shape[-2:]
    ri = np.arange(0, h, 2)
    ci = np.arange(0, w, 2)
    rsz = np.minimum(ri + 2, h) - ri
    csz = np.minimum(ci + 2, w) - ci
    counts = rsz[:, None] * csz[None, :]
    sums = np.add.reduceat(np.add.reduceat(x.data, ri, axis=-2), ci, axis=-1)
    out = sums / counts

    def grad_fn(g):
        per_cell = g / counts
        return (np.repeat(np.repeat(per_cell, rsz, axis=-2), csz, axis=-1),)

    return _from_op(out, (x,), grad_fn)


# ---------------------------------------------------------------------------
# construction helpers
# ---------------------------------------------------------------------------


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)


def full(shape, value: float, requires_grad: bool = False) -> Tensor:
    return Tensor(np.full(shape, float(value)), requires_grad=requires_grad)


def randn(shape, rng: np.random.Generator, scale: float = 1.0,
          requires_grad: bool = False) -> Tensor:
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=requires_grad)


def he_normal(shape, fan_in: int, rng: np.random.Generator,
              requires_grad: bool = True) -> Tensor:
    """Kaiming-style init for leaky-relu stacks."""
    return randn(shape, rng, scale=np.sqrt(2.0 / fan_in), requires_grad=requires_grad)
