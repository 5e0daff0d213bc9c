"""Dense tensors, the layer operations the network needs, and reverse-mode
gradients over an explicit tape.

Ops record onto the innermost active ``ComputeGraph`` (a ``with`` context)
whenever any input requires a gradient. ``ComputeGraph.backward`` replays
the tape once, in reverse execution order, accumulating gradients
additively into ``Tensor.grad``. Without an active graph nothing is
recorded, which is the inference path.

Every op validates its output for NaN/Inf; numerical blow-ups raise
``NumericError`` instead of propagating silently.
"""

import threading

import numpy as np

from ..errors import GraphError, NumericError, ShapeError
from . import kernels

PROB_FLOOR = 1e-12  # floor inside log() so a hard-zero probability cannot produce -inf

_stack = threading.local()


def _graphs():
    if not hasattr(_stack, "items"):
        _stack.items = []
    return _stack.items


def active_graph():
    """The innermost active ComputeGraph on this thread, or None."""
    items = _graphs()
    return items[-1] if items else None


class Tensor:
    """Dense N-d real array. float64 by default, float32 on request."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else np.float64
        self.data = np.ascontiguousarray(arr, dtype=dtype)
        if not np.all(np.isfinite(self.data)):
            raise NumericError("tensor initialised with non-finite values")
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"


class ComputeGraph:
    """Ordered tape of executed differentiable ops.

    Each node stores the op's output, its input tensors and a closure that
    maps the upstream gradient to per-input gradients. backward() walks the
    tape once in reverse execution order.
    """

    def __init__(self):
        self._nodes = []

    def __enter__(self):
        _graphs().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _graphs().pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self._nodes)

    def record(self, output, inputs, grad_fn):
        self._nodes.append((output, inputs, grad_fn))

    def backward(self, loss):
        """Accumulate d(loss)/d(leaf) into the .grad of requires_grad leaves."""
        if not self._nodes:
            raise GraphError("backward called before any op was recorded on this graph")
        if loss.size != 1:
            raise GraphError(f"loss must be scalar, got shape {loss.shape}")
        if not any(out is loss for out, _, _ in self._nodes):
            raise GraphError("loss tensor was not produced on this graph")
        pending = {id(loss): np.ones((), dtype=loss.dtype)}
        for output, inputs, grad_fn in reversed(self._nodes):
            gout = pending.pop(id(output), None)
            if gout is None:
                continue  # op not on a path to the loss
            gins = grad_fn(gout.reshape(output.shape))
            for tensor, g in zip(inputs, gins):
                if g is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in pending:
                    pending[key] = pending[key] + g
                else:
                    pending[key] = g
        produced = {id(out) for out, _, _ in self._nodes}
        for output, inputs, _ in self._nodes:
            for tensor in inputs:
                key = id(tensor)
                if key in pending and key not in produced and tensor.requires_grad:
                    g = pending.pop(key)
                    tensor.grad = g if tensor.grad is None else tensor.grad + g


def _finite(arr, op_name):
    if arr.size == 0:
        return arr
    lo, hi = np.min(arr), np.max(arr)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise NumericError(f"{op_name} produced non-finite values")
    return arr


def _make(arr, op_name, inputs, grad_fn):
    _finite(arr, op_name)
    g = active_graph()
    needs = g is not None and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = arr
    out.requires_grad = needs
    out.grad = None
    if needs:
        g.record(out, inputs, grad_fn)
    return out


def _same_dtype(*tensors):
    dt = tensors[0].dtype
    for t in tensors[1:]:
        if t.dtype != dt:
            raise ShapeError(f"mixed dtypes {dt} and {t.dtype}; cast inputs first")
    return dt


# ---------------------------------------------------------------------------
# layer ops


def conv2d(x, kernel, bias):
    """Valid cross-correlation, stride 1: (N,Cin,H,W) * (F,Cin,kh,kw) -> (N,F,H-kh+1,W-kw+1)."""
    _same_dtype(x, kernel, bias)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d wants 4-d input and kernel, got {x.shape} and {kernel.shape}")
    n, cin, h, w = x.shape
    f, ck, kh, kw = kernel.shape
    if ck != cin:
        raise ShapeError(f"kernel expects {ck} input channels, input has {cin}")
    if kh > h or kw > w:
        raise ShapeError(f"kernel ({kh},{kw}) larger than input ({h},{w})")
    if bias.shape != (f,):
        raise ShapeError(f"bias must have shape ({f},), got {bias.shape}")
    out = kernels.conv2d_forward(x.data, kernel.data, bias.data)

    def grad_fn(gout):
        gx = kernels.conv2d_grad_input(gout, kernel.data, h, w) if x.requires_grad else None
        gk = kernels.conv2d_grad_kernel(gout, x.data, kh, kw) if kernel.requires_grad else None
        gb = gout.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        return gx, gk, gb

    return _make(out, "conv2d", (x, kernel, bias), grad_fn)


def compose_conv_kernels(outer, inner):
    """Collapse conv(conv(x, inner), outer) into one kernel.

    inner: (F1,C,1,kw) temporal kernel; outer: (F2,F1,H,1) full-height
    channel mixer. Returns the exact composite (F2,C,H,kw).
    """
    _same_dtype(outer, inner)
    f2, f1o, h, one = outer.shape
    f1, c, ih, kw = inner.shape
    if one != 1 or ih != 1 or f1o != f1:
        raise ShapeError(
            f"compose_conv_kernels expects outer (F2,F1,H,1) and inner (F1,C,1,kw), got {outer.shape} and {inner.shape}"
        )
    o2 = outer.data[:, :, :, 0]  # (F2,F1,H)
    i2 = inner.data[:, :, 0, :]  # (F1,C,kw)
    fused = np.einsum("gfh,fcb->gchb", o2, i2, optimize=True)

    def grad_fn(gout):
        g_outer = None
        g_inner = None
        if outer.requires_grad:
            g_outer = np.einsum("gchb,fcb->gfh", gout, i2, optimize=True)[..., None]
        if inner.requires_grad:
            g_inner = np.einsum("gchb,gfh->fcb", gout, o2, optimize=True)[:, :, None, :]
        return g_outer, g_inner

    return _make(np.ascontiguousarray(fused), "compose_conv_kernels", (outer, inner), grad_fn)


def compose_conv_bias(outer, inner_bias, outer_bias):
    """Bias of the collapsed conv pair: outer_bias + outer summed against inner_bias."""
    _same_dtype(outer, inner_bias, outer_bias)
    f2, f1, h, _ = outer.shape
    if inner_bias.shape != (f1,) or outer_bias.shape != (f2,):
        raise ShapeError("compose_conv_bias: bias shapes do not match the mixing kernel")
    o2 = outer.data[:, :, :, 0]
    out = outer_bias.data + np.einsum("gfh,f->g", o2, inner_bias.data, optimize=True)

    def grad_fn(gout):
        g_outer = None
        g_ib = None
        if outer.requires_grad:
            g_outer = (gout[:, None, None] * inner_bias.data[None, :, None]) * np.ones((1, 1, h), dtype=gout.dtype)
            g_outer = g_outer[..., None]
        if inner_bias.requires_grad:
            g_ib = np.einsum("g,gfh->f", gout, o2, optimize=True)
        g_ob = gout if outer_bias.requires_grad else None
        return g_outer, g_ib, g_ob

    return _make(out, "compose_conv_bias", (outer, inner_bias, outer_bias), grad_fn)


def avg_pool2d(x, window=(1, 3), stride=(1, 3)):
    """Average pooling; each output cell is the mean of its window."""
    wh, ww = window
    sh, sw = stride
    if x.ndim != 4:
        raise ShapeError(f"avg_pool2d wants 4-d input, got {x.shape}")
    n, c, h, w = x.shape
    if wh > h or ww > w:
        raise ShapeError(f"pool window ({wh},{ww}) larger than input ({h},{w})")
    out = kernels.avgpool_forward(x.data, wh, ww, sh, sw)

    def grad_fn(gout):
        return (kernels.avgpool_grad_input(gout, h, w, wh, ww, sh, sw),)

    return _make(out, "avg_pool2d", (x,), grad_fn)


def elu(x, alpha=1.0):
    """x if x > 0 else alpha*(exp(x)-1), elementwise."""
    xd = x.data
    neg = alpha * np.expm1(np.minimum(xd, 0.0).astype(xd.dtype))
    out = np.where(xd > 0, xd, neg.astype(xd.dtype))

    def grad_fn(gout):
        slope = np.where(xd > 0, np.asarray(1.0, xd.dtype), (neg + alpha).astype(xd.dtype))
        return (gout * slope,)

    return _make(out.astype(xd.dtype, copy=False), "elu", (x,), grad_fn)


def softmax(logits):
    """Row softmax of (N,K) logits, computed with max-subtraction."""
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ShapeError(f"softmax wants (N,K) with K >= 2, got {logits.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def grad_fn(gout):
        dot = (gout * p).sum(axis=1, keepdims=True)
        return (p * (gout - dot),)

    return _make(p, "softmax", (logits,), grad_fn)


def _check_prob_rows(probs, name):
    rowsum = probs.sum(axis=1)
    if np.any(np.abs(rowsum - 1.0) > 1e-6):
        raise ShapeError(f"{name}: probability rows must sum to 1")


def cross_entropy(probs, onehot):
    """Per-sample -sum(y * log(max(p, floor))) for strict one-hot targets: (N,K),(N,K) -> (N,)."""
    if probs.shape != onehot.shape or probs.ndim != 2:
        raise ShapeError(f"cross_entropy wants matching (N,K) inputs, got {probs.shape} and {onehot.shape}")
    y = onehot.data
    is01 = np.all((y == 0.0) | (y == 1.0))
    if not is01 or np.any(y.sum(axis=1) != 1.0):
        raise ShapeError("cross_entropy: targets must be exact one-hot rows")
    _check_prob_rows(probs.data, "cross_entropy")
    return _ce(probs, y, "cross_entropy")


def soft_cross_entropy(probs, target_rows):
    """cross_entropy with distribution-valued targets (rows sum to 1)."""
    if probs.shape != target_rows.shape or probs.ndim != 2:
        raise ShapeError("soft_cross_entropy wants matching (N,K) inputs")
    y = target_rows.data
    if np.any(y < 0) or np.any(np.abs(y.sum(axis=1) - 1.0) > 1e-6):
        raise ShapeError("soft_cross_entropy: target rows must be distributions")
    _check_prob_rows(probs.data, "soft_cross_entropy")
    return _ce(probs, y, "soft_cross_entropy")


def _ce(probs, y, name):
    p = probs.data
    clipped = np.maximum(p, PROB_FLOOR)
    out = -(y * np.log(clipped)).sum(axis=1)

    def grad_fn(gout):
        gp = np.where(p > PROB_FLOOR, -y / clipped, 0.0)  # clamped region has zero slope
        return (gout[:, None] * gp.astype(p.dtype), None)

    return _make(out, name, (probs, Tensor(y)), grad_fn)


# ---------------------------------------------------------------------------
# plumbing ops


def reshape(x, shape):
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != x.size:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}")
    out = x.data.reshape(shape).copy()

    def grad_fn(gout):
        return (gout.reshape(x.shape),)

    return _make(out, "reshape", (x,), grad_fn)


def take_rows(x, indices):
    """Gather rows along axis 0; backward scatter-adds (duplicate indices accumulate)."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError("take_rows wants a 1-d index list")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeError(f"row index out of range for first extent {x.shape[0]}")
    out = x.data[idx].copy()

    def grad_fn(gout):
        g = np.zeros_like(x.data)
        np.add.at(g, idx, gout)
        return (g,)

    return _make(out, "take_rows", (x,), grad_fn)


def select_column(x, col):
    """(N,K) -> (N,) picking one column."""
    if x.ndim != 2 or not (0 <= col < x.shape[1]):
        raise ShapeError(f"select_column: column {col} invalid for shape {x.shape}")
    out = x.data[:, col].copy()

    def grad_fn(gout):
        g = np.zeros_like(x.data)
        g[:, col] = gout
        return (g,)

    return _make(out, "select_column", (x,), grad_fn)


def add(a, b):
    _same_dtype(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"add wants equal shapes, got {a.shape} and {b.shape}")

    def grad_fn(gout):
        return gout, gout

    return _make(a.data + b.data, "add", (a, b), grad_fn)


def mul(a, b):
    _same_dtype(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"mul wants equal shapes, got {a.shape} and {b.shape}")

    def grad_fn(gout):
        return gout * b.data, gout * a.data

    return _make(a.data * b.data, "mul", (a, b), grad_fn)


def mul_const(x, const):
    """Multiply by a non-differentiable scalar or array (broadcastable)."""
    c = np.asarray(const, dtype=x.dtype)
    out = x.data * c

    def grad_fn(gout):
        g = gout * c
        if g.shape != x.shape:  # undo broadcasting
            g = g.sum(axis=tuple(range(g.ndim - x.ndim))).reshape(x.shape)
        return (g,)

    return _make(out, "mul_const", (x,), grad_fn)


def sum_all(x):
    """Sum of all elements -> scalar tensor."""
    out = np.asarray(x.data.sum(), dtype=x.dtype)

    def grad_fn(gout):
        return (np.broadcast_to(gout, x.shape).astype(x.dtype, copy=True),)

    return _make(out, "sum_all", (x,), grad_fn)
