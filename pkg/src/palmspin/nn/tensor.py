"""Reverse-mode autodiff on dense numpy arrays.

Deliberately minimal: only the operations needed by the four network blocks
(MLP, point-set encoder, depth ConvNet, temporal transformer) and their
training losses exist.  Everything runs on the CPU; float32 is the training
dtype, float64 is used by the gradient-check harness.

A ``Tensor`` wraps an ``np.ndarray`` and records its parents plus a backward
closure.  ``Tensor.backward()`` requires a scalar root and accumulates
gradients into every reachable tensor with ``requires_grad=True``.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import ContractError, DimensionError, NonFiniteError

# When True, every op asserts its output is finite. Slow; meant for debugging.
DEBUG_FINITE = False

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (used for rollouts/eval)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _check_finite(arr, op):
    if DEBUG_FINITE and not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by '{op}'")


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "name")

    def __init__(self, data, requires_grad=False, name=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward_fn = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def _accum(self, g):
        g = np.asarray(g, dtype=self.data.dtype)
        if self.grad is None:
            self.grad = g.copy() if g.base is not None or g.flags.writeable is False else g
        else:
            self.grad = self.grad + g

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def numpy(self):
        return self.data

    def backward(self):
        """Backpropagate from a scalar root."""
        if self.data.size != 1:
            raise ContractError(
                f"backward() requires a scalar loss root, got shape {self.data.shape}"
            )
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # operator sugar
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def _make(data, parents, backward_fn, op):
    _check_finite(data, op)
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def _bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), _bwd, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def _bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g, b.data.shape))

    return _make(out_data, (a, b), _bwd, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def _bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), _bwd, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def _bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(out_data, (a, b), _bwd, "div")


def square(a):
    a = as_tensor(a)
    out_data = a.data * a.data

    def _bwd(g):
        if a.requires_grad:
            a._accum(g * (2.0 * a.data))

    return _make(out_data, (a,), _bwd, "square")


def exp(a):
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def _bwd(g):
        if a.requires_grad:
            a._accum(g * out_data)

    return _make(out_data, (a,), _bwd, "exp")


def log(a):
    a = as_tensor(a)
    out_data = np.log(a.data)

    def _bwd(g):
        if a.requires_grad:
            a._accum(g / a.data)

    return _make(out_data, (a,), _bwd, "log")


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    out_data = np.where(mask, a.data, 0.0).astype(a.data.dtype)

    def _bwd(g):
        if a.requires_grad:
            a._accum(g * mask)

    return _make(out_data, (a,), _bwd, "relu")


def elu(a, alpha=1.0):
    a = as_tensor(a)
    neg = np.expm1(np.minimum(a.data, 0.0)) * alpha
    mask = a.data > 0
    out_data = np.where(mask, a.data, neg).astype(a.data.dtype)

    def _bwd(g):
        if a.requires_grad:
            # d/dx elu = 1 for x>0, alpha*exp(x) = elu(x)+alpha for x<=0
            a._accum(g * np.where(mask, 1.0, neg + alpha).astype(a.data.dtype))

    return _make(out_data, (a,), _bwd, "elu")


def sigmoid(a):
    a = as_tensor(a)
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def _bwd(g):
        if a.requires_grad:
            a._accum(g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), _bwd, "sigmoid")


def clip(a, lo, hi):
    """Clamp with zero gradient outside [lo, hi]."""
    a = as_tensor(a)
    out_data = np.clip(a.data, lo, hi)
    mask = (a.data >= lo) & (a.data <= hi)

    def _bwd(g):
        if a.requires_grad:
            a._accum(g * mask)

    return _make(out_data, (a,), _bwd, "clip")


def minimum(a, b):
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data <= b.data
    out_data = np.where(take_a, a.data, b.data)

    def _bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * take_a, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * ~take_a, b.data.shape))

    return _make(out_data, (a, b), _bwd, "minimum")


def maximum(a, b):
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data >= b.data
    out_data = np.where(take_a, a.data, b.data)

    def _bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * take_a, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * ~take_a, b.data.shape))

    return _make(out_data, (a, b), _bwd, "maximum")


# ---------------------------------------------------------------------------
# linear algebra and reductions


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim == 0 or b.data.ndim == 0:
        raise DimensionError("matmul requires at least 1-d operands")
    out_data = a.data @ b.data

    def _bwd(g):
        ad, bd = a.data, b.data
        if ad.ndim == 1:
            ad = ad[None, :]
        if bd.ndim == 1:
            bd = bd[:, None]
        gg = g
        if a.data.ndim == 1 and b.data.ndim == 1:
            gg = np.array([[g]]) if np.ndim(g) == 0 else g.reshape(1, 1)
        elif a.data.ndim == 1:
            gg = np.expand_dims(g, -2)
        elif b.data.ndim == 1:
            gg = np.expand_dims(g, -1)
        if a.requires_grad:
            ga = gg @ np.swapaxes(bd, -1, -2)
            if a.data.ndim == 1:
                ga = np.squeeze(ga, -2)
            a._accum(_unbroadcast(np.asarray(ga), a.data.shape))
        if b.requires_grad:
            gb = np.swapaxes(ad, -1, -2) @ gg
            if b.data.ndim == 1:
                gb = np.squeeze(gb, -1)
            b._accum(_unbroadcast(np.asarray(gb), b.data.shape))

    return _make(out_data, (a, b), _bwd, "matmul")


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def _bwd(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accum(np.broadcast_to(g, a.data.shape))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accum(np.broadcast_to(gg, a.data.shape))

    return _make(out_data, (a,), _bwd, "sum")


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    denom = a.data.size if axis is None else a.data.shape[axis]

    def _bwd(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accum(np.broadcast_to(g / denom, a.data.shape))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accum(np.broadcast_to(gg / denom, a.data.shape))

    return _make(out_data, (a,), _bwd, "mean")


def tmax(a, axis):
    """Max over one axis; gradient flows to the (first) argmax entries."""
    a = as_tensor(a)
    out_data = a.data.max(axis=axis)
    idx = a.data.argmax(axis=axis)

    def _bwd(g):
        if not a.requires_grad:
            return
        grad = np.zeros_like(a.data)
        np.put_along_axis(
            grad, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis
        )
        a._accum(grad)

    return _make(out_data, (a,), _bwd, "max")


def softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def _bwd(g):
        if a.requires_grad:
            dot = (g * out_data).sum(axis=axis, keepdims=True)
            a._accum(out_data * (g - dot))

    return _make(out_data, (a,), _bwd, "softmax")


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gain.data + bias.data

    def _bwd(g):
        if gain.requires_grad:
            gain._accum(_unbroadcast(g * xhat, gain.data.shape))
        if bias.requires_grad:
            bias._accum(_unbroadcast(g, bias.data.shape))
        if x.requires_grad:
            gx = g * gain.data
            x._accum(
                (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
                * inv
            )

    return _make(out_data, (x, gain, bias), _bwd, "layer_norm")


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(a, shape):
    a = as_tensor(a)
    if isinstance(shape, int):
        shape = (shape,)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out_data = a.data.reshape(shape)

    def _bwd(g):
        if a.requires_grad:
            a._accum(g.reshape(a.data.shape))

    return _make(out_data, (a,), _bwd, "reshape")


def transpose(a, axes):
    a = as_tensor(a)
    out_data = a.data.transpose(axes)
    inv = np.argsort(axes)

    def _bwd(g):
        if a.requires_grad:
            a._accum(g.transpose(inv))

    return _make(out_data, (a,), _bwd, "transpose")


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def _bwd(g):
        parts = np.split(g, splits, axis=axis)
        for t, p in zip(tensors, parts):
            if t.requires_grad:
                t._accum(p)

    return _make(out_data, tuple(tensors), _bwd, "concat")


def getitem(a, idx):
    a = as_tensor(a)
    out_data = a.data[idx]

    def _bwd(g):
        if a.requires_grad:
            grad = np.zeros_like(a.data)
            np.add.at(grad, idx, g)
            a._accum(grad)

    return _make(out_data, (a,), _bwd, "getitem")


# ---------------------------------------------------------------------------
# convolutions (direct/naive; inputs are small by design)


def conv2d(x, w, b, stride=2, pad=1):
    """2-d convolution, NCHW layout, square kernel.

    x: (B, C_in, H, W), w: (C_out, C_in, K, K), b: (C_out,)
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.ndim != 4:
        raise DimensionError(f"conv2d expects 4-d input, got {x.data.shape}")
    B, C_in, H, W = x.data.shape
    C_out, C_in_w, K, _ = w.data.shape
    if C_in != C_in_w:
        raise DimensionError(f"conv2d channel mismatch: input {C_in}, kernel {C_in_w}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    H_out = (H + 2 * pad - K) // stride + 1
    W_out = (W + 2 * pad - K) // stride + 1
    s = xp.strides
    patches = np.lib.stride_tricks.as_strided(
        xp,
        shape=(B, C_in, H_out, W_out, K, K),
        strides=(s[0], s[1], s[2] * stride, s[3] * stride, s[2], s[3]),
        writeable=False,
    )
    out_data = np.einsum("bchwij,ocij->bohw", patches, w.data, optimize=True)
    out_data = out_data + b.data[None, :, None, None]
    out_data = np.ascontiguousarray(out_data, dtype=x.data.dtype)

    def _bwd(g):
        if b.requires_grad:
            b._accum(g.sum(axis=(0, 2, 3)))
        if w.requires_grad:
            gw = np.einsum("bohw,bchwij->ocij", g, patches, optimize=True)
            w._accum(gw)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            # scatter each kernel tap back onto the padded input
            gpatch = np.einsum("bohw,ocij->bchwij", g, w.data, optimize=True)
            for i in range(K):
                for j in range(K):
                    gxp[:, :, i : i + H_out * stride : stride, j : j + W_out * stride : stride] += gpatch[
                        :, :, :, :, i, j
                    ]
            gx = gxp[:, :, pad : pad + H, pad : pad + W] if pad else gxp
            x._accum(gx)

    return _make(out_data, (x, w, b), _bwd, "conv2d")


def conv1d_causal(x, w, b, dilation=1):
    """Causal dilated 1-d convolution over time.

    x: (B, T, C_in), w: (C_out, C_in, K), b: (C_out,).  Output (B, T, C_out);
    position t sees inputs t, t-d, t-2d, ... (left-padded with zeros).
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    B, T, C_in = x.data.shape
    C_out, C_in_w, K = w.data.shape
    if C_in != C_in_w:
        raise DimensionError(f"conv1d channel mismatch: input {C_in}, kernel {C_in_w}")
    lpad = (K - 1) * dilation
    xp = np.pad(x.data, ((0, 0), (lpad, 0), (0, 0)))
    taps = [xp[:, k * dilation : k * dilation + T, :] for k in range(K)]
    stackx = np.stack(taps, axis=-1)  # (B, T, C_in, K)
    out_data = np.einsum("btck,ock->bto", stackx, w.data, optimize=True) + b.data
    out_data = np.ascontiguousarray(out_data, dtype=x.data.dtype)

    def _bwd(g):
        if b.requires_grad:
            b._accum(g.sum(axis=(0, 1)))
        if w.requires_grad:
            w._accum(np.einsum("bto,btck->ock", g, stackx, optimize=True))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            gtap = np.einsum("bto,ock->btck", g, w.data, optimize=True)
            for k in range(K):
                gxp[:, k * dilation : k * dilation + T, :] += gtap[:, :, :, k]
            x._accum(gxp[:, lpad:, :])

    return _make(out_data, (x, w, b), _bwd, "conv1d_causal")


def bce_with_logits(logits, targets):
    """Elementwise binary cross-entropy on logits (numerically stable)."""
    logits, targets = as_tensor(logits), as_tensor(targets)
    z, t = logits.data, targets.data
    out_data = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))

    def _bwd(g):
        if logits.requires_grad:
            s = 1.0 / (1.0 + np.exp(-z))
            logits._accum(g * (s - t))

    return _make(out_data, (logits, targets), _bwd, "bce_with_logits")
