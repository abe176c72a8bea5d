"""The four network blocks: MLP, point-set encoder, depth ConvNet, temporal transformer.

Each block is a pair of functions: ``init_*`` adds parameters (with a name
prefix) to a ParameterSet, and the forward function runs on Tensors through
the autodiff graph.  Default shapes follow the paper-derived configuration:
point-set MLP [32, 32, 32] with max pooling, depth ConvNet with four stride-2
layers and global average pooling to 32 features, transformer width 32 with
2 blocks and 2 heads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, DimensionError
from . import tensor as T
from .params import ParameterSet
from .tensor import Tensor

ACTIVATIONS = {"elu": T.elu, "relu": T.relu, "none": lambda x: x}


@dataclass
class MLPSpec:
    in_dim: int
    widths: list[int]
    activation: str = "elu"
    activate_final: bool = False


@dataclass
class PointSetSpec:
    """Per-point MLP followed by coordinatewise max pooling."""

    point_dim: int = 3
    widths: list[int] = field(default_factory=lambda: [32, 32, 32])
    activation: str = "relu"

    @property
    def mlp(self):
        # PointNet-style: activation on every layer, including the last,
        # so the pooled features stay comparable across point counts.
        return MLPSpec(self.point_dim, list(self.widths), self.activation, activate_final=True)


@dataclass
class ConvDepthSpec:
    resolution: int = 60
    channels: list[int] = field(default_factory=lambda: [8, 16, 32, 32])
    kernel: int = 3
    stride: int = 2
    pad: int = 1
    activation: str = "elu"


@dataclass
class TransformerSpec:
    width: int = 32
    depth: int = 2
    heads: int = 2
    ff_mult: int = 4
    max_len: int = 64
    activation: str = "relu"

    @property
    def head_dim(self):
        if self.width % self.heads:
            raise DimensionError(f"transformer width {self.width} not divisible by {self.heads} heads")
        return self.width // self.heads


def _uniform_init(rng, fan_in, fan_out, shape):
    bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# MLP


def init_mlp(params: ParameterSet, prefix: str, spec: MLPSpec, rng):
    d = spec.in_dim
    for i, w in enumerate(spec.widths):
        params.add(f"{prefix}.{i}.w", _uniform_init(rng, d, w, (d, w)))
        params.add(f"{prefix}.{i}.b", np.zeros(w))
        d = w


def mlp_forward(params: ParameterSet, x, spec: MLPSpec, prefix: str = "mlp"):
    """Affine layers with activation between them (and after the last layer
    only when spec.activate_final is set)."""
    x = T.as_tensor(x)
    if x.shape[-1] != spec.in_dim:
        raise DimensionError(
            f"mlp '{prefix}' layer 0 expects input width {spec.in_dim}, got {x.shape[-1]}"
        )
    act = ACTIVATIONS[spec.activation]
    h = x
    last = len(spec.widths) - 1
    for i in range(len(spec.widths)):
        w = params[f"{prefix}.{i}.w"]
        b = params[f"{prefix}.{i}.b"]
        if h.shape[-1] != w.shape[0]:
            raise DimensionError(
                f"mlp '{prefix}' layer {i} expects input width {w.shape[0]}, got {h.shape[-1]}"
            )
        h = T.add(T.matmul(h, w), b)
        if i < last or spec.activate_final:
            h = act(h)
    return h


# ---------------------------------------------------------------------------
# point-set encoder


def init_pointset(params: ParameterSet, prefix: str, spec: PointSetSpec, rng):
    init_mlp(params, prefix, spec.mlp, rng)


def pointset_encode(params: ParameterSet, points, spec: PointSetSpec, prefix: str = "pointset"):
    """Encode (..., N, point_dim) points into (..., widths[-1]) via shared
    per-point MLP and max pooling over the point axis.

    Permutation invariant by construction; an empty point set is rejected.
    """
    points = T.as_tensor(points)
    if points.shape[-2] < 1:
        raise ContractError("pointset_encode requires at least one point")
    feats = mlp_forward(params, points, spec.mlp, prefix)
    return T.tmax(feats, axis=-2)


# ---------------------------------------------------------------------------
# depth ConvNet


def init_conv_depth(params: ParameterSet, prefix: str, spec: ConvDepthSpec, rng):
    c_in = 1
    for i, c_out in enumerate(spec.channels):
        fan_in = c_in * spec.kernel * spec.kernel
        params.add(
            f"{prefix}.{i}.w",
            _uniform_init(rng, fan_in, c_out, (c_out, c_in, spec.kernel, spec.kernel)),
        )
        params.add(f"{prefix}.{i}.b", np.zeros(c_out))
        c_in = c_out


def conv_encode_depth(params: ParameterSet, depth, spec: ConvDepthSpec, prefix: str = "conv"):
    """Stride-2 ConvNet over a single-channel depth image, then global average
    pooling.  Input (H, W) or (B, H, W) with H = W = spec.resolution.
    """
    depth = T.as_tensor(depth)
    squeeze = depth.data.ndim == 2
    if squeeze:
        depth = T.reshape(depth, (1,) + depth.shape)
    B, H, W = depth.shape
    if H != spec.resolution or W != spec.resolution:
        raise DimensionError(
            f"depth image must be {spec.resolution}x{spec.resolution}, got {H}x{W}"
        )
    act = ACTIVATIONS[spec.activation]
    h = T.reshape(depth, (B, 1, H, W))
    for i in range(len(spec.channels)):
        h = T.conv2d(h, params[f"{prefix}.{i}.w"], params[f"{prefix}.{i}.b"], spec.stride, spec.pad)
        h = act(h)
    pooled = T.tmean(T.reshape(h, (B, spec.channels[-1], -1)), axis=-1)
    return T.reshape(pooled, (spec.channels[-1],)) if squeeze else pooled


# ---------------------------------------------------------------------------
# temporal transformer


def init_transformer(params: ParameterSet, prefix: str, spec: TransformerSpec, rng):
    w = spec.width
    params.add(f"{prefix}.pos", 0.02 * rng.standard_normal((spec.max_len, w)))
    for blk in range(spec.depth):
        p = f"{prefix}.{blk}"
        for nm in ("q", "k", "v", "o"):
            params.add(f"{p}.attn.{nm}.w", _uniform_init(rng, w, w, (w, w)))
            params.add(f"{p}.attn.{nm}.b", np.zeros(w))
        params.add(f"{p}.ln1.g", np.ones(w))
        params.add(f"{p}.ln1.b", np.zeros(w))
        params.add(f"{p}.ln2.g", np.ones(w))
        params.add(f"{p}.ln2.b", np.zeros(w))
        ff = w * spec.ff_mult
        params.add(f"{p}.ff.0.w", _uniform_init(rng, w, ff, (w, ff)))
        params.add(f"{p}.ff.0.b", np.zeros(ff))
        params.add(f"{p}.ff.1.w", _uniform_init(rng, ff, w, (ff, w)))
        params.add(f"{p}.ff.1.b", np.zeros(w))
    params.add(f"{prefix}.lnf.g", np.ones(w))
    params.add(f"{prefix}.lnf.b", np.zeros(w))


def _attention(params, h, spec: TransformerSpec, p):
    B, k, w = h.shape
    nh, hd = spec.heads, spec.head_dim
    q = T.add(T.matmul(h, params[f"{p}.attn.q.w"]), params[f"{p}.attn.q.b"])
    kk = T.add(T.matmul(h, params[f"{p}.attn.k.w"]), params[f"{p}.attn.k.b"])
    v = T.add(T.matmul(h, params[f"{p}.attn.v.w"]), params[f"{p}.attn.v.b"])
    # (B, k, w) -> (B, nh, k, hd)
    q = T.transpose(T.reshape(q, (B, k, nh, hd)), (0, 2, 1, 3))
    kk = T.transpose(T.reshape(kk, (B, k, nh, hd)), (0, 2, 1, 3))
    v = T.transpose(T.reshape(v, (B, k, nh, hd)), (0, 2, 1, 3))
    scores = T.mul(T.matmul(q, T.transpose(kk, (0, 1, 3, 2))), 1.0 / np.sqrt(hd))
    attn = T.softmax(scores, axis=-1)
    mixed = T.matmul(attn, v)  # (B, nh, k, hd)
    merged = T.reshape(T.transpose(mixed, (0, 2, 1, 3)), (B, k, w))
    return T.add(T.matmul(merged, params[f"{p}.attn.o.w"]), params[f"{p}.attn.o.b"])


def transformer_encode(params: ParameterSet, seq, spec: TransformerSpec, prefix: str = "tf"):
    """Encode a (k, width) or (B, k, width) sequence; returns the final-position
    representation after pre-norm attention blocks, shape (width,) or (B, width).

    Learned positional embeddings are added first; attention is full
    bidirectional within the window.
    """
    seq = T.as_tensor(seq)
    squeeze = seq.data.ndim == 2
    if squeeze:
        seq = T.reshape(seq, (1,) + seq.shape)
    B, k, w = seq.shape
    if w != spec.width:
        raise DimensionError(f"transformer expects width {spec.width}, got {w}")
    if not 1 <= k <= spec.max_len:
        raise ContractError(
            f"sequence length {k} outside positional table range [1, {spec.max_len}]"
        )
    act = ACTIVATIONS[spec.activation]
    h = T.add(seq, T.getitem(params[f"{prefix}.pos"], slice(0, k)))
    for blk in range(spec.depth):
        p = f"{prefix}.{blk}"
        hn = T.layer_norm(h, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])
        h = T.add(h, _attention(params, hn, spec, p))
        hn = T.layer_norm(h, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])
        ff = T.add(T.matmul(hn, params[f"{p}.ff.0.w"]), params[f"{p}.ff.0.b"])
        ff = act(ff)
        ff = T.add(T.matmul(ff, params[f"{p}.ff.1.w"]), params[f"{p}.ff.1.b"])
        h = T.add(h, ff)
    h = T.layer_norm(h, params[f"{prefix}.lnf.g"], params[f"{prefix}.lnf.b"])
    last = T.getitem(h, (slice(None), k - 1))  # (B, w) at the most recent position
    return T.reshape(last, (w,)) if squeeze else last


def init_linear(params: ParameterSet, prefix: str, in_dim: int, out_dim: int, rng):
    params.add(f"{prefix}.w", _uniform_init(rng, in_dim, out_dim, (in_dim, out_dim)))
    params.add(f"{prefix}.b", np.zeros(out_dim))


def linear(params: ParameterSet, x, prefix: str):
    x = T.as_tensor(x)
    w = params[f"{prefix}.w"]
    if x.shape[-1] != w.shape[0]:
        raise DimensionError(
            f"linear '{prefix}' expects input width {w.shape[0]}, got {x.shape[-1]}"
        )
    return T.add(T.matmul(x, w), params[f"{prefix}.b"])
