"""Central finite-difference verification of the analytic gradients.

Runs in float64 on scaled-down block specs so the whole suite finishes in a
few seconds.  The comparison is elementwise relative error with denominator
max(1, |analytic|, |numeric|).
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .blocks import (
    ConvDepthSpec,
    MLPSpec,
    PointSetSpec,
    TransformerSpec,
    conv_encode_depth,
    init_conv_depth,
    init_mlp,
    init_pointset,
    init_transformer,
    mlp_forward,
    pointset_encode,
    transformer_encode,
)
from .params import ParameterSet


def finite_difference_grads(loss_fn, params: ParameterSet, h=1e-5):
    """Central differences of loss_fn() with respect to every parameter value."""
    grads = {}
    for name, t in params.items():
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss_fn().data)
            flat[i] = orig - h
            dn = float(loss_fn().data)
            flat[i] = orig
            gflat[i] = (up - dn) / (2.0 * h)
        grads[name] = g
    return grads


def gradient_check(loss_fn, params: ParameterSet, h=1e-5):
    """Compare analytic and numeric gradients; returns {name: max_rel_err}."""
    params.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {name: (t.grad if t.grad is not None else np.zeros_like(t.data)) for name, t in params.items()}
    numeric = finite_difference_grads(loss_fn, params, h)
    report = {}
    for name in params.names():
        a, n = analytic[name], numeric[name]
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
        report[name] = float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
    return report


def _loss_of(out):
    return T.tsum(T.square(out))


def check_all_blocks(seed=0, h=1e-5):
    """Gradient-check every block kind on a small float64 instance.

    Returns a list of (block_name, max_rel_err) tuples.
    """
    rng = np.random.default_rng(seed)
    results = []

    # MLP (both activations)
    for actname in ("elu", "relu"):
        spec = MLPSpec(in_dim=5, widths=[7, 4, 3], activation=actname)
        ps = ParameterSet(dtype=np.float64)
        init_mlp(ps, "m", spec, rng)
        x = rng.standard_normal((4, 5))
        results.append(
            (f"mlp[{actname}]", max(gradient_check(lambda: _loss_of(mlp_forward(ps, x, spec, "m")), ps, h).values()))
        )

    # point-set encoder
    spec = PointSetSpec(point_dim=3, widths=[6, 5], activation="relu")
    ps = ParameterSet(dtype=np.float64)
    init_pointset(ps, "p", spec, rng)
    pts = rng.standard_normal((9, 3))
    results.append(
        ("pointset", max(gradient_check(lambda: _loss_of(pointset_encode(ps, pts, spec, "p")), ps, h).values()))
    )

    # depth ConvNet (reduced resolution, same layer structure)
    spec = ConvDepthSpec(resolution=9, channels=[2, 3])
    ps = ParameterSet(dtype=np.float64)
    init_conv_depth(ps, "c", spec, rng)
    img = rng.standard_normal((9, 9))
    results.append(
        ("conv_depth", max(gradient_check(lambda: _loss_of(conv_encode_depth(ps, img, spec, "c")), ps, h).values()))
    )

    # transformer
    spec = TransformerSpec(width=4, depth=2, heads=2, ff_mult=2, max_len=6)
    ps = ParameterSet(dtype=np.float64)
    init_transformer(ps, "t", spec, rng)
    seq = rng.standard_normal((3, 4))
    results.append(
        ("transformer", max(gradient_check(lambda: _loss_of(transformer_encode(ps, seq, spec, "t")), ps, h).values()))
    )
    return results
