"""Sphere-vs-convex-hull contact queries.

A shape exposes its convex hull as half-spaces {n_i . x <= b_i} with unit
outward normals.  The signed distance is approximated by the most-violated
plane, max_i(n_i . x - b_i), which is exact whenever the closest feature is
a face and a slight underestimate near edges and vertices.
"""

from __future__ import annotations

import numpy as np


def signed_distance(shape, point):
    """Signed distance and outward normal at the arg-max face.

    shape needs hull_normals (F, 3) and hull_offsets (F,); point is (3,).
    Negative distance means the point is inside the hull.
    """
    normals = shape.hull_normals
    offsets = shape.hull_offsets
    d = normals @ np.asarray(point, dtype=float) - offsets
    face = int(np.argmax(d))
    return float(d[face]), normals[face].copy()


def batched_signed_distance(hull_n, hull_b, points):
    """Vectorized form used by the stepping loop.

    hull_n: (n, F, 3) unit face normals (padded faces allowed, see pad_hulls)
    hull_b: (n, F) offsets
    points: (n, t, 3) query points in the hull frame
    returns (dist (n, t), normal (n, t, 3))
    """
    d = np.einsum("nfk,ntk->ntf", hull_n, points) - hull_b[:, None, :]
    face = np.argmax(d, axis=-1)  # (n, t)
    dist = np.take_along_axis(d, face[:, :, None], axis=-1)[:, :, 0]
    normal = hull_n[np.arange(hull_n.shape[0])[:, None], face]
    return dist, normal


def pad_hulls(normals_list, offsets_list):
    """Stack per-shape hulls into fixed-size arrays.

    Padding faces get offset 1e9 so they can never win the arg-max.
    Returns (S, F_max, 3) and (S, F_max).
    """
    fmax = max(len(b) for b in offsets_list)
    S = len(offsets_list)
    out_n = np.zeros((S, fmax, 3))
    out_n[:, :, 2] = 1.0
    out_b = np.full((S, fmax), 1e9)
    for i, (nn, bb) in enumerate(zip(normals_list, offsets_list)):
        out_n[i, : len(bb)] = nn
        out_b[i, : len(bb)] = bb
    return out_n, out_b
