"""Object dataset: shape records, procedural generation, surface sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from ..errors import ShapeDataError
from . import mesh as meshlib

CANONICAL_EXTENT = 0.1  # meters; procedural shapes normalized to this max dim


@dataclass
class ObjectShape:
    shape_id: str
    vertices: np.ndarray        # (m, 3) full triangle mesh
    faces: np.ndarray           # (t, 3)
    hull_normals: np.ndarray    # (F, 3) unit outward
    hull_offsets: np.ndarray    # (F,) so that n.x <= b inside
    hull_vertices: np.ndarray   # (Vh, 3)
    extent: np.ndarray          # (3,) axis-aligned w, d, h
    volume: float               # unit-scale mesh volume
    centroid: np.ndarray        # (3,)
    inertia_unit: np.ndarray    # (3, 3) unit-density inertia about centroid

    @classmethod
    def from_mesh(cls, shape_id: str, vertices, faces) -> "ObjectShape":
        vertices = np.asarray(vertices, dtype=float)
        faces = np.asarray(faces, dtype=int)
        try:
            hull = ConvexHull(vertices)
        except (QhullError, ValueError) as e:
            raise ShapeDataError(f"{shape_id}: degenerate hull: {e}") from e
        normals = hull.equations[:, :3]
        offsets = -hull.equations[:, 3]
        volume, centroid, inertia = meshlib.mass_properties(vertices, faces)
        extent = vertices.max(axis=0) - vertices.min(axis=0)
        if extent.min() <= 1e-9:
            raise ShapeDataError(f"{shape_id}: zero extent along an axis")
        return cls(
            shape_id=shape_id,
            vertices=vertices,
            faces=faces,
            hull_normals=normals,
            hull_offsets=offsets,
            hull_vertices=vertices[hull.vertices].copy(),
            extent=extent,
            volume=volume,
            centroid=centroid,
            inertia_unit=inertia,
        )


def aspect_ratio(shape: ObjectShape) -> float:
    """Max over min bounding-box extent in canonical orientation."""
    ext = np.asarray(shape.extent, dtype=float)
    if ext.min() <= 1e-9:
        raise ShapeDataError(f"{shape.shape_id}: degenerate extent {ext}")
    return float(ext.max() / ext.min())


def load_mesh(path, scale=None) -> ObjectShape:
    """OBJ ingestion: parse, center, connectivity check, hull."""
    verts, faces = meshlib.load_obj(path, scale=scale)
    return ObjectShape.from_mesh(str(path), verts, faces)


def _normalize(verts):
    ext = verts.max(axis=0) - verts.min(axis=0)
    verts = verts * (CANONICAL_EXTENT / ext.max())
    center = (verts.max(axis=0) + verts.min(axis=0)) / 2.0
    return verts - center


def _sample_dims(rng, max_ratio):
    """Three half-extents whose bbox ratio never exceeds max_ratio."""
    base = 0.5
    ratio = rng.uniform(1.0, max_ratio)
    mid = rng.uniform(1.0, ratio)
    dims = base * np.array([1.0, mid, ratio]) / ratio
    return rng.permutation(dims)


def _build_procedural(kind: str, rng, max_ratio: float):
    if kind == "box":
        d = 2 * _sample_dims(rng, max_ratio)
        return meshlib.make_box(*d)
    if kind == "sphere":
        return meshlib.make_sphere(0.5)
    if kind == "ellipsoid":
        d = _sample_dims(rng, max_ratio)
        return meshlib.make_ellipsoid(*d)
    if kind == "cylinder":
        r, _, h2 = sorted(_sample_dims(rng, max_ratio))
        h = 2 * h2
        if h / (2 * r) > max_ratio:
            h = max_ratio * 2 * r
        return meshlib.make_cylinder(r, h)
    if kind == "capsule":
        r = 0.25
        h = rng.uniform(0.1, 2 * r * (max_ratio - 1.0))
        return meshlib.make_capsule(r, h)
    if kind == "superquadric":
        d = _sample_dims(rng, max_ratio)
        e1 = rng.uniform(0.4, 1.3)
        e2 = rng.uniform(0.4, 1.3)
        return meshlib.make_superquadric(tuple(d), e1, e2)
    raise ShapeDataError(f"unknown procedural kind: {kind}")


DEFAULT_KINDS = ("box", "sphere", "ellipsoid", "cylinder", "capsule", "superquadric")


def generate_procedural_set(
    seed: int,
    count: int,
    kinds=DEFAULT_KINDS,
    max_ratio: float = 2.0,
) -> List[ObjectShape]:
    """Deterministic procedural dataset; every shape passes the ratio filter."""
    if count < 1:
        raise ShapeDataError("count must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    i = 0
    while len(out) < count:
        kind = kinds[int(rng.integers(len(kinds)))]
        verts, faces = _build_procedural(kind, rng, max_ratio)
        verts = _normalize(verts)
        shape = ObjectShape.from_mesh(f"{kind}-{i:03d}", verts, faces)
        i += 1
        if aspect_ratio(shape) <= max_ratio + 1e-9:
            out.append(shape)
    return out


def generate_held_out_set(seed: int = 7041, count: int = 15) -> List[ObjectShape]:
    """Fixed out-of-distribution set with aspect ratios allowed up to 2.5."""
    return generate_procedural_set(seed, count, max_ratio=2.5)


def sample_surface_points(shape: ObjectShape, n_p: int = 100, seed: int = 0) -> np.ndarray:
    """Area-weighted uniform samples on the full mesh surface, (n_p, 3)."""
    rng = np.random.default_rng(seed)
    v = shape.vertices
    f = shape.faces
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    total = areas.sum()
    if total <= 0:
        raise ShapeDataError(f"{shape.shape_id}: zero surface area")
    tri = rng.choice(len(f), size=n_p, p=areas / total)
    r1 = np.sqrt(rng.uniform(size=(n_p, 1)))
    r2 = rng.uniform(size=(n_p, 1))
    return (1 - r1) * a[tri] + r1 * (1 - r2) * b[tri] + r1 * r2 * c[tri]
