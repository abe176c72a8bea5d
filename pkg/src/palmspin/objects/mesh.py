"""Triangle-mesh construction and solid mass properties.

Primitive generators all return (vertices, faces) with outward-facing
triangles.  Mass properties use the signed-tetrahedron decomposition, so
they are exact for watertight meshes at uniform density.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeDataError


def make_box(w=1.0, d=1.0, h=1.0):
    x, y, z = w / 2.0, d / 2.0, h / 2.0
    v = np.array(
        [
            [-x, -y, -z], [x, -y, -z], [x, y, -z], [-x, y, -z],
            [-x, -y, z], [x, -y, z], [x, y, z], [-x, y, z],
        ]
    )
    f = np.array(
        [
            [0, 2, 1], [0, 3, 2],      # bottom (-z)
            [4, 5, 6], [4, 6, 7],      # top
            [0, 1, 5], [0, 5, 4],      # -y
            [2, 3, 7], [2, 7, 6],      # +y
            [1, 2, 6], [1, 6, 5],      # +x
            [3, 0, 4], [3, 4, 7],      # -x
        ]
    )
    return v, f


def _latlong_grid(radial_fn, nlat=10, nlon=14):
    """Shared pole-deduplicated lat-long tessellation.

    radial_fn(u, v) -> vertex, with u in (-pi/2, pi/2) latitude and v
    longitude.  Poles are single vertices at u = -pi/2 and +pi/2.
    """
    south = radial_fn(-np.pi / 2.0, 0.0)
    north = radial_fn(np.pi / 2.0, 0.0)
    us = np.linspace(-np.pi / 2.0, np.pi / 2.0, nlat + 2)[1:-1]
    vs = np.linspace(-np.pi, np.pi, nlon, endpoint=False)
    verts = [south]
    for u in us:
        for v in vs:
            verts.append(radial_fn(u, v))
    verts.append(north)
    verts = np.array(verts)
    ni = len(verts) - 1

    def ring(i, j):
        return 1 + i * nlon + (j % nlon)

    faces = []
    for j in range(nlon):
        faces.append([0, ring(0, j + 1), ring(0, j)])
    for i in range(nlat - 1):
        for j in range(nlon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append([a, b, d])
            faces.append([a, d, c])
    for j in range(nlon):
        faces.append([ni, ring(nlat - 1, j), ring(nlat - 1, j + 1)])
    return verts, np.array(faces)


def make_sphere(r=0.5, nlat=10, nlon=14):
    def fn(u, v):
        return np.array(
            [r * np.cos(u) * np.cos(v), r * np.cos(u) * np.sin(v), r * np.sin(u)]
        )

    return _latlong_grid(fn, nlat, nlon)


def make_ellipsoid(a=0.5, b=0.4, c=0.3, nlat=10, nlon=14):
    def fn(u, v):
        return np.array(
            [a * np.cos(u) * np.cos(v), b * np.cos(u) * np.sin(v), c * np.sin(u)]
        )

    return _latlong_grid(fn, nlat, nlon)


def make_cylinder(r=0.4, h=1.0, nlon=16):
    """Capped cylinder along z."""
    vs = np.linspace(-np.pi, np.pi, nlon, endpoint=False)
    bot = np.stack([r * np.cos(vs), r * np.sin(vs), np.full(nlon, -h / 2)], axis=1)
    top = bot.copy()
    top[:, 2] = h / 2
    verts = np.concatenate([bot, top, [[0, 0, -h / 2]], [[0, 0, h / 2]]])
    cb, ct = 2 * nlon, 2 * nlon + 1
    faces = []
    for j in range(nlon):
        k = (j + 1) % nlon
        faces.append([j, k, nlon + k])
        faces.append([j, nlon + k, nlon + j])
        faces.append([cb, k, j])
        faces.append([ct, nlon + j, nlon + k])
    return verts, np.array(faces)


def make_capsule(r=0.35, h=0.6, nlat=8, nlon=14):
    """Cylinder of length h along z with hemispherical caps of radius r."""

    def fn(u, v):
        shift = np.sign(np.sin(u)) * h / 2.0
        return np.array(
            [r * np.cos(u) * np.cos(v), r * np.cos(u) * np.sin(v), r * np.sin(u) + shift]
        )

    return _latlong_grid(fn, nlat, nlon)


def make_superquadric(a=(0.5, 0.4, 0.35), e1=0.7, e2=0.7, nlat=10, nlon=14):
    """Superellipsoid; e1 = e2 = 1 is an ellipsoid, small e approaches a box."""

    def spow(x, e):
        return np.sign(x) * np.abs(x) ** e

    def fn(u, v):
        cu, su = np.cos(u), np.sin(u)
        cv, sv = np.cos(v), np.sin(v)
        return np.array(
            [
                a[0] * spow(cu, e1) * spow(cv, e2),
                a[1] * spow(cu, e1) * spow(sv, e2),
                a[2] * spow(su, e1),
            ]
        )

    return _latlong_grid(fn, nlat, nlon)


def mass_properties(verts, faces):
    """Volume, centroid, and unit-density inertia about the centroid.

    Signed tetrahedra against the origin; requires outward orientation.
    """
    v1 = verts[faces[:, 0]]
    v2 = verts[faces[:, 1]]
    v3 = verts[faces[:, 2]]
    det = np.einsum("ij,ij->i", v1, np.cross(v2, v3))
    volume = det.sum() / 6.0
    if volume <= 1e-12:
        raise ShapeDataError(f"mesh volume {volume:.3e} not positive; bad orientation?")
    centroid = (det[:, None] * (v1 + v2 + v3)).sum(axis=0) / (24.0 * volume)
    # second moment about the origin per tetrahedron
    s = v1 + v2 + v3
    C = np.zeros((3, 3))
    for vv in (v1, v2, v3, s):
        C += np.einsum("i,ij,ik->jk", det, vv, vv)
    C /= 120.0
    C_com = C - volume * np.outer(centroid, centroid)
    inertia = np.trace(C_com) * np.eye(3) - C_com
    return volume, centroid, inertia


def connected_components(nv, faces):
    """Number of vertex-connected components among referenced vertices."""
    parent = list(range(nv))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for f in faces:
        ra = find(int(f[0]))
        for k in (1, 2):
            rb = find(int(f[k]))
            if ra != rb:
                parent[rb] = ra
    used = set()
    for f in faces:
        for k in range(3):
            used.add(find(int(f[k])))
    return len(used)


def load_obj(path, scale=None):
    """Minimal ASCII OBJ reader: v and f records, polygon fan triangulation."""
    verts = []
    faces = []
    try:
        with open(path, "r") as fh:
            for line in fh:
                parts = line.split()
                if not parts:
                    continue
                if parts[0] == "v":
                    if len(parts) < 4:
                        raise ShapeDataError(f"{path}: malformed vertex line: {line.strip()}")
                    verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
                elif parts[0] == "f":
                    idx = []
                    for tok in parts[1:]:
                        head = tok.split("/")[0]
                        i = int(head)
                        idx.append(i - 1 if i > 0 else len(verts) + i)
                    if len(idx) < 3:
                        raise ShapeDataError(f"{path}: face with < 3 vertices")
                    for k in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
    except (OSError, ValueError) as e:
        raise ShapeDataError(f"{path}: cannot parse OBJ: {e}") from e
    if len(verts) < 4 or not faces:
        raise ShapeDataError(f"{path}: too few vertices/faces for a solid")
    verts = np.array(verts, dtype=float)
    faces = np.array(faces, dtype=int)
    if faces.max() >= len(verts) or faces.min() < 0:
        raise ShapeDataError(f"{path}: face index out of range")
    if connected_components(len(verts), faces) != 1:
        raise ShapeDataError(f"{path}: mesh has disconnected components")
    if scale is not None:
        verts = verts * float(scale)
    # center at the bounding-box center
    center = (verts.max(axis=0) + verts.min(axis=0)) / 2.0
    verts = verts - center
    return verts, faces
