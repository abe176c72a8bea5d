"""Foreground depth camera with training-time noise models.

A pinhole camera in the hand frame ray-casts the object's triangle mesh
only, which stands in for a perfect segmentation mask: hits record ray
depth in meters, everything else is 0.  ``corrupt_vision`` then applies the
segmentation failure / pixel flip / depth noise model, and
``randomize_camera`` jitters the extrinsics and field of view.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import distance_transform_edt

from ..errors import ConfigError, DimensionError
from ..objects.shapes import ObjectShape
from ..physics.rotation import quat_to_mat, rpy_to_mat

RESOLUTION = 60
FOV_MIN = 45.0
FOV_MAX = 65.0

# Camera axes: x = image right, y = image down, z = optical axis.  At zero
# roll/pitch/yaw the camera looks straight down at the palm with image right
# along hand +x, which this basis change encodes.
_R_BASE = np.diag([1.0, -1.0, -1.0])


@dataclass
class CameraModel:
    """Pinhole camera posed in the hand frame; fov is the vertical angle."""

    position: np.ndarray = field(default_factory=lambda: np.array([0.10, 0.0, 0.36]))
    rpy: np.ndarray = field(default_factory=lambda: np.zeros(3))
    fov_deg: float = 55.0
    resolution: int = RESOLUTION
    near: float = 0.01
    far: float = 2.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.rpy = np.asarray(self.rpy, dtype=float)
        if self.position.shape != (3,) or self.rpy.shape != (3,):
            raise DimensionError("camera position and rpy must be 3-vectors")
        if not FOV_MIN <= self.fov_deg <= FOV_MAX:
            raise ConfigError(
                f"camera fov {self.fov_deg} deg outside [{FOV_MIN}, {FOV_MAX}]"
            )
        if self.resolution < 1 or self.near <= 0 or self.far <= self.near:
            raise ConfigError("camera needs resolution >= 1 and 0 < near < far")

    def rotation(self) -> np.ndarray:
        """Camera-to-hand rotation; columns are the camera axes."""
        return rpy_to_mat(*self.rpy) @ _R_BASE

    def ray_directions(self) -> np.ndarray:
        """(res*res, 3) unit ray directions in the hand frame, row major."""
        res = self.resolution
        tan_half = np.tan(np.radians(self.fov_deg) / 2.0)
        c = (2.0 * (np.arange(res) + 0.5) / res - 1.0) * tan_half
        u, v = np.meshgrid(c, c)  # v varies down rows = camera +y
        d = np.stack([u.ravel(), v.ravel(), np.ones(res * res)], axis=1)
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return d @ self.rotation().T


@dataclass
class VisionNoiseConfig:
    """Camera and segmentation noise; zeros everywhere means no noise."""

    cam_pos_sigma: float = 0.0
    cam_rpy_sigma: float = 0.0
    fov_range: Optional[Tuple[float, float]] = None
    flip: float = 0.0
    failure: float = 0.0
    depth_sigma: float = 0.0

    def __post_init__(self):
        for name in ("flip", "failure"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"vision noise {name}={p} is not a probability")
        if self.cam_pos_sigma < 0 or self.cam_rpy_sigma < 0 or self.depth_sigma < 0:
            raise ConfigError("vision noise sigmas must be non-negative")
        if self.fov_range is not None:
            lo, hi = self.fov_range
            if not (FOV_MIN <= lo <= hi <= FOV_MAX):
                raise ConfigError(
                    f"fov range {self.fov_range} must sit inside [{FOV_MIN}, {FOV_MAX}]"
                )


def training_noise() -> VisionNoiseConfig:
    """The noise level used during student training."""
    return VisionNoiseConfig(
        cam_pos_sigma=0.01,
        cam_rpy_sigma=0.03,
        fov_range=(52.0, 58.0),
        flip=0.2,
        failure=0.05,
        depth_sigma=0.005,
    )


def randomize_camera(base: CameraModel, cfg: VisionNoiseConfig, rng) -> CameraModel:
    """Perturbed copy of the camera; an all-zero config returns it unchanged
    and consumes no randomness."""
    pos = base.position
    rpy = base.rpy
    fov = base.fov_deg
    if cfg.cam_pos_sigma > 0:
        pos = pos + rng.normal(0.0, cfg.cam_pos_sigma, 3)
    if cfg.cam_rpy_sigma > 0:
        rpy = rpy + rng.normal(0.0, cfg.cam_rpy_sigma, 3)
    if cfg.fov_range is not None:
        fov = float(rng.uniform(cfg.fov_range[0], cfg.fov_range[1]))
    return replace(base, position=pos, rpy=rpy, fov_deg=fov)


def render_depth(
    camera: CameraModel, obj_pos, obj_quat, shape: ObjectShape, scale: float = 1.0
) -> np.ndarray:
    """Ray-cast the object's mesh; (res, res) ray depths in meters, miss = 0.

    Only the object is rendered (ground-truth segmentation); hits outside
    [near, far] count as misses, so an object behind the camera simply gives
    an all-zero frame.
    """
    obj_pos = np.asarray(obj_pos, dtype=float).reshape(3)
    rot = quat_to_mat(np.asarray(obj_quat, dtype=float).reshape(4))
    res = camera.resolution
    frame = np.zeros((res, res))

    # Work in the object's unit-mesh frame: one shared ray origin, unit
    # directions, and world depth = scale * local depth.
    origin = rot.T @ (camera.position - obj_pos) / scale
    dirs = camera.ray_directions() @ rot

    # Bounding-sphere reject before any triangle math.
    radius = float(np.linalg.norm(shape.vertices, axis=1).max()) * 1.0001
    t_ca = -(dirs @ origin)
    miss2 = float(origin @ origin) - t_ca**2
    live = (miss2 <= radius * radius) & (t_ca + radius > camera.near / scale)
    if not live.any():
        return frame
    idx = np.flatnonzero(live)

    v0 = shape.vertices[shape.faces[:, 0]]
    e1 = shape.vertices[shape.faces[:, 1]] - v0
    e2 = shape.vertices[shape.faces[:, 2]] - v0
    tvec = origin - v0
    # Single-origin Moller-Trumbore: with a common origin the per-triangle
    # vectors are ray independent, so det/u/v are three (rays x tris) matmuls.
    m_det = np.cross(e2, e1)
    m_u = np.cross(e2, tvec)
    qvec = np.cross(tvec, e1)
    t_num = np.einsum("ij,ij->i", e2, qvec)

    best = np.full(idx.size, np.inf)
    for s in range(0, idx.size, 2048):
        d = dirs[idx[s : s + 2048]]
        det = d @ m_det.T
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            u = (d @ m_u.T) * inv
            v = (d @ qvec.T) * inv
            t = t_num * inv
        # Slack on the barycentric tests keeps shared edges watertight; a
        # grazing ray that squeezes between two faces would otherwise record
        # only its back-face exit.
        ok = (
            (np.abs(det) > 1e-12)
            & (u >= -1e-9)
            & (v >= -1e-9)
            & (u + v <= 1.0 + 1e-9)
            & (t * scale >= camera.near)
            & (t * scale <= camera.far)
        )
        t = np.where(ok, t, np.inf)
        best[s : s + 2048] = t.min(axis=1) * scale

    flat = frame.ravel()
    hit = np.isfinite(best)
    flat[idx[hit]] = best[hit]
    return frame


def corrupt_vision(frame: np.ndarray, cfg: VisionNoiseConfig, rng) -> np.ndarray:
    """Apply segmentation failure, pixel flips, and depth noise to a frame.

    With probability ``failure`` the whole frame is zeroed.  Otherwise each
    pixel's foreground membership flips with probability ``flip``; pixels
    flipped into the foreground take the nearest foreground depth (mask
    bleed), and every resulting foreground pixel gets additive gaussian
    depth noise.  An all-zero config is a bitwise no-op.
    """
    frame = np.asarray(frame, dtype=float)
    if cfg.failure > 0 and rng.random() < cfg.failure:
        return np.zeros_like(frame)
    out = frame.copy()
    fg = frame > 0.0
    if cfg.flip > 0:
        flips = rng.random(frame.shape) < cfg.flip
        out[fg & flips] = 0.0
        fill = ~fg & flips
        if fill.any() and fg.any():
            _, (ii, jj) = distance_transform_edt(~fg, return_indices=True)
            out[fill] = frame[ii[fill], jj[fill]]
        fg = out > 0.0
    if cfg.depth_sigma > 0:
        noise = rng.normal(0.0, cfg.depth_sigma, frame.shape)
        out[fg] = np.maximum(out[fg] + noise[fg], 1e-6)
    return out


def write_depth_pgm(path, frame: np.ndarray) -> None:
    """Dump a depth frame as 16-bit binary PGM, one count per millimeter."""
    frame = np.asarray(frame)
    if frame.ndim != 2:
        raise DimensionError(f"depth frame must be 2D, got shape {frame.shape}")
    mm = np.clip(np.rint(frame * 1000.0), 0, 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{frame.shape[1]} {frame.shape[0]}\n65535\n".encode())
        fh.write(mm.tobytes())


def read_depth_pgm(path) -> np.ndarray:
    """Read a depth PGM written by ``write_depth_pgm`` back into meters."""
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise ConfigError(f"{path} is not a binary PGM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 65535:
        raise ConfigError(f"{path}: expected 16-bit depth PGM, maxval {maxval}")
    px = np.frombuffer(data, dtype=">u2", offset=pos + 1, count=w * h)
    return px.reshape(h, w).astype(float) / 1000.0
