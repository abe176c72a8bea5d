"""Discretized touch sensing on the fingertips.

A fingertip reports contact as one of 8 angular sectors on the plane
orthogonal to the last link axis, giving an N_c x 9 frame per step (one-hot
sector plus finger index).  Binary and full-feature variants exist as
ablation inputs; ``encode_touch`` turns any variant into a fixed 32-vector
by mean pooling per-contact MLP features.
"""

from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np

from ..errors import ConfigError, ContractError, DimensionError
from ..nn import tensor as T
from ..nn.blocks import MLPSpec, init_mlp, mlp_forward
from ..nn.params import ParameterSet
from ..physics.hand import FKResult
from ..physics.world import ContactEvent

N_SECTORS = 8
TOUCH_DIM = 32

TOUCH_MODES = ("none", "binary", "location", "full")

# Per-contact feature widths.  "binary" collapses the whole frame into one
# per-finger bit vector, so its row count is 1 regardless of N_c.
_MODE_DIMS = {"binary": 4, "location": 9, "full": 8}


def sector_of(u: float, v: float) -> int:
    """Map a projected 2D point to one of 8 equal angular sectors.

    Sector 0 spans [-pi/8, pi/8) around +x and sectors count
    counterclockwise, so +y lands in sector 2.  Boundaries belong to the
    upper sector.  The origin has no angle; it is assigned sector 0.
    """
    if u == 0.0 and v == 0.0:
        return 0
    theta = float(np.arctan2(v, u))
    return int(np.floor((theta + np.pi / 8) / (np.pi / 4))) % N_SECTORS


def discretize_contact(contact: ContactEvent, fk: FKResult, env: int = 0) -> int:
    """Sector index of a fingertip contact.

    The contact point is expressed in the fingertip frame and projected onto
    the plane orthogonal to the last link axis (tip frame column 0); the
    remaining two tip-frame axes provide the plane's x and y.
    """
    f = contact.finger
    if not 0 <= f <= 3:
        raise ContractError(f"contact on finger {f} is not a fingertip contact")
    rot = fk.tip_rot[env, f]
    d = np.asarray(contact.point, dtype=float) - fk.tips[env, f]
    return sector_of(float(d @ rot[:, 1]), float(d @ rot[:, 2]))


def tactile_frame(contacts: Sequence[ContactEvent], fk: FKResult, env: int = 0) -> np.ndarray:
    """(N_c, 9) frame: one-hot sector (8) + finger index, fingertips only.

    Palm contacts carry no tactile site and are skipped.
    """
    rows = []
    for c in contacts:
        if not 0 <= c.finger <= 3:
            continue
        row = np.zeros(9)
        row[discretize_contact(c, fk, env)] = 1.0
        row[8] = float(c.finger)
        rows.append(row)
    if not rows:
        return np.zeros((0, 9))
    return np.stack(rows)


def touch_features(
    contacts: Sequence[ContactEvent], fk: FKResult, env: int = 0, mode: str = "location"
) -> np.ndarray:
    """Per-contact feature rows for ``encode_touch`` in the given mode.

    location: the (N_c, 9) tactile frame.
    binary:   a single row of 4 per-finger contact bits (empty if no contact).
    full:     (N_c, 8) = tip-frame position (3) + tip-frame normal (3) +
              normal force (1) + finger index (1).
    none:     an empty (0, 0) array.
    """
    if mode not in TOUCH_MODES:
        raise ConfigError(f"unknown touch mode '{mode}', expected one of {TOUCH_MODES}")
    if mode == "none":
        return np.zeros((0, 0))
    tips = [c for c in contacts if 0 <= c.finger <= 3]
    if mode == "location":
        return tactile_frame(tips, fk, env)
    if not tips:
        return np.zeros((0, _MODE_DIMS[mode]))
    if mode == "binary":
        bits = np.zeros((1, 4))
        for c in tips:
            bits[0, c.finger] = 1.0
        return bits
    rows = np.zeros((len(tips), 8))
    for i, c in enumerate(tips):
        rot = fk.tip_rot[env, c.finger]
        d = np.asarray(c.point, dtype=float) - fk.tips[env, c.finger]
        rows[i, 0:3] = rot.T @ d
        rows[i, 3:6] = rot.T @ np.asarray(c.normal, dtype=float)
        rows[i, 6] = c.force
        rows[i, 7] = float(c.finger)
    return rows


def touch_mlp_spec(mode: str) -> Optional[MLPSpec]:
    """Shared per-contact MLP spec for a mode; None when no net is needed."""
    if mode not in TOUCH_MODES:
        raise ConfigError(f"unknown touch mode '{mode}', expected one of {TOUCH_MODES}")
    if mode == "none":
        return None
    # Activation after the last layer too, so features pooled across varying
    # contact counts live in the same range.
    return MLPSpec(_MODE_DIMS[mode], [32, 32, TOUCH_DIM], "relu", activate_final=True)


def init_touch(params: ParameterSet, prefix: str, mode: str, rng) -> None:
    spec = touch_mlp_spec(mode)
    if spec is not None:
        init_mlp(params, prefix, spec, rng)


def encode_touch(params: ParameterSet, feats, mode: str, prefix: str = "touch"):
    """Mean-pooled per-contact MLP features, shape (TOUCH_DIM,).

    ``feats`` is a (N_c, d) row array from ``touch_features``.  Zero contacts
    give a zero vector in every mode, which makes "none" equivalent to an
    always-empty frame.
    """
    spec = touch_mlp_spec(mode)
    feats = np.asarray(feats, dtype=float)
    if spec is None or feats.shape[0] == 0:
        return T.as_tensor(np.zeros(TOUCH_DIM))
    if feats.ndim != 2 or feats.shape[1] != spec.in_dim:
        raise DimensionError(
            f"touch mode '{mode}' expects (N_c, {spec.in_dim}) features, got {feats.shape}"
        )
    h = mlp_forward(params, feats, spec, prefix)
    return T.tmean(h, axis=0)


def encode_touch_batch(
    params: ParameterSet, feats_list: List[np.ndarray], mode: str, prefix: str = "touch"
):
    """Encode one frame per environment into a (n, TOUCH_DIM) tensor.

    All contacts are run through the MLP in a single forward pass and mean
    pooled per environment with a constant averaging matrix, so the autodiff
    graph stays one matmul deep regardless of n.
    """
    n = len(feats_list)
    spec = touch_mlp_spec(mode)
    counts = [int(np.asarray(f).shape[0]) for f in feats_list]
    total = sum(counts)
    if spec is None or total == 0:
        return T.as_tensor(np.zeros((n, TOUCH_DIM)))
    stacked = np.concatenate(
        [np.asarray(f, dtype=float) for f in feats_list if np.asarray(f).shape[0] > 0]
    )
    if stacked.shape[1] != spec.in_dim:
        raise DimensionError(
            f"touch mode '{mode}' expects width {spec.in_dim} features, got {stacked.shape[1]}"
        )
    pool = np.zeros((n, total))
    at = 0
    for i, c in enumerate(counts):
        if c:
            pool[i, at : at + c] = 1.0 / c
            at += c
    h = mlp_forward(params, stacked, spec, prefix)
    return T.matmul(T.as_tensor(pool), h)
