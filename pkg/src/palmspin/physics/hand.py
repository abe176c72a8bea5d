"""Four-chain hand kinematics.

Three fingers and a thumb, four revolute joints each (16 DOF total).  The
palm is the plane z = 0; fingers point +x at the zero pose and curl upward
for negative flexion angles.  All FK is batched over environments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..errors import DimensionError
from .rotation import cross

# Per-finger joint rotation axes: 0 = x, 1 = y, 2 = z.
AXIS_CODES = np.array(
    [
        [2, 1, 1, 1],  # finger 0
        [2, 1, 1, 1],  # finger 1
        [2, 1, 1, 1],  # finger 2
        [0, 2, 1, 1],  # thumb
    ],
    dtype=int,
)

FINGER_BASES = np.array(
    [
        [0.02, -0.05, 0.0],
        [0.02, 0.00, 0.0],
        [0.02, 0.05, 0.0],
        [-0.06, -0.03, 0.0],
    ]
)

LINK_LENGTHS = np.array(
    [
        [0.021, 0.054, 0.038, 0.044],
        [0.021, 0.054, 0.038, 0.044],
        [0.021, 0.054, 0.038, 0.044],
        [0.036, 0.055, 0.038, 0.030],
    ]
)

TIP_RADIUS = 0.0134

# Flexion is negative-up, so the lower bound carries most of the range.
_FINGER_LIMITS = [(-0.47, 0.47), (-2.1, 0.3), (-2.1, 0.3), (-2.1, 0.3)]
_THUMB_LIMITS = [(-1.6, 1.6), (-1.0, 1.0), (-1.8, 1.8), (-1.8, 1.8)]

# For axis code c, the rotation mixes the other two axes (a, b) in cyclic
# order; cos lands on (a,a)/(b,b), +sin on (b,a), -sin on (a,b).
_CYCLIC = {0: (1, 2), 1: (2, 0), 2: (0, 1)}


class FKResult(NamedTuple):
    """Batched forward-kinematics products for all four chains."""

    tips: np.ndarray        # (n, 4, 3) fingertip sphere centers
    tip_rot: np.ndarray     # (n, 4, 3, 3) tip frames (col 0 = chain direction)
    origins: np.ndarray     # (n, 4, 4, 3) joint pivot positions
    axes: np.ndarray        # (n, 4, 4, 3) world-frame joint axes
    jac: np.ndarray         # (n, 4, 3, 4) point Jacobian of each tip


@dataclass
class HandModel:
    bases: np.ndarray = field(default_factory=lambda: FINGER_BASES.copy())
    links: np.ndarray = field(default_factory=lambda: LINK_LENGTHS.copy())
    axis_codes: np.ndarray = field(default_factory=lambda: AXIS_CODES.copy())
    tip_radius: float = TIP_RADIUS

    def __post_init__(self):
        lims = _FINGER_LIMITS * 3 + _THUMB_LIMITS
        self.q_lo = np.array([l[0] for l in lims])
        self.q_hi = np.array([l[1] for l in lims])
        # Rotating R about local axis c only mixes the other two columns
        # (a, b): Ra' = c Ra + s Rb, Rb' = c Rb - s Ra.  Group fingers that
        # share an axis code at each joint so updates stay sliced views.
        self._col_plan = []
        for j in range(4):
            codes = self.axis_codes[:, j]
            plan = []
            start = 0
            for f in range(1, 5):
                if f == 4 or codes[f] != codes[start]:
                    c = codes[start]
                    plan.append((slice(start, f), c, *_CYCLIC[c]))
                    start = f
            self._col_plan.append(plan)

    def fk(self, q: np.ndarray) -> FKResult:
        """Forward kinematics for q of shape (n, 16)."""
        q = np.asarray(q, dtype=float)
        if q.ndim != 2 or q.shape[1] != 16:
            raise DimensionError(f"fk expects (n, 16) joint angles, got {q.shape}")
        n = q.shape[0]
        qf = q.reshape(n, 4, 4)
        cos = np.cos(qf)
        sin = np.sin(qf)

        rot = np.broadcast_to(np.eye(3), (n, 4, 3, 3)).copy()
        pos = np.broadcast_to(self.bases, (n, 4, 3)).copy()
        origins = np.empty((n, 4, 4, 3))
        axes = np.empty((n, 4, 4, 3))

        for j in range(4):
            origins[:, :, j, :] = pos
            for sl, c, a, b in self._col_plan[j]:
                cj = cos[:, sl, j, None]
                sj = sin[:, sl, j, None]
                ca = rot[:, sl, :, a]
                cb = rot[:, sl, :, b]
                new_a = cj * ca + sj * cb
                rot[:, sl, :, b] = cj * cb - sj * ca
                rot[:, sl, :, a] = new_a
                # The joint's own axis (column c) is unchanged by its rotation.
                axes[:, sl, j, :] = rot[:, sl, :, c]
            pos = pos + self.links[None, :, j, None] * rot[:, :, :, 0]

        jac_cols = cross(axes, pos[:, :, None, :] - origins)  # (n, 4, 4, 3)
        jac = np.transpose(jac_cols, (0, 1, 3, 2))
        return FKResult(tips=pos, tip_rot=rot, origins=origins, axes=axes, jac=jac)

    def fingertip_fk(self, q16: np.ndarray, finger: int) -> np.ndarray:
        """Single-pose fingertip position, finger in 0..3."""
        if not 0 <= finger <= 3:
            raise DimensionError(f"finger index {finger} outside 0..3")
        q16 = np.asarray(q16, dtype=float).reshape(1, 16)
        return self.fk(q16).tips[0, finger]

    def tip_velocities(self, fk: FKResult, qdot: np.ndarray) -> np.ndarray:
        """(n, 16) joint rates -> (n, 4, 3) tip linear velocities."""
        qd = qdot.reshape(qdot.shape[0], 4, 4)
        return np.einsum("nfij,nfj->nfi", fk.jac, qd)

    def contact_torques(self, fk: FKResult, tip_forces: np.ndarray) -> np.ndarray:
        """Map world forces on each tip (n, 4, 3) to joint torques (n, 16)."""
        tau = np.einsum("nfij,nfi->nfj", fk.jac, tip_forces)
        return tau.reshape(tau.shape[0], 16)

    def clip_limits(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.q_lo, self.q_hi)


def default_hand() -> HandModel:
    return HandModel()
