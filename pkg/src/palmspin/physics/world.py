"""Batched rigid-body world: one free object vs four fingertips and a palm.

State is struct-of-arrays over n environments so a whole batch advances with
a fixed sequence of numpy ops.  An environment stepped alone is bitwise
identical to the same environment inside a larger batch: every reduction
runs over fixed-size non-batch axes.

Integration is semi-implicit Euler at 200 Hz.  Two stiff terms are treated
implicitly in velocity (contact normal springs and joint damping); this
changes only the discretization, not the modeled forces, and preserves the
static force balance k_n * d = m * g at rest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..errors import ContractError, ShapeDataError, SimulationDivergedError
from .collision import pad_hulls
from .hand import HandModel, default_hand
from .rotation import cross, dot_last, quat_exp, quat_mul, quat_normalize, quat_to_mat

PALM_SENTINEL = -1


@dataclass
class PhysicsConfig:
    dt: float = 1.0 / 200.0
    substeps: int = 10                  # physics substeps per control step
    gravity: float = 9.81
    k_n: float = 3000.0                 # contact normal stiffness, N/m
    c_n: float = 3.0                    # contact normal damping, N s/m
    k_t: float = 100.0                  # friction regularization, N s/m
    tau_max: float = 0.7                # joint torque clamp, N m
    joint_inertia: float = 1e-4         # per-joint inertia, kg m^2
    palm_x: tuple = (-0.12, 0.22)       # palm rectangle, meters
    palm_y: tuple = (-0.14, 0.14)
    fall_z: float = 0.0                 # object CoM below this counts as fallen
    dist_scale: float = 2.0             # disturbance magnitude = scale * mass
    dist_decay: float = 0.9
    dist_interval: float = 0.08         # seconds per decay factor
    dist_prob: float = 0.25

    @property
    def dt_control(self) -> float:
        return self.dt * self.substeps


@dataclass
class ShapeTable:
    """Padded per-shape geometry shared by all environments."""

    hull_n: np.ndarray       # (S, F, 3)
    hull_b: np.ndarray       # (S, F)
    hull_verts: np.ndarray   # (S, V, 3) padded by repeating vertex 0
    volume: np.ndarray       # (S,) unit-scale volumes
    centroid: np.ndarray     # (S, 3) unit-scale centroids
    inertia: np.ndarray      # (S, 3, 3) unit-density inertia about centroid

    @classmethod
    def from_shapes(cls, shapes) -> "ShapeTable":
        if not shapes:
            raise ShapeDataError("shape table needs at least one shape")
        hull_n, hull_b = pad_hulls(
            [s.hull_normals for s in shapes], [s.hull_offsets for s in shapes]
        )
        vmax = max(len(s.hull_vertices) for s in shapes)
        verts = np.stack(
            [
                np.concatenate(
                    [s.hull_vertices,
                     np.repeat(s.hull_vertices[:1], vmax - len(s.hull_vertices), axis=0)]
                )
                for s in shapes
            ]
        )
        return cls(
            hull_n=hull_n,
            hull_b=hull_b,
            hull_verts=verts,
            volume=np.array([s.volume for s in shapes], dtype=float),
            centroid=np.stack([np.asarray(s.centroid, dtype=float) for s in shapes]),
            inertia=np.stack([np.asarray(s.inertia_unit, dtype=float) for s in shapes]),
        )


class ContactBatch:
    """Struct-of-arrays contact report for one substep.

    Slots 0..3 are fingertips, slot 4 the palm.  Normals point along the
    force applied to the object (into the object for fingertips, +z for the
    palm).
    """

    __slots__ = ("active", "point", "normal", "force", "penetration")

    def __init__(self, active, point, normal, force, penetration):
        self.active = active
        self.point = point
        self.normal = normal
        self.force = force
        self.penetration = penetration

    def count(self) -> np.ndarray:
        return self.active.sum(axis=1)

    def events(self, env: int) -> List["ContactEvent"]:
        out = []
        for s in range(5):
            if self.active[env, s]:
                out.append(
                    ContactEvent(
                        finger=(s if s < 4 else PALM_SENTINEL),
                        point=self.point[env, s].copy(),
                        normal=self.normal[env, s].copy(),
                        force=float(self.force[env, s]),
                        penetration=float(self.penetration[env, s]),
                    )
                )
        return out


@dataclass
class ContactEvent:
    finger: int              # 0..3, or PALM_SENTINEL for the palm
    point: np.ndarray        # world frame, meters
    normal: np.ndarray       # unit, force direction on the object
    force: float             # normal force, N >= 0
    penetration: float       # meters >= 0


def pd_torque(hand_state) -> np.ndarray:
    """tau = kp (q_target - q) - kd qdot, clamped to +-tau_max.

    hand_state needs q, qdot, q_target, kp, kd arrays and tau_max.  This is
    the commanded torque used for rewards and logging; the integrator applies
    the same spring but handles the damping term implicitly.
    """
    tau = hand_state.kp * (hand_state.q_target - hand_state.q) - hand_state.kd * hand_state.qdot
    return np.clip(tau, -hand_state.tau_max, hand_state.tau_max)


class World:
    """n environments stepped in lockstep.

    Per-environment RNG streams are seeded with master_seed XOR global env
    index, so sharding a batch across workers cannot change any stream.
    """

    def __init__(
        self,
        table: ShapeTable,
        n: int,
        config: Optional[PhysicsConfig] = None,
        hand: Optional[HandModel] = None,
        seed: int = 0,
        env_offset: int = 0,
    ):
        self.cfg = config or PhysicsConfig()
        self.hand = hand or default_hand()
        self.table = table
        self.n = n
        self.env_indices = np.arange(env_offset, env_offset + n)
        self.rngs = [
            np.random.Generator(np.random.PCG64(seed ^ int(i))) for i in self.env_indices
        ]

        # object state
        self.obj_pos = np.zeros((n, 3))
        self.obj_quat = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1))
        self.obj_v = np.zeros((n, 3))
        self.obj_L = np.zeros((n, 3))            # angular momentum about CoM
        self.obj_omega = np.zeros((n, 3))

        # hand state
        self.q = np.zeros((n, 16))
        self.qdot = np.zeros((n, 16))
        self.q_target = np.zeros((n, 16))
        self.kp = np.full((n, 16), 3.0)
        self.kd = np.full((n, 16), 0.1)
        self.tau_max = self.cfg.tau_max

        # per-env physical parameters
        self.shape_idx = np.zeros(n, dtype=int)
        self.mass = np.full(n, 0.1)
        self.com_body = np.zeros((n, 3))         # CoM in (scaled) mesh frame
        self.friction = np.full(n, 1.0)
        self.restitution = np.zeros(n)
        self.scale = np.ones(n)

        # disturbance
        self.dist_force = np.zeros((n, 3))
        self.dist_age = np.zeros(n)

        self.step_index = 0
        self._R = quat_to_mat(self.obj_quat)
        self._refresh_geometry()

    # ---- setup -----------------------------------------------------------

    def set_object_params(
        self,
        shape_idx,
        scale,
        mass,
        com_offset=None,
        friction=None,
        restitution=None,
    ):
        """Install per-env object parameters and rebuild cached geometry."""

        def vec(x, dtype=float):
            arr = np.array(x, dtype=dtype)
            return np.full(self.n, arr, dtype=dtype) if arr.ndim == 0 else arr

        self.shape_idx = vec(shape_idx, int)
        self.scale = vec(scale)
        self.mass = vec(mass)
        if friction is not None:
            self.friction = vec(friction)
        if restitution is not None:
            self.restitution = vec(restitution)
        offset = 0.0 if com_offset is None else np.asarray(com_offset, dtype=float)
        self.com_body = self.scale[:, None] * self.table.centroid[self.shape_idx] + offset
        self._refresh_geometry()

    def _refresh_geometry(self):
        idx = self.shape_idx
        s = self.scale
        self.hull_n_env = self.table.hull_n[idx]
        self.hull_nT_env = np.ascontiguousarray(self.hull_n_env.transpose(0, 2, 1))
        self.hull_b_env = self.table.hull_b[idx] * s[:, None]
        self.verts_env = self.table.hull_verts[idx] * s[:, None, None]
        # Persistent buffers for the two large per-substep products; fresh
        # allocations this size would thrash the allocator every step.
        F = self.hull_b_env.shape[1]
        V = self.verts_env.shape[1]
        self._buf_d = np.empty((self.n, 4, F))
        self._buf_vz = np.empty((self.n, V, 1))
        # Inertia about the CoM in the mesh frame: unit-density unit-scale
        # inertia rescaled to the target mass, I = m s^2 (I_unit / V_unit).
        # The randomized CoM offset translates the tensor with the CoM.
        per_mass = self.table.inertia[idx] / self.table.volume[idx, None, None]
        I_b = self.mass[:, None, None] * (s ** 2)[:, None, None] * per_mass
        self.I_binv = np.linalg.inv(I_b)

    def set_object_state(self, pos, quat, v=None, omega=None):
        self.obj_pos = np.array(pos, dtype=float).reshape(self.n, 3)
        self.obj_quat = quat_normalize(np.array(quat, dtype=float).reshape(self.n, 4))
        self.obj_v = (
            np.zeros((self.n, 3)) if v is None else np.array(v, dtype=float).reshape(self.n, 3)
        )
        om = (
            np.zeros((self.n, 3))
            if omega is None
            else np.array(omega, dtype=float).reshape(self.n, 3)
        )
        R = quat_to_mat(self.obj_quat)
        I_b = np.linalg.inv(self.I_binv)
        self.obj_L = np.einsum(
            "nij,nj->ni", R, np.einsum("nij,nj->ni", I_b, np.einsum("nji,nj->ni", R, om))
        )
        self.obj_omega = om.copy()
        self._R = R

    def set_joint_state(self, q, qdot=None, q_target=None):
        self.q = np.array(q, dtype=float).reshape(self.n, 16)
        self.qdot = (
            np.zeros((self.n, 16))
            if qdot is None
            else np.array(qdot, dtype=float).reshape(self.n, 16)
        )
        self.q_target = (
            self.q.copy()
            if q_target is None
            else np.array(q_target, dtype=float).reshape(self.n, 16)
        )

    def set_gains(self, kp, kd):
        self.kp = np.broadcast_to(np.asarray(kp, dtype=float), (self.n, 16)).copy()
        self.kd = np.broadcast_to(np.asarray(kd, dtype=float), (self.n, 16)).copy()

    # ---- per-env setters (partial resets) --------------------------------

    def set_object_params_at(
        self,
        idx,
        shape_idx,
        scale,
        mass,
        com_offset=None,
        friction=None,
        restitution=None,
    ):
        """Like set_object_params but only for the envs listed in idx."""
        idx = np.asarray(idx, dtype=int)
        sidx = np.asarray(shape_idx, dtype=int)
        s = np.asarray(scale, dtype=float)
        self.shape_idx[idx] = sidx
        self.scale[idx] = s
        self.mass[idx] = np.asarray(mass, dtype=float)
        if friction is not None:
            self.friction[idx] = np.asarray(friction, dtype=float)
        if restitution is not None:
            self.restitution[idx] = np.asarray(restitution, dtype=float)
        offset = 0.0 if com_offset is None else np.asarray(com_offset, dtype=float)
        self.com_body[idx] = s[:, None] * self.table.centroid[sidx] + offset
        self.hull_n_env[idx] = self.table.hull_n[sidx]
        self.hull_nT_env[idx] = np.swapaxes(self.table.hull_n[sidx], -1, -2)
        self.hull_b_env[idx] = self.table.hull_b[sidx] * s[:, None]
        self.verts_env[idx] = self.table.hull_verts[sidx] * s[:, None, None]
        per_mass = self.table.inertia[sidx] / self.table.volume[sidx, None, None]
        I_b = self.mass[idx, None, None] * (s ** 2)[:, None, None] * per_mass
        self.I_binv[idx] = np.linalg.inv(I_b)

    def set_object_state_at(self, idx, pos, quat, v=None, omega=None):
        idx = np.asarray(idx, dtype=int)
        k = len(idx)
        self.obj_pos[idx] = np.asarray(pos, dtype=float).reshape(k, 3)
        quat = quat_normalize(np.asarray(quat, dtype=float).reshape(k, 4))
        self.obj_quat[idx] = quat
        self.obj_v[idx] = (
            np.zeros((k, 3)) if v is None else np.asarray(v, dtype=float).reshape(k, 3)
        )
        om = (
            np.zeros((k, 3))
            if omega is None
            else np.asarray(omega, dtype=float).reshape(k, 3)
        )
        R = quat_to_mat(quat)
        I_b = np.linalg.inv(self.I_binv[idx])
        self.obj_L[idx] = np.einsum(
            "nij,nj->ni", R, np.einsum("nij,nj->ni", I_b, np.einsum("nji,nj->ni", R, om))
        )
        self.obj_omega[idx] = om
        self._R[idx] = R
        self.dist_force[idx] = 0.0

    def set_joint_state_at(self, idx, q, qdot=None, q_target=None):
        idx = np.asarray(idx, dtype=int)
        k = len(idx)
        q = np.asarray(q, dtype=float).reshape(k, 16)
        self.q[idx] = q
        self.qdot[idx] = (
            np.zeros((k, 16)) if qdot is None else np.asarray(qdot, dtype=float).reshape(k, 16)
        )
        self.q_target[idx] = (
            q if q_target is None else np.asarray(q_target, dtype=float).reshape(k, 16)
        )

    def set_gains_at(self, idx, kp, kd):
        idx = np.asarray(idx, dtype=int)
        self.kp[idx] = np.asarray(kp, dtype=float)
        self.kd[idx] = np.asarray(kd, dtype=float)

    # ---- queries ---------------------------------------------------------

    def com_world(self) -> np.ndarray:
        return self.obj_pos + np.einsum("nij,nj->ni", self._R, self.com_body)

    def fallen(self) -> np.ndarray:
        return self.com_world()[:, 2] < self.cfg.fall_z

    def fingertips(self) -> np.ndarray:
        return self.hand.fk(self.q).tips

    def tip_surface_distance(self) -> np.ndarray:
        """(n, 4) distance from each fingertip sphere to the object surface.

        Zero when touching or penetrating.
        """
        tips = self.hand.fk(self.q).tips
        rel = tips - self.obj_pos[:, None, :]
        tips_local = rel @ self._R
        d_all = np.matmul(tips_local, self.hull_nT_env) - self.hull_b_env[:, None, :]
        sdf = d_all.max(axis=-1)
        return np.maximum(0.0, sdf - self.hand.tip_radius)

    # ---- dynamics --------------------------------------------------------

    def step(self, dt: Optional[float] = None) -> ContactBatch:
        """Advance one physics substep and report contacts."""
        cfg = self.cfg
        dt = cfg.dt if dt is None else dt
        if dt <= 0:
            raise ContractError("dt must be positive")
        n = self.n
        m = self.mass[:, None]

        fk = self.hand.fk(self.q)
        tip_v = self.hand.tip_velocities(fk, self.qdot)
        R = self._R
        com_w = self.obj_pos + np.einsum("nij,nj->ni", R, self.com_body)

        # fingertip spheres vs hull, queried in the (scaled) mesh frame;
        # x @ R applies R^T to row vectors
        rel = fk.tips - self.obj_pos[:, None, :]
        tips_local = rel @ R
        d_all = np.matmul(tips_local, self.hull_nT_env, out=self._buf_d)
        d_all -= self.hull_b_env[:, None, :]
        face = np.argmax(d_all, axis=-1)
        dist = np.take_along_axis(d_all, face[:, :, None], axis=-1)[:, :, 0]
        nrm_local = self.hull_n_env[np.arange(n)[:, None], face]
        nrm_w = nrm_local @ R.transpose(0, 2, 1)
        pen_tip = self.hand.tip_radius - dist
        p_tip = fk.tips - nrm_w * dist[:, :, None]

        # palm plane vs lowest hull vertex; only the world z of each vertex
        # is needed to find the support point
        r3 = R[:, 2, :]
        vz = np.matmul(self.verts_env, r3[:, :, None], out=self._buf_vz)[:, :, 0]
        vz += self.obj_pos[:, 2:3]
        low = np.argmin(vz, axis=1)
        v_low = self.verts_env[np.arange(n), low]
        p_palm = np.einsum("nij,nj->ni", R, v_low) + self.obj_pos
        pen_palm = -p_palm[:, 2]
        in_rect = (
            (p_palm[:, 0] > cfg.palm_x[0])
            & (p_palm[:, 0] < cfg.palm_x[1])
            & (p_palm[:, 1] > cfg.palm_y[0])
            & (p_palm[:, 1] < cfg.palm_y[1])
        )

        # assemble the five contact slots
        n_dir = np.empty((n, 5, 3))
        n_dir[:, :4] = -nrm_w
        n_dir[:, 4] = np.array([0.0, 0.0, 1.0])
        p_c = np.concatenate([p_tip, p_palm[:, None, :]], axis=1)
        pen = np.concatenate([pen_tip, pen_palm[:, None]], axis=1)
        active = pen > 0.0
        # the palm supports only while the CoM is above the plane; an object
        # that has passed through (teleports, bad clips) must fall, not be
        # catapulted back by a meter-deep spring
        active[:, 4] &= in_rect & (com_w[:, 2] > 0.0)
        v_other = np.concatenate([tip_v, np.zeros((n, 1, 3))], axis=1)

        omega = np.einsum(
            "nij,nj->ni",
            R,
            np.einsum("nij,nj->ni", self.I_binv, np.einsum("nji,nj->ni", R, self.obj_L)),
        )
        r_c = p_c - com_w[:, None, :]
        v_pt = self.obj_v[:, None, :] + cross(omega[:, None, :], r_c)

        F_ext = np.zeros((n, 3))
        F_ext[:, 2] = -cfg.gravity * self.mass
        F_ext = F_ext + self.dist_force

        # implicit normal spring: solve the contact-frame velocity update,
        # then evaluate f_n = k_n d + c_n ddot at the new velocity. The
        # update is taken against the effective mass of the pair: the
        # fingertip chain has tip-space inertia around I_j / l^2 ~ 10 g, so
        # treating the tip as kinematic leaves the coupled oscillation
        # under-resolved at this rate and the grip chatters.
        jn = (fk.jac * n_dir[:, :4, :, None]).sum(axis=2)
        w_tip = (jn * jn).sum(axis=-1) / cfg.joint_inertia
        w_pair = 1.0 / m
        w_pair = np.repeat(w_pair, 5, axis=1).reshape(n, 5)
        w_pair[:, :4] += w_tip
        m_eff = 1.0 / w_pair
        ddot = dot_last(v_other - v_pt, n_dir)
        fn_ext = dot_last(F_ext[:, None, :], n_dir)
        denom = 1.0 + dt * (cfg.k_n * dt + cfg.c_n) / m_eff
        ddot_new = (ddot - (dt / m) * fn_ext - (dt / m_eff) * cfg.k_n * pen) / denom
        f_n = np.maximum(0.0, cfg.k_n * pen + (cfg.k_n * dt + cfg.c_n) * ddot_new)
        f_n = np.where(active, f_n, 0.0)

        # regularized Coulomb friction, implicit in the tangential velocity
        v_rel = v_pt - v_other
        v_t = v_rel - dot_last(v_rel, n_dir)[:, :, None] * n_dir
        vt_norm = np.sqrt(dot_last(v_t, v_t))
        kt_eff = cfg.k_t / (1.0 + dt * cfg.k_t / m_eff)
        slope = np.minimum(self.friction[:, None] * f_n / (vt_norm + 1e-9), kt_eff)
        f_t = -slope[:, :, None] * v_t

        F_c = n_dir * f_n[:, :, None] + f_t
        torque_c = cross(r_c, F_c)
        F_tot = F_ext + F_c.sum(axis=1)
        T_tot = torque_c.sum(axis=1)

        # joint update: contact reactions through J^T, implicit damping
        tau_contact = self.hand.contact_torques(fk, -F_c[:, :4])
        tau_cmd = np.clip(
            self.kp * (self.q_target - self.q), -self.tau_max, self.tau_max
        )
        I_j = cfg.joint_inertia
        qdot_new = (self.qdot + dt * (tau_cmd + tau_contact) / I_j) / (
            1.0 + dt * self.kd / I_j
        )
        q_new = self.q + dt * qdot_new
        q_clipped = self.hand.clip_limits(q_new)
        qdot_new = np.where(q_clipped == q_new, qdot_new, 0.0)

        # object semi-implicit update; orientation via the exponential map
        v_new = self.obj_v + dt * (F_tot / m)
        com_new = com_w + dt * v_new
        L_new = self.obj_L + dt * T_tot
        omega_new = np.einsum(
            "nij,nj->ni",
            R,
            np.einsum("nij,nj->ni", self.I_binv, np.einsum("nji,nj->ni", R, L_new)),
        )
        quat_new = quat_normalize(quat_mul(quat_exp(omega_new * dt), self.obj_quat))
        R_new = quat_to_mat(quat_new)
        pos_new = com_new - np.einsum("nij,nj->ni", R_new, self.com_body)

        self.step_index += 1
        if not (
            np.isfinite(v_new).all()
            and np.isfinite(L_new).all()
            and np.isfinite(qdot_new).all()
        ):
            raise SimulationDivergedError(self.step_index)

        self.q = q_clipped
        self.qdot = qdot_new
        self.obj_v = v_new
        self.obj_L = L_new
        self.obj_quat = quat_new
        self.obj_pos = pos_new
        self.obj_omega = omega_new
        self._R = R_new

        return ContactBatch(active, p_c, n_dir, f_n, np.maximum(pen, 0.0))

    def control_step(self, q_target=None) -> ContactBatch:
        """Run one control period (substeps x dt); returns final contacts."""
        if q_target is not None:
            self.q_target = np.asarray(q_target, dtype=float).reshape(self.n, 16)
        contacts = None
        for _ in range(self.cfg.substeps):
            contacts = self.step()
        return contacts

    def sample_disturbance(self):
        """Per control step: resample with p, else geometric decay."""
        cfg = self.cfg
        decay = cfg.dist_decay ** (cfg.dt_control / cfg.dist_interval)
        for i in range(self.n):
            rng = self.rngs[i]
            if rng.uniform() < cfg.dist_prob:
                direction = rng.normal(size=3)
                direction /= np.linalg.norm(direction) + 1e-12
                self.dist_force[i] = cfg.dist_scale * self.mass[i] * direction
                self.dist_age[i] = 0.0
            else:
                self.dist_force[i] *= decay
                self.dist_age[i] += cfg.dt_control
