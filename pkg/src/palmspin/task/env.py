"""Vectorized rotation environment.

Each env owns a seed-derived sampling stream keyed by its global index, so
a batch of n envs reproduces, per env, exactly the trajectory of a solo
run with that env's index regardless of how envs are sharded.
"""

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import ConfigError, ContractError
from ..objects.grasps import GraspPose, bucket_of
from ..physics.world import PhysicsConfig, ShapeTable, World, pd_torque
from .reward import RewardBreakdown, RewardCoeffs, compute_reward

OBS_DIM = 96
ACT_DIM = 16

MASS_RANGE = (0.01, 0.25)
COM_RANGE = (-0.01, 0.01)
FRICTION_RANGE = (0.3, 3.0)
SCALE_RANGE = (0.46, 0.68)
KP_RANGE = (2.9, 3.1)
KD_RANGE = (0.09, 0.11)
RESTITUTION_RANGE = (0.0, 0.1)


@dataclass
class PhysicalParams:
    """Struct-of-arrays physical parameters for a batch of envs."""

    mass: np.ndarray          # (n,)
    com_offset: np.ndarray    # (n, 3)
    friction: np.ndarray      # (n,)
    scale: np.ndarray         # (n,)
    restitution: np.ndarray   # (n,)
    kp: np.ndarray            # (n,)
    kd: np.ndarray            # (n,)

    def privileged(self) -> np.ndarray:
        """(n, 7) vector: mass, CoM offset, friction, scale, restitution."""
        return np.concatenate(
            [
                self.mass[:, None],
                self.com_offset,
                self.friction[:, None],
                self.scale[:, None],
                self.restitution[:, None],
            ],
            axis=1,
        )

    @staticmethod
    def empty(n: int) -> "PhysicalParams":
        return PhysicalParams(
            mass=np.full(n, 0.1),
            com_offset=np.zeros((n, 3)),
            friction=np.ones(n),
            scale=np.full(n, 0.57),
            restitution=np.zeros(n),
            kp=np.full(n, 3.0),
            kd=np.full(n, 0.1),
        )


def randomize_physics(rng: np.random.Generator, n: int = 1) -> PhysicalParams:
    """Uniform draws over the documented randomization ranges."""
    return PhysicalParams(
        mass=rng.uniform(*MASS_RANGE, n),
        com_offset=rng.uniform(*COM_RANGE, (n, 3)),
        friction=rng.uniform(*FRICTION_RANGE, n),
        scale=rng.uniform(*SCALE_RANGE, n),
        restitution=rng.uniform(*RESTITUTION_RANGE, n),
        kp=rng.uniform(*KP_RANGE, n),
        kd=rng.uniform(*KD_RANGE, n),
    )


@dataclass
class EnvConfig:
    axis: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    episode_len: int = 400
    fall_z: float = 0.0
    coeffs: RewardCoeffs = field(default_factory=RewardCoeffs)
    curriculum_horizon: int = 500
    incremental: bool = False       # False: absolute affine PD targets
    incremental_scale: float = 0.1  # rad per step in incremental mode
    active_fingers: Tuple[int, ...] = (0, 1, 2, 3)
    grasp_style: str = "air"
    randomize: bool = True
    fixed_params: Optional[Dict[str, float]] = None
    disturbance: bool = True

    def __post_init__(self):
        k = np.asarray(self.axis, dtype=float)
        if abs(np.linalg.norm(k) - 1.0) > 1e-6:
            raise ConfigError(f"axis must be unit length, got {self.axis}")
        if abs(self.episode_len * 0.05 - 20.0) > 1e-9:
            raise ConfigError(
                f"episode length {self.episode_len} x 50 ms control step must equal 20 s"
            )
        bad = [f for f in self.active_fingers if f not in (0, 1, 2, 3)]
        if bad:
            raise ConfigError(f"invalid finger indices {bad}")


def smoke_task_config() -> EnvConfig:
    """Built-in sphere-spin task: one sphere caged on the palm, three
    active fingers, +z axis, fixed mid-range physics."""
    return EnvConfig(
        axis=(0.0, 0.0, 1.0),
        active_fingers=(0, 1, 2),
        grasp_style="rest",
        incremental=True,
        # 0.1 rad/step lets exploration noise rattle the sphere out of the
        # cage within seconds; the smoke cage needs gentler target motion
        incremental_scale=0.03,
        randomize=False,
        fixed_params={"mass": 0.08, "friction": 1.5, "scale": 0.57},
        disturbance=False,
    )


class TrajectoryLogger:
    """Optional JSON-lines audit log of per-step reward breakdowns."""

    def __init__(self, path):
        self.fh = open(path, "w")

    def log(self, step: int, rb: RewardBreakdown, done: np.ndarray):
        for i in range(len(rb.total)):
            rec = {
                "env": i,
                "step": int(step),
                "r_rotr": float(rb.r_rotr[i]),
                "r_rotp": float(rb.r_rotp[i]),
                "r_pose": float(rb.r_pose[i]),
                "r_linvel": float(rb.r_linvel[i]),
                "r_work": float(rb.r_work[i]),
                "r_torque": float(rb.r_torque[i]),
                "total": float(rb.total[i]),
                "done": bool(done[i]),
            }
            self.fh.write(json.dumps(rec) + "\n")

    def close(self):
        self.fh.close()


class RotationEnv:
    """n parallel rotation envs over a shared object set and grasp cache.

    Observations are 96-dim: three control steps of joint positions
    followed by the three preceding actions, oldest first.
    """

    def __init__(
        self,
        shapes,
        grasp_caches: Dict[Tuple[str, int], List[GraspPose]],
        n: int,
        config: Optional[EnvConfig] = None,
        seed: int = 0,
        env_offset: int = 0,
        physics: Optional[PhysicsConfig] = None,
    ):
        self.shapes = list(shapes)
        if not self.shapes:
            raise ConfigError("empty object set")
        self.caches = grasp_caches
        self.cfg = config or EnvConfig()
        self.n = n
        self.seed = seed
        phys = physics or PhysicsConfig()
        phys.fall_z = self.cfg.fall_z
        self.world = World(
            ShapeTable.from_shapes(self.shapes), n, phys, seed=seed, env_offset=env_offset
        )
        self.global_ids = np.arange(env_offset, env_offset + n)
        self.rngs = [np.random.default_rng([seed, int(g)]) for g in self.global_ids]
        self.axis = np.asarray(self.cfg.axis, dtype=float)

        hand = self.world.hand
        self._lo = hand.q_lo
        self._hi = hand.q_hi
        mask = np.zeros(16, dtype=bool)
        for f in self.cfg.active_fingers:
            mask[4 * f : 4 * f + 4] = True
        self._active_mask = mask

        self.q_hist = np.zeros((n, 3, 16))
        self.a_hist = np.zeros((n, 3, 16))
        self.step_count = np.zeros(n, dtype=int)
        self.done_mask = np.ones(n, dtype=bool)  # envs start needing a reset
        self.q_init = np.zeros((n, 16))
        self.shape_choice = np.zeros(n, dtype=int)
        self.params = PhysicalParams.empty(n)
        self.lambda_rotp = 0.0
        self.logger: Optional[TrajectoryLogger] = None

    # ---- lifecycle -------------------------------------------------------

    def set_lambda_rotp(self, lam: float):
        self.lambda_rotp = lam

    def _sample_params(self, rng) -> PhysicalParams:
        p = randomize_physics(rng, 1)
        if not self.cfg.randomize:
            fixed = self.cfg.fixed_params or {}
            p = PhysicalParams.empty(1)
            for name, val in fixed.items():
                if not hasattr(p, name):
                    raise ConfigError(f"unknown fixed physics parameter {name!r}")
                cur = getattr(p, name)
                cur[:] = val
        return p

    def reset(self, env_ids=None) -> np.ndarray:
        """Reset all (default) or selected envs; returns the full obs batch."""
        ids = np.arange(self.n) if env_ids is None else np.asarray(env_ids, dtype=int)
        for i in ids:
            rng = self.rngs[i]
            si = int(rng.integers(len(self.shapes)))
            shape = self.shapes[si]
            p = self._sample_params(rng)
            bucket = bucket_of(float(p.scale[0]))
            key = (shape.shape_id, bucket)
            pool = self.caches.get(key)
            if not pool:
                raise ConfigError(
                    f"no cached grasps for object {shape.shape_id!r} bucket {bucket}"
                )
            g = pool[int(rng.integers(len(pool)))]
            idx = np.array([i])
            self.world.set_object_params_at(
                idx,
                [si],
                p.scale,
                p.mass,
                com_offset=p.com_offset,
                friction=p.friction,
                restitution=p.restitution,
            )
            self.world.set_object_state_at(idx, g.obj_pos, g.obj_quat)
            self.world.set_joint_state_at(idx, g.q, qdot=g.qdot, q_target=g.q_target)
            self.world.set_gains_at(idx, np.full(16, p.kp[0]), np.full(16, p.kd[0]))
            self.shape_choice[i] = si
            for name in ("mass", "friction", "scale", "restitution", "kp", "kd"):
                getattr(self.params, name)[i] = getattr(p, name)[0]
            self.params.com_offset[i] = p.com_offset[0]
            self.q_init[i] = g.q
            self.q_hist[i] = g.q[None, :]
            self.a_hist[i] = 0.0
            self.step_count[i] = 0
            self.done_mask[i] = False
        return self.observe()

    def observe(self) -> np.ndarray:
        return np.concatenate(
            [self.q_hist.reshape(self.n, 48), self.a_hist.reshape(self.n, 48)], axis=1
        )

    # ---- stepping --------------------------------------------------------

    def _targets_from_actions(self, a: np.ndarray) -> np.ndarray:
        a = np.clip(a, -1.0, 1.0)
        if self.cfg.incremental:
            t = self.world.q_target + a * self.cfg.incremental_scale
        else:
            # convex combination is exact at both limits, unlike lo + u*(hi-lo)
            u = 0.5 * (a + 1.0)
            t = (1.0 - u) * self._lo + u * self._hi
        t = np.clip(t, self._lo, self._hi)
        # inactive fingers keep their current (grasp) targets
        return np.where(self._active_mask[None, :], t, self.world.q_target)

    def step(self, actions: np.ndarray):
        """Advance one 50 ms control step.

        Returns (obs, RewardBreakdown, done, info). Stepping an env whose
        previous step reported done is a contract violation.
        """
        if self.done_mask.any():
            bad = np.nonzero(self.done_mask)[0]
            raise ContractError(f"step called on done envs {bad.tolist()}; reset them first")
        actions = np.asarray(actions, dtype=float).reshape(self.n, ACT_DIM)
        w = self.world
        w.q_target = self._targets_from_actions(actions)
        # reward sees the commanded torque at the start of the control step
        tau = pd_torque(w)
        cb = w.control_step()
        if self.cfg.disturbance:
            w.sample_disturbance()

        coeffs = self.cfg.coeffs.with_rotp(self.lambda_rotp)
        rb = compute_reward(
            w.obj_omega, w.obj_v, w.q, self.q_init, tau, w.qdot, self.axis, coeffs
        )
        self.step_count += 1
        fall = w.fallen()
        done = fall | (self.step_count >= self.cfg.episode_len)
        self.done_mask = done

        self.q_hist[:, 0] = self.q_hist[:, 1]
        self.q_hist[:, 1] = self.q_hist[:, 2]
        self.q_hist[:, 2] = w.q
        self.a_hist[:, 0] = self.a_hist[:, 1]
        self.a_hist[:, 1] = self.a_hist[:, 2]
        self.a_hist[:, 2] = np.clip(actions, -1.0, 1.0)

        info = {
            "contact_batch": cb,
            "obj_pos": w.obj_pos.copy(),
            "obj_quat": w.obj_quat.copy(),
            "omega": w.obj_omega.copy(),
            "linvel": w.obj_v.copy(),
            "com": w.com_world(),
            "fall": fall,
            "tau": tau,
            "params": self.params,
            "shape_choice": self.shape_choice.copy(),
        }
        if self.logger is not None:
            self.logger.log(int(self.step_count.max()), rb, done)
        return self.observe(), rb, done, info
