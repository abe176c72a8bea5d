"""Rollout storage and generalized advantage estimation."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, DimensionError


class RolloutBuffer:
    """Fixed (horizon, n_envs) storage for one PPO collection phase.

    Alongside observations and actions it keeps the raw privileged inputs
    (phys_pose, shape index, scale) so the update phase can re-encode z_t
    with gradients flowing into the encoder.
    """

    def __init__(self, horizon: int, n_envs: int, obs_dim: int = 96, act_dim: int = 16,
                 z_dim: int = 40, extra_dim: int = 0):
        if horizon < 1 or n_envs < 1:
            raise ContractError("rollout buffer needs horizon >= 1 and n_envs >= 1")
        self.horizon = horizon
        self.n = n_envs
        h, n = horizon, n_envs
        self.obs = np.zeros((h, n, obs_dim))
        self.phys_pose = np.zeros((h, n, 17))
        self.shape_idx = np.zeros((h, n), dtype=int)
        self.scale = np.zeros((h, n))
        self.z = np.zeros((h, n, z_dim))
        self.extra = np.zeros((h, n, extra_dim)) if extra_dim else None
        self.actions = np.zeros((h, n, act_dim))
        self.logp = np.zeros((h, n))
        self.value = np.zeros((h, n))
        self.reward = np.zeros((h, n))
        self.done = np.zeros((h, n), dtype=bool)
        self.t = 0

    @property
    def full(self) -> bool:
        return self.t >= self.horizon

    def add(self, obs, phys_pose, shape_idx, scale, z, actions, logp, value, reward, done,
            extra=None):
        if self.full:
            raise ContractError(f"rollout buffer already holds {self.horizon} steps")
        t = self.t
        self.obs[t] = obs
        self.phys_pose[t] = phys_pose
        self.shape_idx[t] = shape_idx
        self.scale[t] = scale
        self.z[t] = z
        self.actions[t] = actions
        self.logp[t] = logp
        self.value[t] = value
        self.reward[t] = reward
        self.done[t] = done
        if self.extra is not None:
            if extra is None:
                raise DimensionError("buffer configured with extra_dim but no extra given")
            self.extra[t] = extra
        self.t += 1

    def reset(self):
        self.t = 0

    def flat(self, name: str) -> np.ndarray:
        """(horizon, n, ...) field collapsed to (horizon * n, ...)."""
        arr = getattr(self, name)
        return arr.reshape((self.horizon * self.n,) + arr.shape[2:])


def compute_gae(rewards, values, dones, last_value, gamma: float = 0.99, lam: float = 0.95):
    """Masked GAE over a (horizon, n) batch.

    A done flag at step t cuts the bootstrap: the next state's value and the
    accumulated advantage both stop at the episode boundary.  Returns
    (advantages, returns), with returns = advantages + values.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise DimensionError(
            f"rewards {rewards.shape}, values {values.shape}, dones {dones.shape} must match"
        )
    horizon = rewards.shape[0]
    adv = np.zeros_like(rewards)
    next_value = np.asarray(last_value, dtype=float)
    next_adv = np.zeros(rewards.shape[1:])
    for t in range(horizon - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        next_adv = delta + gamma * lam * live * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv, adv + values
