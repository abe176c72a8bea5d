"""Clipped-surrogate PPO update over a collected rollout batch."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConfigError
from ..nn import tensor as T
from ..nn.params import adam_step, clip_grad_norm
from .networks import OracleModel, gaussian_entropy, gaussian_log_prob
from .rollout import RolloutBuffer, compute_gae


@dataclass
class PPOConfig:
    lr: float = 5e-3
    epochs: int = 5
    minibatch: int = 2560
    clip: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    entropy_coeff: float = 0.0
    value_coeff: float = 0.5
    max_grad_norm: float = 1.0
    horizon: int = 10
    n_envs: int = 256
    # Stop the epoch loop once mean KL to the behavior policy exceeds this;
    # None disables.  Small batches need it: 5 epochs of Adam on 1280 samples
    # can otherwise push ratios far outside the clip envelope.
    target_kl: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.clip < 1.0:
            raise ConfigError(f"ppo clip {self.clip} must be in (0, 1)")
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise ConfigError("gamma and lambda must be in [0, 1]")
        if self.epochs < 1 or self.minibatch < 1 or self.horizon < 1 or self.n_envs < 1:
            raise ConfigError("epochs, minibatch, horizon, n_envs must be positive")


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def ppo_update(model: OracleModel, buf: RolloutBuffer, last_value, cfg: PPOConfig, rng):
    """GAE + epochs of clipped-surrogate minibatch updates; returns stats.

    Gradients flow jointly through the policy, value head, and privileged
    encoder, since z_t is re-encoded from the stored raw inputs inside the
    loss graph.  A non-finite loss or gradient raises before any parameter
    is mutated, so the caller still holds the last good weights.
    """
    adv, ret = compute_gae(buf.reward, buf.value, buf.done, last_value, cfg.gamma, cfg.lam)
    adv = normalize_advantages(adv.reshape(-1))
    ret = ret.reshape(-1)

    obs = buf.flat("obs")
    phys_pose = buf.flat("phys_pose")
    shape_idx = buf.flat("shape_idx")
    scale = buf.flat("scale")
    actions = buf.flat("actions")
    logp_old = buf.flat("logp")
    extra = buf.flat("extra") if buf.extra is not None else None

    total = obs.shape[0]
    order = np.arange(total)
    sums = {
        "policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
        "clip_fraction": 0.0, "approx_kl": 0.0,
    }
    n_mb = 0
    stop = False
    for _ in range(cfg.epochs):
        if stop:
            break
        rng.shuffle(order)
        for s in range(0, total, cfg.minibatch):
            mb = order[s : s + cfg.minibatch]
            z = model.encode(phys_pose[mb], shape_idx[mb], scale[mb])
            mu, value, log_std = model.forward(
                obs[mb], z, extra[mb] if extra is not None else None
            )
            logp = gaussian_log_prob(mu, log_std, actions[mb])
            ratio = T.exp(T.sub(logp, T.as_tensor(logp_old[mb])))
            a_mb = T.as_tensor(adv[mb])
            surr = T.minimum(
                T.mul(ratio, a_mb),
                T.mul(T.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), a_mb),
            )
            policy_loss = T.mul(T.tmean(surr), -1.0)
            value_loss = T.tmean(T.square(T.sub(value, T.as_tensor(ret[mb]))))
            entropy = gaussian_entropy(log_std)
            loss = T.add(policy_loss, T.mul(value_loss, cfg.value_coeff))
            if cfg.entropy_coeff:
                loss = T.sub(loss, T.mul(entropy, cfg.entropy_coeff))

            model.params.zero_grad()
            loss.backward()
            clip_grad_norm(model.params, cfg.max_grad_norm)
            adam_step(model.params, cfg.lr)

            r = ratio.data
            kl = float(np.mean(logp_old[mb] - logp.data))
            sums["policy_loss"] += float(policy_loss.data)
            sums["value_loss"] += float(value_loss.data)
            sums["entropy"] += float(entropy.data)
            sums["clip_fraction"] += float(np.mean(np.abs(r - 1.0) > cfg.clip))
            sums["approx_kl"] += kl
            n_mb += 1
            if cfg.target_kl is not None and kl > 1.5 * cfg.target_kl:
                stop = True
                break

    stats = {k: v / n_mb for k, v in sums.items()}
    stats["minibatches"] = n_mb
    stats["epochs"] = cfg.epochs
    return stats
