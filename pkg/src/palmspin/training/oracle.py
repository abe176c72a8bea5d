"""Stage-1 oracle training: PPO over vectorized rotation environments."""

from __future__ import annotations

import dataclasses
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..checkpoint import load_checkpoint, save_checkpoint
from ..errors import ConfigError, NonFiniteError
from ..objects.shapes import sample_surface_points
from ..runconfig import (
    encoder_spec_from_dict,
    env_config_from_dict,
    policy_spec_from_dict,
    to_jsonable,
)
from ..task.env import EnvConfig, RotationEnv, smoke_task_config
from ..task.reward import curriculum_lambda_rotp
from .networks import EncoderSpec, OracleModel, PolicySpec
from .ppo import PPOConfig, ppo_update
from .rollout import RolloutBuffer

METRICS_COLUMNS = (
    "iteration", "mean_episode_rotr", "mean_ttf", "mean_rotp",
    "policy_loss", "value_loss", "entropy", "clip_fraction", "approx_kl",
    "lambda_rotp", "wall_clock_s",
)


@dataclass
class OracleTrainConfig:
    iterations: int = 200
    seed: int = 0
    out: Optional[str] = None
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    policy: PolicySpec = field(default_factory=PolicySpec)
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    use_shape: bool = True
    n_points: int = 100
    checkpoint_every: int = 100
    recent_episodes: int = 64

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be positive")


def smoke_train_config(iterations: int = 300, seed: int = 0, out=None) -> OracleTrainConfig:
    """Sphere-spin smoke profile: 128 envs, small nets, fast on CPU."""
    return OracleTrainConfig(
        iterations=iterations,
        seed=seed,
        out=out,
        env=smoke_task_config(),
        # the full-scale lr assumes a 300k-sample batch; desk-scale batches
        # need a smaller step, a KL brake, and a lighter value term so the
        # critic's early regression error cannot swamp the shared trunk
        ppo=PPOConfig(
            n_envs=128, horizon=40, minibatch=1280, lr=3e-4,
            gamma=0.98, value_coeff=0.05, target_kl=0.05,
        ),
        policy=PolicySpec(trunk=(128, 64)),
        encoder=EncoderSpec(phys_widths=(64, 32, 8), point_widths=(32, 32)),
        use_shape=False,
        n_points=32,
        checkpoint_every=100,
    )


def paper_scale_config() -> OracleTrainConfig:
    """The full-scale profile: provided for documentation, not desk hardware."""
    return OracleTrainConfig(
        iterations=10_000,
        ppo=PPOConfig(n_envs=32768, minibatch=32768),
    )


@dataclass
class TrainResult:
    model: OracleModel
    history: List[dict]
    diverged: bool
    iterations_run: int
    csv_path: Optional[Path]
    checkpoint_path: Optional[Path]


def points_table(shapes, n_points: int) -> np.ndarray:
    return np.stack([sample_surface_points(s, n_points, seed=0) for s in shapes])


def phys_pose_vector(env: RotationEnv) -> np.ndarray:
    """(n, 17) = privileged physics (7) + position (3) + quat (4) + omega (3)."""
    w = env.world
    return np.concatenate(
        [env.params.privileged(), w.obj_pos, w.obj_quat, w.obj_omega], axis=1
    )


def oracle_checkpoint_config(cfg: OracleTrainConfig, iterations_run: int) -> dict:
    return {
        "kind": "oracle",
        "policy": to_jsonable(cfg.policy),
        "encoder": to_jsonable(cfg.encoder),
        "env": to_jsonable(cfg.env),
        "use_shape": cfg.use_shape,
        "n_points": cfg.n_points,
        "seed": cfg.seed,
        "iterations_run": iterations_run,
    }


def save_oracle(model: OracleModel, cfg_dict: dict, path) -> None:
    tensors = dict(model.params.state_arrays())
    tensors["data.points"] = model.points
    save_checkpoint(path, cfg_dict, tensors)


def load_oracle(path) -> tuple:
    """Rebuild an OracleModel (and its config dict) from a checkpoint."""
    config, tensors = load_checkpoint(path)
    if config.get("kind") != "oracle":
        raise ConfigError(f"{path}: checkpoint kind {config.get('kind')!r}, expected 'oracle'")
    policy = policy_spec_from_dict(config["policy"])
    encoder = encoder_spec_from_dict(config["encoder"])
    points = tensors.pop("data.points")
    model = OracleModel.build(
        points, np.random.default_rng(0), policy, encoder, config["use_shape"]
    )
    model.params.load_arrays(tensors)
    return model, config


class _MetricsWriter:
    def __init__(self, path: Optional[Path]):
        self.fh = open(path, "w") if path is not None else None
        if self.fh:
            self.fh.write(",".join(METRICS_COLUMNS) + "\n")

    def write(self, row: dict):
        if self.fh:
            self.fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                                   for c in METRICS_COLUMNS) + "\n")
            self.fh.flush()

    def close(self):
        if self.fh:
            self.fh.close()


def train_oracle(shapes, caches, cfg: OracleTrainConfig) -> TrainResult:
    """PPO training loop; returns the trained model plus per-iteration history.

    Deterministic for a fixed seed: all randomness flows through named
    substreams of the config seed.  A non-finite loss or gradient halts the
    run, restores the last completed iteration's weights, and writes them as
    the final checkpoint.
    """
    out = Path(cfg.out) if cfg.out is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    pts = points_table(shapes, cfg.n_points)
    model = OracleModel.build(
        pts, np.random.default_rng([cfg.seed, 101]), cfg.policy, cfg.encoder, cfg.use_shape
    )
    env = RotationEnv(shapes, caches, cfg.ppo.n_envs, cfg.env, seed=cfg.seed)
    env.reset()
    rng_act = np.random.default_rng([cfg.seed, 11])
    rng_mb = np.random.default_rng([cfg.seed, 12])
    buf = RolloutBuffer(cfg.ppo.horizon, cfg.ppo.n_envs)

    n = cfg.ppo.n_envs
    ep_rotr = np.zeros(n)
    ep_rotp = np.zeros(n)
    ep_steps = np.zeros(n, dtype=int)
    recent = deque(maxlen=cfg.recent_episodes)

    history: List[dict] = []
    writer = _MetricsWriter(out / "oracle_metrics.csv" if out else None)
    last_good = model.params.copy()
    diverged = False
    iterations_run = 0
    t_start = time.perf_counter()

    try:
        for it in range(cfg.iterations):
            env.set_lambda_rotp(curriculum_lambda_rotp(it, cfg.env.curriculum_horizon))
            buf.reset()
            for _ in range(cfg.ppo.horizon):
                obs = env.observe()
                pp = phys_pose_vector(env)
                sidx = env.shape_choice.copy()
                scl = env.params.scale.copy()
                z = model.encode_np(pp, sidx, scl)
                a, lp, v = model.act(obs, z, rng_act)
                _, rb, done, _ = env.step(a)
                buf.add(obs, pp, sidx, scl, z, a, lp, v, rb.total, done)
                ep_rotr += rb.r_rotr
                ep_rotp += rb.r_rotp
                ep_steps += 1
                if done.any():
                    ids = np.nonzero(done)[0]
                    for i in ids:
                        recent.append((
                            ep_rotr[i],
                            ep_steps[i] * 0.05 / 20.0,
                            ep_rotp[i] / ep_steps[i],
                        ))
                    ep_rotr[ids] = 0.0
                    ep_rotp[ids] = 0.0
                    ep_steps[ids] = 0
                    env.reset(ids)
            obs = env.observe()
            z = model.encode_np(phys_pose_vector(env), env.shape_choice, env.params.scale)
            _, _, last_value = model.act(obs, z, mode="mean")
            stats = ppo_update(model, buf, last_value, cfg.ppo, rng_mb)

            if recent:
                m_rotr = float(np.mean([r[0] for r in recent]))
                m_ttf = float(np.mean([r[1] for r in recent]))
                m_rotp = float(np.mean([r[2] for r in recent]))
            else:
                m_rotr = m_ttf = m_rotp = 0.0
            row = {
                "iteration": it,
                "mean_episode_rotr": m_rotr,
                "mean_ttf": m_ttf,
                "mean_rotp": m_rotp,
                "policy_loss": stats["policy_loss"],
                "value_loss": stats["value_loss"],
                "entropy": stats["entropy"],
                "clip_fraction": stats["clip_fraction"],
                "approx_kl": stats["approx_kl"],
                "lambda_rotp": env.lambda_rotp,
                "wall_clock_s": time.perf_counter() - t_start,
            }
            history.append(row)
            writer.write(row)
            last_good = model.params.copy()
            iterations_run = it + 1
            if out is not None and (it + 1) % cfg.checkpoint_every == 0:
                save_oracle(model, oracle_checkpoint_config(cfg, iterations_run),
                            out / "oracle_latest.ckpt")
    except NonFiniteError:
        diverged = True
        model.params = last_good
    finally:
        writer.close()

    ckpt_path = None
    if out is not None:
        ckpt_path = out / ("oracle_diverged.ckpt" if diverged else "oracle_final.ckpt")
        save_oracle(model, oracle_checkpoint_config(cfg, iterations_run), ckpt_path)
    return TrainResult(
        model=model,
        history=history,
        diverged=diverged,
        iterations_run=iterations_run,
        csv_path=(out / "oracle_metrics.csv") if out else None,
        checkpoint_path=ckpt_path,
    )
