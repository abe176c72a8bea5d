"""Rotation task: reward shaping, physics randomization, vectorized env."""

from .env import (
    EnvConfig,
    PhysicalParams,
    RotationEnv,
    TrajectoryLogger,
    randomize_physics,
    smoke_task_config,
)
from .reward import (
    RewardBreakdown,
    RewardCoeffs,
    compute_reward,
    curriculum_lambda_rotp,
)

__all__ = [
    "EnvConfig",
    "PhysicalParams",
    "RotationEnv",
    "TrajectoryLogger",
    "randomize_physics",
    "smoke_task_config",
    "RewardBreakdown",
    "RewardCoeffs",
    "compute_reward",
    "curriculum_lambda_rotp",
]
