"""Stage-1 oracle training: privileged encoder, policy, GAE, PPO."""

from .networks import (
    ACT_DIM,
    PHYS_POSE_DIM,
    Z_DIM,
    Z_PHYS_DIM,
    Z_SHAPE_DIM,
    EncoderSpec,
    OracleModel,
    PolicySpec,
    encode_privileged,
    gaussian_entropy,
    gaussian_log_prob,
    init_policy,
    init_privileged,
    np_gaussian_log_prob,
    policy_forward,
)
from .oracle import (
    METRICS_COLUMNS,
    OracleTrainConfig,
    TrainResult,
    load_oracle,
    paper_scale_config,
    phys_pose_vector,
    points_table,
    save_oracle,
    oracle_checkpoint_config,
    smoke_train_config,
    train_oracle,
)
from .ppo import PPOConfig, normalize_advantages, ppo_update
from .rollout import RolloutBuffer, compute_gae

__all__ = [
    "ACT_DIM",
    "PHYS_POSE_DIM",
    "Z_DIM",
    "Z_PHYS_DIM",
    "Z_SHAPE_DIM",
    "EncoderSpec",
    "OracleModel",
    "PolicySpec",
    "encode_privileged",
    "gaussian_entropy",
    "gaussian_log_prob",
    "init_policy",
    "init_privileged",
    "np_gaussian_log_prob",
    "policy_forward",
    "METRICS_COLUMNS",
    "OracleTrainConfig",
    "TrainResult",
    "load_oracle",
    "paper_scale_config",
    "phys_pose_vector",
    "points_table",
    "save_oracle",
    "oracle_checkpoint_config",
    "smoke_train_config",
    "train_oracle",
    "PPOConfig",
    "normalize_advantages",
    "ppo_update",
    "RolloutBuffer",
    "compute_gae",
]
