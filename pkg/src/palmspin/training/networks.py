"""Privileged encoder and gaussian policy/value networks for the oracle.

The encoder maps the 17-dim physics+pose vector through [256, 128, 8] and a
surface point cloud through the point-set encoder, concatenating to the
40-dim extrinsics z_t.  The policy trunk is shared between the action mean
and the value head, with a state-independent learned log-std.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import DimensionError
from ..nn import tensor as T
from ..nn.blocks import (
    MLPSpec,
    PointSetSpec,
    init_linear,
    init_mlp,
    init_pointset,
    linear,
    mlp_forward,
    pointset_encode,
)
from ..nn.params import ParameterSet

PHYS_POSE_DIM = 17
Z_PHYS_DIM = 8
Z_SHAPE_DIM = 32
Z_DIM = Z_PHYS_DIM + Z_SHAPE_DIM
ACT_DIM = 16

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class EncoderSpec:
    phys_widths: tuple = (256, 128, 8)
    point_widths: tuple = (32, 32, 32)

    def __post_init__(self):
        if self.phys_widths[-1] != Z_PHYS_DIM:
            raise DimensionError(f"privileged MLP must end at {Z_PHYS_DIM}, got {self.phys_widths}")
        if self.point_widths[-1] != Z_SHAPE_DIM:
            raise DimensionError(f"point-set widths must end at {Z_SHAPE_DIM}, got {self.point_widths}")

    @property
    def phys_mlp(self) -> MLPSpec:
        return MLPSpec(PHYS_POSE_DIM, list(self.phys_widths), "relu")

    @property
    def pointset(self) -> PointSetSpec:
        return PointSetSpec(3, list(self.point_widths), "relu")


@dataclass
class PolicySpec:
    obs_dim: int = 96
    z_dim: int = Z_DIM
    extra_dim: int = 0              # e.g. 3 for the multi-axis command k
    trunk: tuple = (512, 256, 128)
    act_dim: int = ACT_DIM
    log_std_init: float = -1.0
    log_std_lo: float = -5.0
    log_std_hi: float = 1.0
    mu_init_scale: float = 0.01     # small head init: start near the grasp pose

    @property
    def in_dim(self) -> int:
        return self.obs_dim + self.z_dim + self.extra_dim

    @property
    def trunk_mlp(self) -> MLPSpec:
        # activation after the last trunk layer: both heads read features
        return MLPSpec(self.in_dim, list(self.trunk), "elu", activate_final=True)


def init_privileged(params: ParameterSet, prefix: str, spec: EncoderSpec, rng) -> None:
    init_mlp(params, f"{prefix}.phys", spec.phys_mlp, rng)
    init_pointset(params, f"{prefix}.shape", spec.pointset, rng)


def encode_privileged(
    params: ParameterSet,
    phys_pose,
    points,
    spec: EncoderSpec,
    prefix: str = "enc",
    use_shape: bool = True,
):
    """(n, 17) physics+pose and (n, N_p, 3) points -> (n, 40) extrinsics.

    With use_shape off the z_shape half is zeroed, reproducing the no-shape
    oracle ablation without changing any widths.
    """
    phys_pose = np.asarray(phys_pose, dtype=float)
    if phys_pose.shape[-1] != PHYS_POSE_DIM:
        raise DimensionError(
            f"privileged vector must have width {PHYS_POSE_DIM}, got {phys_pose.shape}"
        )
    z_phys = mlp_forward(params, phys_pose, spec.phys_mlp, f"{prefix}.phys")
    if use_shape:
        z_shape = pointset_encode(params, points, spec.pointset, f"{prefix}.shape")
    else:
        z_shape = T.as_tensor(np.zeros(phys_pose.shape[:-1] + (Z_SHAPE_DIM,)))
    return T.concat([z_phys, z_shape], axis=-1)


def init_policy(params: ParameterSet, prefix: str, spec: PolicySpec, rng) -> None:
    init_mlp(params, f"{prefix}.trunk", spec.trunk_mlp, rng)
    init_linear(params, f"{prefix}.mu", spec.trunk[-1], spec.act_dim, rng)
    # scale down the action head so the initial mean is near zero and early
    # behavior is exploration noise around the grasp, not saturated targets
    params[f"{prefix}.mu.w"].data *= spec.mu_init_scale
    init_linear(params, f"{prefix}.v", spec.trunk[-1], 1, rng)
    params.add(f"{prefix}.log_std", np.full(spec.act_dim, spec.log_std_init))


def policy_forward(params: ParameterSet, x, spec: PolicySpec, prefix: str = "pi"):
    """Input (n, in_dim) -> (mean (n, 16), value (n,), log_std (16,)) tensors."""
    x = T.as_tensor(x)
    h = mlp_forward(params, x, spec.trunk_mlp, f"{prefix}.trunk")
    mu = linear(params, h, f"{prefix}.mu")
    value = T.reshape(linear(params, h, f"{prefix}.v"), x.shape[:-1])
    log_std = T.clip(params[f"{prefix}.log_std"], spec.log_std_lo, spec.log_std_hi)
    return mu, value, log_std


def gaussian_log_prob(mu, log_std, actions):
    """Diagonal-gaussian log density of actions under (mu, exp(log_std))."""
    a = T.as_tensor(actions)
    act_dim = a.shape[-1]
    zsc = T.mul(T.sub(a, mu), T.exp(T.mul(log_std, -1.0)))
    per = T.sub(T.mul(T.square(zsc), -0.5), log_std)
    return T.add(T.tsum(per, axis=-1), -0.5 * act_dim * _LOG_2PI)


def gaussian_entropy(log_std):
    """Entropy of the diagonal gaussian; state independent."""
    act_dim = log_std.shape[-1]
    return T.add(T.tsum(log_std), 0.5 * act_dim * (1.0 + _LOG_2PI))


def np_gaussian_log_prob(mu: np.ndarray, log_std: np.ndarray, actions: np.ndarray):
    zsc = (actions - mu) * np.exp(-log_std)
    per = -0.5 * zsc**2 - log_std
    return per.sum(axis=-1) - 0.5 * mu.shape[-1] * _LOG_2PI


class OracleModel:
    """Parameter bundle for encoder + policy with numpy and autodiff paths.

    ``points`` is the (n_shapes, N_p, 3) table of canonical surface samples;
    environments index into it and scale by their sampled object scale.
    """

    def __init__(
        self,
        params: ParameterSet,
        policy_spec: PolicySpec,
        encoder_spec: EncoderSpec,
        points: np.ndarray,
        use_shape: bool = True,
    ):
        self.params = params
        self.pi = policy_spec
        self.enc = encoder_spec
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim != 3 or self.points.shape[-1] != 3:
            raise DimensionError(f"points table must be (n_shapes, N_p, 3), got {self.points.shape}")
        self.use_shape = use_shape

    @classmethod
    def build(
        cls,
        points: np.ndarray,
        rng,
        policy_spec: Optional[PolicySpec] = None,
        encoder_spec: Optional[EncoderSpec] = None,
        use_shape: bool = True,
        dtype=np.float64,
    ) -> "OracleModel":
        policy_spec = policy_spec or PolicySpec()
        encoder_spec = encoder_spec or EncoderSpec()
        params = ParameterSet(dtype=dtype)
        init_privileged(params, "enc", encoder_spec, rng)
        init_policy(params, "pi", policy_spec, rng)
        return cls(params, policy_spec, encoder_spec, points, use_shape)

    def env_points(self, shape_idx: np.ndarray, scale: np.ndarray) -> np.ndarray:
        return self.points[shape_idx] * np.asarray(scale)[:, None, None]

    def encode(self, phys_pose, shape_idx, scale):
        """Differentiable z_t for a batch of env states."""
        pts = self.env_points(np.asarray(shape_idx, dtype=int), scale)
        return encode_privileged(
            self.params, phys_pose, pts, self.enc, "enc", self.use_shape
        )

    def encode_np(self, phys_pose, shape_idx, scale) -> np.ndarray:
        with T.no_grad():
            return self.encode(phys_pose, shape_idx, scale).data

    def forward(self, obs, z, extra=None):
        parts = [T.as_tensor(obs), z if isinstance(z, T.Tensor) else T.as_tensor(z)]
        if self.pi.extra_dim:
            parts.append(T.as_tensor(extra))
        x = T.concat(parts, axis=-1)
        return policy_forward(self.params, x, self.pi, "pi")

    def act(self, obs, z, rng=None, mode: str = "sample", extra=None):
        """Numpy rollout path: (actions, log-probs, values), no graph built."""
        with T.no_grad():
            mu_t, v_t, ls_t = self.forward(obs, z, extra)
        mu, value, log_std = mu_t.data, v_t.data, ls_t.data
        if mode == "mean":
            actions = mu.copy()
        else:
            actions = mu + np.exp(log_std) * rng.standard_normal(mu.shape)
        return actions, np_gaussian_log_prob(mu, log_std, actions), value
