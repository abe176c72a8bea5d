"""Reward terms for axis rotation.

Terms are stored as raw magnitudes (non-negative except the mechanical
work, which carries its sign); the coefficients are negative, so each
penalty contributes lambda * r <= 0 to the total. The rotation term is
the clipped angular velocity along the commanded axis.
"""

from dataclasses import dataclass, replace

import numpy as np

from ..errors import ContractError


@dataclass
class RewardCoeffs:
    lambda_rotp: float = -0.1       # post-curriculum value
    lambda_pose: float = -0.3
    lambda_linvel: float = -0.3
    lambda_work: float = -2.0
    lambda_torque: float = -0.1
    r_min: float = -0.5
    r_max: float = 0.5

    def with_rotp(self, lam: float) -> "RewardCoeffs":
        return replace(self, lambda_rotp=lam)


@dataclass
class RewardBreakdown:
    """Per-env raw terms plus the coefficient-weighted total."""

    r_rotr: np.ndarray
    r_rotp: np.ndarray
    r_pose: np.ndarray
    r_linvel: np.ndarray
    r_work: np.ndarray
    r_torque: np.ndarray
    total: np.ndarray

    def recompute_total(self, c: RewardCoeffs) -> np.ndarray:
        """Independent weighted sum; equals .total up to float associativity."""
        return (
            self.r_rotr
            + c.lambda_rotp * self.r_rotp
            + c.lambda_pose * self.r_pose
            + c.lambda_linvel * self.r_linvel
            + c.lambda_work * self.r_work
            + c.lambda_torque * self.r_torque
        )


def compute_reward(omega, v, q, q_init, tau, qdot, k, coeffs=None) -> RewardBreakdown:
    """Reward breakdown for a batch of envs.

    omega, v: (n, 3); q, q_init, tau, qdot: (n, 16); k: (3,) unit axis.
    """
    c = coeffs or RewardCoeffs()
    k = np.asarray(k, dtype=float)
    if abs(np.linalg.norm(k) - 1.0) > 1e-6:
        raise ContractError(f"rotation axis must be unit length, got |k|={np.linalg.norm(k)}")
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    q_init = np.atleast_2d(np.asarray(q_init, dtype=float))
    tau = np.atleast_2d(np.asarray(tau, dtype=float))
    qdot = np.atleast_2d(np.asarray(qdot, dtype=float))

    r_rotr = np.clip(omega @ k, c.r_min, c.r_max)
    r_rotp = np.abs(np.cross(omega, k[None, :])).sum(axis=1)
    dq = q - q_init
    r_pose = (dq * dq).sum(axis=1)
    r_linvel = (v * v).sum(axis=1)
    r_work = (tau * qdot).sum(axis=1)
    r_torque = (tau * tau).sum(axis=1)
    total = (
        r_rotr
        + c.lambda_rotp * r_rotp
        + c.lambda_pose * r_pose
        + c.lambda_linvel * r_linvel
        + c.lambda_work * r_work
        + c.lambda_torque * r_torque
    )
    return RewardBreakdown(r_rotr, r_rotp, r_pose, r_linvel, r_work, r_torque, total)


def curriculum_lambda_rotp(iteration: int, horizon: int = 500, final: float = -0.1) -> float:
    """0 at iteration 0, linear to *final* at *horizon*, constant after."""
    if iteration < 0:
        raise ContractError("iteration must be >= 0")
    if horizon <= 0:
        return final
    frac = min(1.0, iteration / horizon)
    return final * frac
