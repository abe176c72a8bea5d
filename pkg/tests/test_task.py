"""Task env: reward oracles, curriculum, episode lifecycle, vectorization."""

import json

import numpy as np
import pytest

from palmspin.errors import ConfigError, ContractError
from palmspin.task import (
    EnvConfig,
    RewardCoeffs,
    RotationEnv,
    TrajectoryLogger,
    compute_reward,
    curriculum_lambda_rotp,
    randomize_physics,
    smoke_task_config,
)

Z = np.array([0.0, 0.0, 1.0])


def _zeros(n=1):
    return dict(
        omega=np.zeros((n, 3)), v=np.zeros((n, 3)), q=np.zeros((n, 16)),
        q_init=np.zeros((n, 16)), tau=np.zeros((n, 16)), qdot=np.zeros((n, 16)),
    )


class TestReward:
    def test_clipping_both_ends(self):
        s = _zeros()
        s["omega"] = 2.0 * Z[None, :]
        rb = compute_reward(**s, k=Z)
        assert rb.r_rotr[0] == 0.5
        s["omega"] = -2.0 * Z[None, :]
        rb = compute_reward(**s, k=Z)
        assert rb.r_rotr[0] == -0.5

    def test_orthogonal_axis_cross_product(self):
        s = _zeros()
        s["omega"] = np.array([[1.0, 0.0, 0.0]])
        rb = compute_reward(**s, k=Z)
        assert rb.r_rotr[0] == 0.0
        assert abs(rb.r_rotp[0] - 1.0) < 1e-12

    def test_torque_contribution_arithmetic(self):
        s = _zeros()
        s["tau"][0, :4] = 0.1  # ||tau||^2 = 0.04
        rb = compute_reward(**s, k=Z)
        assert abs(rb.r_torque[0] - 0.04) < 1e-12
        c = RewardCoeffs()
        assert abs(c.lambda_torque * rb.r_torque[0] - (-0.004)) < 1e-12
        assert abs(rb.total[0] - (-0.004)) < 1e-12

    def test_all_zero_state(self):
        rb = compute_reward(**_zeros(), k=Z)
        for f in ("r_rotr", "r_rotp", "r_pose", "r_linvel", "r_work", "r_torque", "total"):
            assert getattr(rb, f)[0] == 0.0

    def test_brute_force_recomputation(self):
        # 50 randomized states, every term and the total vs scalar arithmetic
        rng = np.random.default_rng(17)
        c = RewardCoeffs()
        for _ in range(50):
            omega = rng.normal(0, 2, 3)
            v = rng.normal(0, 0.5, 3)
            q = rng.normal(0, 1, 16)
            q_init = rng.normal(0, 1, 16)
            tau = rng.normal(0, 0.3, 16)
            qdot = rng.normal(0, 2, 16)
            k = rng.normal(0, 1, 3)
            k /= np.linalg.norm(k)
            rb = compute_reward(omega, v, q, q_init, tau, qdot, k, c)
            rotr = min(max(float(np.dot(omega, k)), c.r_min), c.r_max)
            rotp = float(np.abs(np.cross(omega, k)).sum())
            pose = float(((q - q_init) ** 2).sum())
            linvel = float((v**2).sum())
            work = float((tau * qdot).sum())
            torq = float((tau**2).sum())
            total = (
                rotr + c.lambda_rotp * rotp + c.lambda_pose * pose
                + c.lambda_linvel * linvel + c.lambda_work * work + c.lambda_torque * torq
            )
            assert abs(rb.r_rotr[0] - rotr) < 1e-6
            assert abs(rb.r_rotp[0] - rotp) < 1e-6
            assert abs(rb.r_pose[0] - pose) < 1e-6
            assert abs(rb.r_linvel[0] - linvel) < 1e-6
            assert abs(rb.r_work[0] - work) < 1e-6
            assert abs(rb.r_torque[0] - torq) < 1e-6
            assert abs(rb.total[0] - total) < 1e-6
            assert abs(rb.recompute_total(c)[0] - rb.total[0]) < 1e-9

    def test_term_sign_invariants(self):
        rng = np.random.default_rng(23)
        c = RewardCoeffs()
        for _ in range(100):
            rb = compute_reward(
                rng.normal(0, 3, 3), rng.normal(0, 1, 3), rng.normal(0, 1, 16),
                rng.normal(0, 1, 16), rng.normal(0, 0.5, 16), rng.normal(0, 2, 16), Z, c,
            )
            assert -0.5 <= rb.r_rotr[0] <= 0.5
            assert rb.r_rotp[0] >= 0.0
            for name in ("r_rotp", "r_pose", "r_linvel", "r_torque"):
                lam = getattr(c, "lambda_" + name[2:])
                assert lam * getattr(rb, name)[0] <= 0.0

    def test_penalty_argmax_invariance(self):
        # common positive rescaling of all penalty coefficients preserves the
        # ordering of two trajectories' penalty sums
        rng = np.random.default_rng(29)
        c1 = RewardCoeffs()

        def penalty_sum(rb, c):
            return float(
                (
                    c.lambda_rotp * rb.r_rotp + c.lambda_pose * rb.r_pose
                    + c.lambda_linvel * rb.r_linvel + c.lambda_work * rb.r_work
                    + c.lambda_torque * rb.r_torque
                )[0]
            )

        for scale in (0.5, 3.0, 10.0):
            c2 = RewardCoeffs(
                lambda_rotp=c1.lambda_rotp * scale, lambda_pose=c1.lambda_pose * scale,
                lambda_linvel=c1.lambda_linvel * scale, lambda_work=c1.lambda_work * scale,
                lambda_torque=c1.lambda_torque * scale,
            )
            for _ in range(20):
                a = compute_reward(
                    rng.normal(0, 2, 3), rng.normal(0, 1, 3), rng.normal(0, 1, 16),
                    np.zeros(16), rng.normal(0, 0.3, 16), rng.normal(0, 2, 16), Z,
                )
                b = compute_reward(
                    rng.normal(0, 2, 3), rng.normal(0, 1, 3), rng.normal(0, 1, 16),
                    np.zeros(16), rng.normal(0, 0.3, 16), rng.normal(0, 2, 16), Z,
                )
                assert (penalty_sum(a, c1) > penalty_sum(b, c1)) == (
                    penalty_sum(a, c2) > penalty_sum(b, c2)
                )

    def test_nonunit_axis_rejected(self):
        with pytest.raises(ContractError):
            compute_reward(**_zeros(), k=np.array([0.0, 0.0, 2.0]))


class TestCurriculum:
    def test_endpoints_and_midpoint(self):
        assert curriculum_lambda_rotp(0) == 0.0
        assert curriculum_lambda_rotp(500) == -0.1
        assert curriculum_lambda_rotp(5000) == -0.1
        assert abs(curriculum_lambda_rotp(250) - (-0.05)) < 1e-12

    def test_negative_iteration_rejected(self):
        with pytest.raises(ContractError):
            curriculum_lambda_rotp(-1)


class TestRandomizePhysics:
    def test_ranges_and_span(self):
        p = randomize_physics(np.random.default_rng(1), 10000)
        assert p.mass.min() >= 0.01 and p.mass.max() <= 0.25
        assert (p.mass.max() - p.mass.min()) >= 0.95 * (0.25 - 0.01)
        assert p.friction.min() >= 0.3 and p.friction.max() <= 3.0
        assert p.scale.min() >= 0.46 and p.scale.max() <= 0.68
        assert np.abs(p.com_offset).max() <= 0.01
        assert p.kp.min() >= 2.9 and p.kp.max() <= 3.1
        assert p.kd.min() >= 0.09 and p.kd.max() <= 0.11

    def test_deterministic(self):
        a = randomize_physics(np.random.default_rng(8), 16)
        b = randomize_physics(np.random.default_rng(8), 16)
        assert np.array_equal(a.mass, b.mass)
        assert np.array_equal(a.com_offset, b.com_offset)

    def test_privileged_vector_shape(self):
        p = randomize_physics(np.random.default_rng(2), 5)
        assert p.privileged().shape == (5, 7)


class TestEnvConfig:
    def test_episode_length_invariant(self):
        with pytest.raises(ConfigError):
            EnvConfig(episode_len=100)

    def test_axis_must_be_unit(self):
        with pytest.raises(ConfigError):
            EnvConfig(axis=(1.0, 1.0, 0.0))


class TestRotationEnv:
    def _env(self, shape, caches, n=2, seed=3, **kw):
        cfg = smoke_task_config()
        for k, v in kw.items():
            setattr(cfg, k, v)
        return RotationEnv([shape], caches, n=n, config=cfg, seed=seed)

    def test_reset_obs_shape_and_padding(self, sphere_shape, sphere_caches):
        env = self._env(sphere_shape, sphere_caches)
        obs = env.reset()
        assert obs.shape == (2, 96)
        assert np.array_equal(obs[:, :16], obs[:, 16:32])
        assert np.array_equal(obs[:, 16:32], obs[:, 32:48])
        assert np.all(obs[:, 48:] == 0.0)

    def test_reset_deterministic(self, sphere_shape, sphere_caches):
        a = self._env(sphere_shape, sphere_caches).reset()
        b = self._env(sphere_shape, sphere_caches).reset()
        assert np.array_equal(a, b)

    def test_ten_substeps_per_control_step(self, sphere_shape, sphere_caches):
        env = self._env(sphere_shape, sphere_caches)
        env.reset()
        before = env.world.step_index
        env.step(np.zeros((2, 16)))
        assert env.world.step_index - before == 10

    def test_teleport_below_fall_plane(self, sphere_shape, sphere_caches):
        env = self._env(sphere_shape, sphere_caches)
        env.reset()
        env.world.obj_pos[0, 2] = -1.0
        _, _, done, info = env.step(np.zeros((2, 16)))
        assert done[0] and info["fall"][0]
        assert not done[1]

    def test_terminates_at_episode_end(self, sphere_shape, sphere_caches):
        env = self._env(sphere_shape, sphere_caches, n=1)
        env.reset()
        steps = 0
        done = np.array([False])
        while not done[0]:
            _, _, done, info = env.step(np.zeros((1, 16)))
            steps += 1
            assert steps <= 400
        if steps == 400:
            assert not info["fall"][0]

    def test_step_on_done_env_rejected(self, sphere_shape, sphere_caches):
        env = self._env(sphere_shape, sphere_caches)
        env.reset()
        env.world.obj_pos[:, 2] = -1.0
        env.step(np.zeros((2, 16)))
        with pytest.raises(ContractError):
            env.step(np.zeros((2, 16)))

    def test_missing_cache_names_object(self, sphere_shape):
        env = RotationEnv([sphere_shape], {}, n=1, config=smoke_task_config(), seed=0)
        with pytest.raises(ConfigError, match="sphere-000"):
            env.reset()

    def test_solo_matches_batch(self, sphere_shape, sphere_caches):
        cfg = smoke_task_config()
        batch = RotationEnv([sphere_shape], sphere_caches, n=3, config=cfg, seed=5)
        solo = RotationEnv(
            [sphere_shape], sphere_caches, n=1, config=cfg, seed=5, env_offset=1
        )
        ob = batch.reset()
        os_ = solo.reset()
        assert np.array_equal(ob[1], os_[0])
        rng = np.random.default_rng(7)
        for _ in range(60):
            a = rng.uniform(-0.6, 0.6, (3, 16))
            ob, rbb, db, _ = batch.step(a)
            os_, rbs, ds, _ = solo.step(a[1:2])
            assert np.array_equal(ob[1], os_[0])
            assert rbb.total[1] == rbs.total[0]
            assert db[1] == ds[0]
            if db.any():
                batch.reset(np.nonzero(db)[0])
            if ds[0]:
                solo.reset([0])

    def test_inactive_fingers_stay_on_grasp_targets(self, sphere_shape, sphere_caches):
        env = self._env(sphere_shape, sphere_caches, n=1, active_fingers=(0,))
        env.reset()
        pinned = env.world.q_target[0, 4:].copy()
        rng = np.random.default_rng(1)
        for _ in range(10):
            env.step(rng.uniform(-1, 1, (1, 16)))
        assert np.array_equal(env.world.q_target[0, 4:], pinned)
        assert not np.array_equal(env.world.q_target[0, :4], np.zeros(4))

    def test_absolute_action_mapping(self, sphere_shape, sphere_caches):
        env = self._env(
            sphere_shape, sphere_caches, n=1, incremental=False,
            active_fingers=(0, 1, 2, 3),
        )
        env.reset()
        env.step(np.full((1, 16), -1.0))
        assert np.array_equal(env.world.q_target[0], env.world.hand.q_lo)
        env.reset()
        env.step(np.full((1, 16), 5.0))  # clipped to +1
        assert np.array_equal(env.world.q_target[0], env.world.hand.q_hi)
        env.reset()
        env.step(np.zeros((1, 16)))
        mid = 0.5 * (env.world.hand.q_lo + env.world.hand.q_hi)
        np.testing.assert_allclose(env.world.q_target[0], mid, atol=1e-12)

    def test_info_carries_ground_truth(self, sphere_shape, sphere_caches):
        env = self._env(sphere_shape, sphere_caches)
        env.reset()
        _, _, _, info = env.step(np.zeros((2, 16)))
        assert info["obj_pos"].shape == (2, 3)
        assert info["obj_quat"].shape == (2, 4)
        assert info["omega"].shape == (2, 3)
        assert info["contact_batch"].active.shape == (2, 5)
        assert info["params"].privileged().shape == (2, 7)

    def test_trajectory_logger(self, sphere_shape, sphere_caches, tmp_path):
        env = self._env(sphere_shape, sphere_caches)
        path = tmp_path / "traj.jsonl"
        env.logger = TrajectoryLogger(path)
        env.reset()
        for _ in range(5):
            env.step(np.zeros((2, 16)))
        env.logger.close()
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 10  # 5 steps x 2 envs
        c = RewardCoeffs().with_rotp(env.lambda_rotp)
        for line in lines:
            rec = json.loads(line)
            total = (
                rec["r_rotr"] + c.lambda_rotp * rec["r_rotp"] + c.lambda_pose * rec["r_pose"]
                + c.lambda_linvel * rec["r_linvel"] + c.lambda_work * rec["r_work"]
                + c.lambda_torque * rec["r_torque"]
            )
            assert abs(total - rec["total"]) < 1e-9
