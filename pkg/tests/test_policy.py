import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from navstack.policy import (
    CriticParams,
    ExpertBank,
    GatingParams,
    MlpParams,
    Observation,
    ObservationConfig,
    PolicyBundle,
    SingleExpertPolicy,
    act,
    act_with_alpha,
    build_observation,
    critic_value,
    forward,
    fuse,
    gate,
    goal_in_robot_frame,
    load_bundle,
    load_expert,
    safety_heatmap,
    save_bundle,
    save_expert,
    scale_to_limits,
    softmax,
)
from navstack.world import ACTION_HIGH, ACTION_LOW


def random_mlp(sizes, rng):
    x, h1, h2, y = sizes
    return MlpParams(
        rng.normal(0, 0.5, (x, h1)), rng.normal(0, 0.5, h1),
        rng.normal(0, 0.5, (h1, h2)), rng.normal(0, 0.5, h2),
        rng.normal(0, 0.5, (h2, y)), rng.normal(0, 0.5, y),
    )


def random_obs(rng, beams=8, max_range=6.0):
    return Observation(
        ranges=rng.uniform(0.1, max_range, beams),
        motion=rng.normal(0, 1, beams),
        goal=rng.uniform(-5, 5, 2),
        velocity=rng.uniform(-1, 1, 3),
    )


class TestBuildObservation:
    def test_static_stationary_motion_is_zero(self):
        scan = np.full(8, 3.0)
        obs = build_observation([scan] * 4, (0, 0, 0), (1, 0), (0, 0, 0), history=3)
        assert np.array_equal(obs.motion, np.zeros(8))

    def test_padded_history_motion_is_zero(self):
        scan = np.linspace(1, 4, 8)
        obs = build_observation([scan], (0, 0, 0), (1, 0), (0, 0, 0), history=3)
        assert np.array_equal(obs.motion, np.zeros(8))

    def test_hand_built_three_scan_history(self):
        s0 = np.array([1.0, 2.0])  # oldest
        s1 = np.array([1.5, 1.0])
        s2 = np.array([2.0, 4.0])  # current
        obs = build_observation([s0, s1, s2], (0, 0, 0), (1, 0), (0, 0, 0), history=2)
        expected = (s2 - s1) / 1 + (s2 - s0) / 2
        assert np.allclose(obs.motion, expected, atol=1e-15)

    def test_goal_rotated_into_robot_frame(self):
        og = goal_in_robot_frame((1.0, 1.0, math.pi / 2), (1.0, 3.0))
        assert og[0] == pytest.approx(2.0, abs=1e-12)
        assert og[1] == pytest.approx(0.0, abs=1e-12)

    def test_vector_layout(self):
        cfg = ObservationConfig(beams=8)
        rng = np.random.default_rng(0)
        obs = random_obs(rng)
        v = obs.vector()
        assert v.shape == (cfg.dim,)
        assert np.array_equal(v[:8], obs.ranges)
        assert np.array_equal(v[8:16], obs.motion)
        assert np.array_equal(v[16:18], obs.goal)
        assert np.array_equal(v[18:], obs.velocity)

    def test_needs_at_least_one_scan(self):
        with pytest.raises(ValueError):
            build_observation([], (0, 0, 0), (1, 0), (0, 0, 0))


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=1, max_value=5))
def test_motion_zero_for_any_constant_history(seed, history):
    rng = np.random.default_rng(seed)
    scan = rng.uniform(0.1, 6.0, 12)
    obs = build_observation([scan] * (history + 1), (0, 0, 0), (1, 0), (0, 0, 0), history)
    assert np.array_equal(obs.motion, np.zeros(12))


class TestForward:
    def test_zero_params_zero_output(self):
        p = MlpParams.zeros(5, 4, 3, 2)
        out = forward(p, np.ones(5))
        assert np.array_equal(out, np.zeros(2))

    def test_hand_evaluated_scalar_chain(self):
        p = MlpParams(
            np.array([[1.0]]), np.zeros(1),
            np.array([[1.0]]), np.zeros(1),
            np.array([[1.0]]), np.zeros(1),
        )
        out = forward(p, np.array([0.5]))
        assert out[0] == pytest.approx(math.tanh(math.tanh(0.5)), abs=1e-15)

    def test_finite_for_finite_inputs(self):
        rng = np.random.default_rng(1)
        p = random_mlp((21, 6, 5, 3), rng)
        for _ in range(20):
            out = forward(p, rng.uniform(-100, 100, 21))
            assert np.all(np.isfinite(out))

    def test_validate_catches_shape_mismatch(self):
        p = MlpParams.zeros(5, 4, 3, 2)
        p.b1 = np.zeros(7)
        with pytest.raises(ValueError):
            p.validate()


class TestGate:
    def test_equal_logits_uniform(self):
        gating = GatingParams(MlpParams.zeros(21, 4, 4, 4))
        rng = np.random.default_rng(0)
        alpha = gate(gating, random_obs(rng))
        assert np.array_equal(alpha, np.full(4, 0.25))

    def test_dominant_logit(self):
        p = MlpParams.zeros(21, 4, 4, 4)
        p.b2 = np.array([10.0, 0.0, 0.0, 0.0])
        alpha = gate(GatingParams(p), random_obs(np.random.default_rng(0)))
        assert alpha[0] > 0.999

    def test_simplex(self):
        rng = np.random.default_rng(2)
        gating = GatingParams(random_mlp((21, 6, 5, 4), rng))
        for _ in range(50):
            alpha = gate(gating, random_obs(rng))
            assert np.all(alpha >= 0)
            assert np.all(alpha <= 1)
            assert abs(alpha.sum() - 1.0) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(min_value=-50, max_value=50), min_size=4, max_size=4))
def test_softmax_sums_to_one_and_permutes(logits):
    z = np.array(logits)
    s = softmax(z)
    assert abs(s.sum() - 1.0) <= 1e-9
    perm = np.array([2, 0, 3, 1])
    assert np.allclose(softmax(z[perm]), s[perm], atol=1e-12)


def make_bank(rng, sizes=(21, 6, 5, 3)):
    return ExpertBank(tuple(random_mlp(sizes, rng) for _ in range(4)))


class TestFuse:
    def test_one_hot_identity_exact(self):
        rng = np.random.default_rng(3)
        bank = make_bank(rng)
        for n in range(4):
            alpha = np.zeros(4)
            alpha[n] = 1.0
            fused = fuse(bank, alpha)
            for a, b in zip(fused.arrays(), bank.experts[n].arrays()):
                assert np.array_equal(a, b)

    def test_idempotent_on_equal_experts(self):
        rng = np.random.default_rng(4)
        e = random_mlp((21, 6, 5, 3), rng)
        bank = ExpertBank((e, e.copy(), random_mlp((21, 6, 5, 3), rng), random_mlp((21, 6, 5, 3), rng)))
        fused = fuse(bank, np.array([0.5, 0.5, 0.0, 0.0]))
        for a, b in zip(fused.arrays(), e.arrays()):
            assert np.array_equal(a, b)

    def test_convexity(self):
        rng = np.random.default_rng(5)
        bank = make_bank(rng)
        for _ in range(30):
            alpha = rng.dirichlet(np.ones(4))
            fused = fuse(bank, alpha)
            for i, arr in enumerate(fused.arrays()):
                stack = np.stack([e.arrays()[i] for e in bank.experts])
                assert np.all(arr >= stack.min(axis=0) - 1e-12)
                assert np.all(arr <= stack.max(axis=0) + 1e-12)

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(6)
        bad = (random_mlp((21, 6, 5, 3), rng),) * 3 + (random_mlp((21, 7, 5, 3), rng),)
        with pytest.raises(ValueError):
            ExpertBank(bad)

    def test_wrong_expert_count_rejected(self):
        rng = np.random.default_rng(7)
        with pytest.raises(ValueError):
            ExpertBank((random_mlp((21, 6, 5, 3), rng),) * 3)


class TestAct:
    def test_one_hot_gate_equals_expert(self):
        rng = np.random.default_rng(8)
        bank = make_bank(rng)
        obs = random_obs(rng)
        for n in range(4):
            alpha = np.zeros(4)
            alpha[n] = 1.0
            via_fusion = act_with_alpha(bank, alpha, obs)
            direct = np.clip(scale_to_limits(forward(bank.experts[n], obs)), ACTION_LOW, ACTION_HIGH)
            assert np.array_equal(via_fusion, direct)

    def test_limits_respected(self):
        rng = np.random.default_rng(9)
        bank = make_bank(rng)
        gating = GatingParams(random_mlp((21, 6, 5, 4), rng))
        for _ in range(1000):
            a = act(bank, gating, random_obs(rng))
            assert np.all(a >= ACTION_LOW)
            assert np.all(a <= ACTION_HIGH)

    def test_mapping_limits_bulk(self):
        rng = np.random.default_rng(10)
        raw = rng.normal(0, 50, (100_000, 3))
        mapped = scale_to_limits(raw)
        assert np.all(mapped >= ACTION_LOW)
        assert np.all(mapped <= ACTION_HIGH)

    def test_training_noise_reproducible(self):
        rng = np.random.default_rng(11)
        bank = make_bank(rng)
        gating = GatingParams(random_mlp((21, 6, 5, 4), rng))
        obs = random_obs(rng)
        a1 = act(bank, gating, obs, noise_std=0.1, rng=np.random.default_rng(77))
        a2 = act(bank, gating, obs, noise_std=0.1, rng=np.random.default_rng(77))
        assert np.array_equal(a1, a2)
        a3 = act(bank, gating, obs)
        assert not np.array_equal(a1, a3)


class TestCritic:
    def test_zero_params_zero_value(self):
        critic = CriticParams(MlpParams.zeros(21, 4, 3, 1))
        assert critic_value(critic, random_obs(np.random.default_rng(0))) == 0.0

    def test_pure(self):
        rng = np.random.default_rng(12)
        critic = CriticParams(random_mlp((21, 5, 4, 1), rng))
        obs = random_obs(rng)
        assert critic_value(critic, obs) == critic_value(critic, obs)

    def test_hand_built_2_2_2_1(self):
        w0 = np.array([[0.5, -0.25], [1.0, 0.75]])
        b0 = np.array([0.1, -0.2])
        w1 = np.array([[0.3, 0.6], [-0.4, 0.2]])
        b1 = np.array([0.05, 0.0])
        w2 = np.array([[1.5], [-2.0]])
        b2 = np.array([0.25])
        critic = CriticParams(MlpParams(w0, b0, w1, b1, w2, b2))
        x = np.array([0.4, -0.7])
        h1 = np.tanh(np.array([
            0.4 * 0.5 + (-0.7) * 1.0 + 0.1,
            0.4 * -0.25 + (-0.7) * 0.75 + -0.2,
        ]))
        h2 = np.tanh(np.array([
            h1[0] * 0.3 + h1[1] * -0.4 + 0.05,
            h1[0] * 0.6 + h1[1] * 0.2 + 0.0,
        ]))
        expected = h2[0] * 1.5 + h2[1] * -2.0 + 0.25
        assert critic_value(critic, x) == pytest.approx(expected, abs=1e-14)


class TestHeatmap:
    def _obs(self):
        return random_obs(np.random.default_rng(0))

    def test_constant_critic_uniform(self):
        critic = CriticParams(MlpParams.zeros(21, 4, 3, 1))
        values = safety_heatmap(critic, self._obs(), (-2, -2, 2, 2), stride=0.5)
        assert np.all(values == 0.5)

    def test_single_point_region(self):
        rng = np.random.default_rng(13)
        critic = CriticParams(random_mlp((21, 5, 4, 1), rng))
        values = safety_heatmap(critic, self._obs(), (1.0, -0.5, 1.0, -0.5), stride=0.25)
        assert values.shape == (1, 1)

    def test_symmetry_for_goal_sign_invariant_critic(self):
        rng = np.random.default_rng(14)
        p = random_mlp((21, 5, 4, 1), rng)
        p.w0[17, :] = 0.0  # kill the goal-y input row: value invariant to its sign
        critic = CriticParams(p)
        values = safety_heatmap(critic, self._obs(), (-1.0, -1.0, 1.0, 1.0), stride=0.5)
        assert values.shape == (5, 5)
        assert np.allclose(values, values[::-1, :], atol=1e-12)


class TestPersistence:
    def test_bundle_round_trip(self, tmp_path):
        rng = np.random.default_rng(15)
        bundle = PolicyBundle(
            obs_config=ObservationConfig(beams=8),
            bank=make_bank(rng),
            gating=GatingParams(random_mlp((21, 6, 5, 4), rng)),
            critic=CriticParams(random_mlp((21, 6, 5, 1), rng)),
        )
        path = tmp_path / "bundle.json"
        save_bundle(bundle, path)
        loaded = load_bundle(path)
        assert loaded.obs_config == bundle.obs_config
        for a, b in zip(loaded.bank.experts, bundle.bank.experts):
            for x, y in zip(a.arrays(), b.arrays()):
                assert np.array_equal(x, y)
        obs = random_obs(rng)
        assert np.array_equal(loaded.action(obs), bundle.action(obs))
        assert loaded.value(obs) == bundle.value(obs)

    def test_expert_round_trip(self, tmp_path):
        rng = np.random.default_rng(16)
        params = random_mlp((21, 6, 5, 3), rng)
        path = tmp_path / "expert.json"
        save_expert(params, "go-straight", ObservationConfig(beams=8), path)
        loaded, profile, cfg = load_expert(path)
        assert profile == "go-straight"
        assert cfg.beams == 8
        for x, y in zip(loaded.arrays(), params.arrays()):
            assert np.array_equal(x, y)

    def test_wrong_kind_rejected(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text(json.dumps({"schema": 1, "kind": "other"}))
        with pytest.raises(ValueError):
            load_bundle(path)
        with pytest.raises(ValueError):
            load_expert(path)


def test_single_expert_policy_matches_one_hot_rollout_step():
    rng = np.random.default_rng(17)
    cfg = ObservationConfig(beams=8)
    bank = make_bank(rng)
    obs = random_obs(rng)
    single = SingleExpertPolicy(cfg, bank.experts[2])
    alpha = np.array([0.0, 0.0, 1.0, 0.0])
    assert np.array_equal(single.action(obs), act_with_alpha(bank, alpha, obs))
