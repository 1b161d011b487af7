"""Desk-scale two-stage training with a cross-entropy-method optimizer.

Stage 1 trains the go-straight and obstacle-avoidance experts in their own
scenario diets; stage 2 replicates them into a four-expert bank and
co-trains bank + gating + critic on mixed tasks.  Candidates are sampled in
parameter space around a mean, scored by mean episodic return over a fixed
seed block (common random numbers across the population), and the elite
mean becomes the next center.  The critic's output layer is refit by ridge
regression to discounted returns observed on elite rollouts, so no gradient
machinery is needed anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import world as sim
from .policy import (
    CriticParams,
    ExpertBank,
    GatingParams,
    MlpParams,
    NUM_EXPERTS,
    ObservationConfig,
    PolicyBundle,
    SingleExpertPolicy,
    build_observation,
)
from .rewards import PROFILES, RewardProfile, Trajectory, Transition, episode_metrics, step_reward

DISCOUNT = 0.99
HIDDEN = (64, 64)


class TrainingError(RuntimeError):
    """Raised when training fails to improve on its baselines."""


@dataclass(frozen=True)
class TrainConfig:
    population: int = 64
    elite_fraction: float = 0.125
    noise_std: float = 0.4
    noise_decay: float = 0.97
    generations: int = 60
    episodes_per_eval: int = 8
    seed: int = 0
    episode_time_limit: float = 12.0

    def __post_init__(self) -> None:
        if self.population < 4:
            raise ValueError("population must be >= 4")
        if not (0 < self.elite_fraction < 1):
            raise ValueError("elite_fraction must be in (0, 1)")
        if self.noise_std <= 0:
            raise ValueError("noise_std must be > 0")

    @property
    def n_elite(self) -> int:
        return max(1, int(round(self.population * self.elite_fraction)))


# ---------------------------------------------------------------------------
# Parameter vector packing


def flatten_mlp(p: MlpParams) -> np.ndarray:
    return np.concatenate([a.reshape(-1) for a in p.arrays()])


def mlp_scale_vector(sizes: tuple[int, int, int, int], input_scales: np.ndarray) -> np.ndarray:
    """Per-parameter perturbation unit: the init std of each entry, so CEM
    noise stays proportionate across layers and feature magnitudes."""
    return np.concatenate([a.reshape(-1) for a in MlpParams.init_stds(sizes, input_scales)])


def unflatten_mlp(vec: np.ndarray, sizes: tuple[int, int, int, int]) -> MlpParams:
    x, h1, h2, y = sizes
    shapes = ((x, h1), (h1,), (h1, h2), (h2,), (h2, y), (y,))
    arrays = []
    off = 0
    for shape in shapes:
        n = int(np.prod(shape))
        arrays.append(vec[off:off + n].reshape(shape).copy())
        off += n
    return MlpParams(*arrays)


def mlp_size(sizes: tuple[int, int, int, int]) -> int:
    x, h1, h2, y = sizes
    return x * h1 + h1 + h1 * h2 + h2 + h2 * y + y


# ---------------------------------------------------------------------------
# Fast lower-layer rollouts (no mapping, goal fed straight to the policy)


def rollout_lower(
    spec,
    policy,
    profile: RewardProfile,
    obs_config: ObservationConfig,
    time_limit: float,
    noise_std: float = 0.0,
    noise_seed: int = 0,
    collect: bool = False,
):
    """One lower-layer episode; returns (return, trajectory, obs_matrix,
    rewards) where the last two are None unless ``collect``."""
    world = sim.spawn(spec)
    dt = sim.CONTROL_DT
    max_ticks = int(round(time_limit / dt))
    rng = np.random.Generator(np.random.PCG64(noise_seed)) if noise_std > 0 else None
    scans: list[np.ndarray] = []
    obs_rows = [] if collect else None
    rewards = [] if collect else None
    total = 0.0
    d_prev = world.goal_distance()
    d_start = d_prev
    min_ranges = []
    outcome = "timeout"
    for tick in range(max_ticks):
        scan = sim.raycast(world, obs_config.beams, obs_config.max_range)
        scans.append(scan)
        if len(scans) > obs_config.history + 1:
            scans.pop(0)
        obs = build_observation(scans, world.robot.pose, spec.goal, world.robot.velocity, obs_config.history)
        action = policy.action(obs, noise_std=noise_std, rng=rng)
        _, event = sim.step(world, action, dt)
        d_now = world.goal_distance()
        t = Transition(
            d_prev=d_prev,
            d_now=d_now,
            min_range=float(np.min(scan)),
            omega_z=float(action[2]),
            collision=event == "collision",
            reached=event == "goal_reached",
            timeout=(tick == max_ticks - 1 and event == "none"),
        )
        r = step_reward(profile, t)
        total += r
        if collect:
            obs_rows.append(obs.vector())
            rewards.append(r)
        min_ranges.append(t.min_range)
        d_prev = d_now
        if event == "collision":
            outcome = "crash"
            break
        if event == "goal_reached":
            outcome = "success"
            break
    traj = Trajectory(
        min_ranges=np.array(min_ranges),
        d_start=d_start,
        d_end=world.goal_distance(),
        outcome=outcome,
        sim_time=world.sim_time,
        arrive_time=world.sim_time if outcome == "success" else None,
    )
    if collect:
        return total, traj, np.array(obs_rows), np.array(rewards)
    return total, traj, None, None


def _eval_candidate(policy, scenario_set, seeds, profile, obs_config, time_limit) -> float:
    total = 0.0
    for sd in seeds:
        # The seed also picks the scenario, so every generation samples the
        # whole task set instead of replaying its head.
        spec = replace(scenario_set[int(sd) % len(scenario_set)], seed=int(sd))
        ret, _, _, _ = rollout_lower(spec, policy, profile, obs_config, time_limit)
        total += ret
    return total / len(seeds)


def _episode_seeds(master: np.random.Generator, count: int) -> np.ndarray:
    return master.integers(0, 2**62, size=count)


# ---------------------------------------------------------------------------
# Stage 1: single experts


def train_expert(
    profile_name: str,
    scenario_set,
    config: TrainConfig,
    obs_config: ObservationConfig = ObservationConfig(),
    on_generation=None,
) -> MlpParams:
    """CEM-train one expert under the named reward preset.

    Returns the best candidate parameters seen anywhere in the run.  Raises
    TrainingError if the run never improves on its own starting point, or if
    the result fails to beat the all-zero policy on held-out seeds.
    """
    profile = PROFILES[profile_name]
    sizes = (obs_config.dim, HIDDEN[0], HIDDEN[1], 3)
    master = np.random.Generator(np.random.PCG64(config.seed))
    mean = flatten_mlp(MlpParams.random(*sizes, rng=master, input_scales=obs_config.feature_scales()))
    if config.generations == 0:
        return unflatten_mlp(mean, sizes)

    def make_policy(vec: np.ndarray) -> SingleExpertPolicy:
        return SingleExpertPolicy(obs_config, unflatten_mlp(vec, sizes))

    scales = mlp_scale_vector(sizes, obs_config.feature_scales())
    best_vec, best_ret, init_ret = _cem(
        mean,
        scales,
        make_policy,
        scenario_set,
        profile,
        obs_config,
        config,
        master,
        on_generation,
    )
    if best_ret <= init_ret:
        raise TrainingError(
            f"{profile_name}: no improvement over the initial policy "
            f"({best_ret:.3f} <= {init_ret:.3f})"
        )
    _require_beats_zero(make_policy(best_vec), sizes, scenario_set, profile, obs_config, config)
    return unflatten_mlp(best_vec, sizes)


def _require_beats_zero(policy, sizes, scenario_set, profile, obs_config, config) -> None:
    holdout = _episode_seeds(np.random.Generator(np.random.PCG64(config.seed + 7919)), 16)
    zero = SingleExpertPolicy(obs_config, MlpParams.zeros(*sizes))
    trained = _eval_candidate(policy, scenario_set, holdout, profile, obs_config, config.episode_time_limit)
    baseline = _eval_candidate(zero, scenario_set, holdout, profile, obs_config, config.episode_time_limit)
    if trained <= baseline:
        raise TrainingError(
            f"trained return {trained:.3f} does not beat the zero policy {baseline:.3f} on held-out seeds"
        )


def _cem(mean, scales, make_policy, scenario_set, profile, obs_config, config, master, on_generation):
    """Shared CEM loop; returns (best_vec, best_return, initial_return).

    Perturbations are sigma * scales * N(0, 1): proportional to each
    parameter's init magnitude.  Episode seeds are shared across the
    population (common random numbers) so candidates are comparable.
    """
    sigma = config.noise_std
    dim = mean.shape[0]
    best_vec = mean.copy()
    best_ret = -math.inf
    init_ret: float | None = None
    for gen in range(config.generations):
        seeds = _episode_seeds(master, config.episodes_per_eval)
        noise = master.normal(0.0, 1.0, (config.population, dim))
        noise[0] = 0.0  # the mean itself is always a candidate
        returns = np.empty(config.population)
        for i in range(config.population):
            vec = mean + sigma * scales * noise[i]
            returns[i] = _eval_candidate(
                make_policy(vec), scenario_set, seeds, profile, obs_config, config.episode_time_limit
            )
        if init_ret is None:
            init_ret = float(returns[0])
        order = np.argsort(-returns, kind="stable")
        elites = order[: config.n_elite]
        gen_best = int(order[0])
        if returns[gen_best] > best_ret:
            best_ret = float(returns[gen_best])
            best_vec = mean + sigma * scales * noise[gen_best]
        mean = mean + sigma * scales * noise[elites].mean(axis=0)
        sigma = max(sigma * config.noise_decay, 1e-3)
        if on_generation is not None:
            on_generation(
                {
                    "generation": gen,
                    "best_return": best_ret,
                    "gen_best_return": float(returns[gen_best]),
                    "mean_return": float(returns.mean()),
                    "sigma": sigma,
                }
            )
    return best_vec, best_ret, float(init_ret)


# ---------------------------------------------------------------------------
# Stage 2: bank + gating + critic co-training


@dataclass
class _FusionLayout:
    expert_sizes: tuple[int, int, int, int]
    gating_sizes: tuple[int, int, int, int]
    critic_sizes: tuple[int, int, int, int]

    @property
    def expert_len(self) -> int:
        return mlp_size(self.expert_sizes)

    def split(self, vec: np.ndarray) -> tuple[ExpertBank, GatingParams, CriticParams]:
        off = 0
        experts = []
        for _ in range(NUM_EXPERTS):
            experts.append(unflatten_mlp(vec[off:off + self.expert_len], self.expert_sizes))
            off += self.expert_len
        g_len = mlp_size(self.gating_sizes)
        gating = GatingParams(unflatten_mlp(vec[off:off + g_len], self.gating_sizes))
        off += g_len
        c_len = mlp_size(self.critic_sizes)
        critic = CriticParams(unflatten_mlp(vec[off:off + c_len], self.critic_sizes))
        return ExpertBank(tuple(experts)), gating, critic

    def join(self, bank: ExpertBank, gating: GatingParams, critic: CriticParams) -> np.ndarray:
        parts = [flatten_mlp(e) for e in bank.experts]
        parts.append(flatten_mlp(gating.params))
        parts.append(flatten_mlp(critic.params))
        return np.concatenate(parts)

    def scale_vector(self, input_scales: np.ndarray) -> np.ndarray:
        expert = mlp_scale_vector(self.expert_sizes, input_scales)
        return np.concatenate(
            [expert] * NUM_EXPERTS
            + [mlp_scale_vector(self.gating_sizes, input_scales)]
            + [mlp_scale_vector(self.critic_sizes, input_scales)]
        )


def init_fusion_vector(
    expert_a: MlpParams,
    expert_b: MlpParams,
    obs_config: ObservationConfig,
    seed: int,
) -> tuple[np.ndarray, _FusionLayout]:
    """Stage-2 start: bank [a, b, a, b], small random gating, random critic."""
    if expert_a.sizes != expert_b.sizes:
        raise ValueError("experts must share one shape")
    layout = _FusionLayout(
        expert_sizes=expert_a.sizes,
        gating_sizes=(obs_config.dim, HIDDEN[0], HIDDEN[1], NUM_EXPERTS),
        critic_sizes=(obs_config.dim, HIDDEN[0], HIDDEN[1], 1),
    )
    rng = np.random.Generator(np.random.PCG64(seed))
    scales = obs_config.feature_scales()
    gating = GatingParams(MlpParams.random(*layout.gating_sizes, rng=rng, input_scales=scales))
    gating.params.w2 *= 0.1  # start near-uniform so the bank average acts first
    critic = CriticParams(MlpParams.random(*layout.critic_sizes, rng=rng, input_scales=scales))
    bank = ExpertBank((expert_a.copy(), expert_b.copy(), expert_a.copy(), expert_b.copy()))
    return layout.join(bank, gating, critic), layout


def _refit_critic_head(critic: CriticParams, obs_matrix: np.ndarray, targets: np.ndarray,
                       ridge: float = 1.0) -> None:
    """Ridge-fit the critic's linear output layer on hidden features."""
    p = critic.params
    h = np.tanh(obs_matrix @ p.w0 + p.b0)
    h = np.tanh(h @ p.w1 + p.b1)
    phi = np.concatenate([h, np.ones((h.shape[0], 1))], axis=1)
    a = phi.T @ phi + ridge * np.eye(phi.shape[1])
    w = np.linalg.solve(a, phi.T @ targets)
    p.w2[:, 0] = w[:-1]
    p.b2[0] = w[-1]


def _discounted_returns(rewards: np.ndarray) -> np.ndarray:
    g = np.zeros_like(rewards)
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + DISCOUNT * acc
        g[i] = acc
    return g


def cotrain_fusion(
    expert_a: MlpParams,
    expert_b: MlpParams,
    scenario_mix,
    config: TrainConfig,
    obs_config: ObservationConfig = ObservationConfig(),
    on_generation=None,
) -> tuple[ExpertBank, GatingParams, CriticParams]:
    """Co-train the replicated bank, gating, and critic under the fusion
    reward preset; the critic head is refit each generation by regression on
    elite-rollout discounted returns."""
    profile = PROFILES["fusion"]
    master = np.random.Generator(np.random.PCG64(config.seed))
    mean, layout = init_fusion_vector(expert_a, expert_b, obs_config, config.seed)
    if config.generations == 0:
        return layout.split(mean)

    def make_policy(vec: np.ndarray) -> PolicyBundle:
        bank, gating, critic = layout.split(vec)
        return PolicyBundle(obs_config, bank, gating, critic)

    sigma = config.noise_std
    dim = mean.shape[0]
    scales = layout.scale_vector(obs_config.feature_scales())
    best_vec = mean.copy()
    best_ret = -math.inf
    init_ret: float | None = None
    buffer_obs: list[np.ndarray] = []
    buffer_g: list[np.ndarray] = []
    for gen in range(config.generations):
        seeds = _episode_seeds(master, config.episodes_per_eval)
        noise = master.normal(0.0, 1.0, (config.population, dim))
        noise[0] = 0.0
        returns = np.empty(config.population)
        for i in range(config.population):
            returns[i] = _eval_candidate(
                make_policy(mean + sigma * scales * noise[i]), scenario_mix, seeds,
                profile, obs_config, config.episode_time_limit,
            )
        if init_ret is None:
            init_ret = float(returns[0])
        order = np.argsort(-returns, kind="stable")
        elites = order[: config.n_elite]
        if returns[order[0]] > best_ret:
            best_ret = float(returns[order[0]])
            best_vec = mean + sigma * scales * noise[order[0]]

        # Elite rollouts feed the critic's regression targets (re-run on the
        # generation's seeds, so the data matches what was scored).
        for j, i in enumerate(elites[: min(4, len(elites))]):
            policy = make_policy(mean + sigma * scales * noise[i])
            spec = replace(
                scenario_mix[(gen + j) % len(scenario_mix)],
                seed=int(seeds[j % len(seeds)]),
            )
            _, _, obs_m, rews = rollout_lower(
                spec, policy, profile, obs_config, config.episode_time_limit, collect=True
            )
            if obs_m is not None and len(obs_m):
                buffer_obs.append(obs_m)
                buffer_g.append(_discounted_returns(rews))
        mean = mean + sigma * scales * noise[elites].mean(axis=0)
        if buffer_obs:
            obs_all = np.concatenate(buffer_obs)[-40000:]
            g_all = np.concatenate(buffer_g)[-40000:]
            _, _, critic_mean = layout.split(mean)
            _refit_critic_head(critic_mean, obs_all, g_all)
            bank_m, gating_m, _ = layout.split(mean)
            mean = layout.join(bank_m, gating_m, critic_mean)
        sigma = max(sigma * config.noise_decay, 1e-3)
        if on_generation is not None:
            on_generation(
                {
                    "generation": gen,
                    "best_return": best_ret,
                    "gen_best_return": float(returns[order[0]]),
                    "mean_return": float(returns.mean()),
                    "sigma": sigma,
                }
            )
    if best_ret <= init_ret:
        raise TrainingError(
            f"fusion co-training did not improve ({best_ret:.3f} <= {init_ret:.3f})"
        )
    bank, gating, _ = layout.split(best_vec)
    _, _, critic = layout.split(mean)  # carries the latest regression fit
    if buffer_obs:
        _refit_critic_head(critic, np.concatenate(buffer_obs)[-40000:], np.concatenate(buffer_g)[-40000:])
    return bank, gating, critic


# ---------------------------------------------------------------------------
# Evaluation harness


def evaluate(
    policy,
    scenario_set,
    episodes: int,
    seed: int,
    mode: str = "lower-only",
    obs_config: ObservationConfig = ObservationConfig(),
    time_limit: float = 30.0,
    bootstrap: int = 1000,
) -> dict:
    """Aggregate the five metrics over episodes with 95% bootstrap CIs.

    mode "lower-only" runs the fast goal-direct rollouts; "full" runs the
    whole hierarchical stack.
    """
    if episodes == 0:
        return {"episodes": 0, "empty": True}
    per_ep: list[dict] = []
    if mode == "full":
        from .stack import StackConfig, run_suite

        cfg = StackConfig(timeout=time_limit)
        _, results = run_suite(scenario_set, policy, episodes, seed, cfg, obs_config)
        per_ep = [r.metrics for r in results]
    else:
        master = np.random.Generator(np.random.PCG64(seed))
        seeds = _episode_seeds(master, episodes * len(scenario_set))
        k = 0
        for spec in scenario_set:
            for _ in range(episodes):
                ep_spec = replace(spec, seed=int(seeds[k]))
                k += 1
                _, traj, _, _ = rollout_lower(
                    ep_spec, policy, PROFILES["fusion"], obs_config, time_limit
                )
                per_ep.append(episode_metrics(traj))
    out: dict = {"episodes": len(per_ep), "empty": False}
    rng = np.random.Generator(np.random.PCG64(seed + 1))
    for key in ("success", "crash", "timeout"):
        vals = np.array([float(m[key]) for m in per_ep])
        out[f"{key}_rate"] = float(vals.mean())
        out[f"{key}_rate_ci"] = _bootstrap_ci(vals, rng, bootstrap)
    for key in ("arsps", "ansps"):
        vals = np.array([m[key] for m in per_ep])
        out[f"{key}_mean"] = float(vals.mean())
        out[f"{key}_ci"] = _bootstrap_ci(vals, rng, bootstrap)
    times = np.array([m["arriving_time"] for m in per_ep if m["arriving_time"] is not None])
    out["arriving_time_mean"] = float(times.mean()) if times.size else None
    out["arriving_time_ci"] = _bootstrap_ci(times, rng, bootstrap) if times.size else None
    return out


def _bootstrap_ci(values: np.ndarray, rng: np.random.Generator, n: int) -> tuple[float, float]:
    if values.size == 0:
        return (math.nan, math.nan)
    idx = rng.integers(0, values.size, size=(n, values.size))
    means = values[idx].mean(axis=1)
    return (float(np.percentile(means, 2.5)), float(np.percentile(means, 97.5)))
