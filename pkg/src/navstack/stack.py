"""The episode harness binding both layers on one logical clock.

Per control tick: sense, fold the scan into the map, and act.  At the
planning rate the path and waypoint refresh; at the exploration rate (or
when a trigger fires, honored at the next planning tick) the frontier
candidates are re-scored.  Once the goal cell is known and reachable the
stack plans straight at it.  All cadences run on simulated time.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from . import world as sim
from .exploration import (
    ExplorationConfig,
    ExplorationState,
    candidate_csv_rows,
    score_candidates,
    select_exploration_point,
    should_reselect,
)
from .mapping import CellClass, OccupancyGrid, classify, frontier_cells, integrate_scan, map_entropy
from .planning import blocked_mask, distance_field, extract_waypoint, inflate_occupied, plan_path
from .policy import ObservationConfig, build_observation
from .rewards import Trajectory, episode_metrics, metrics_csv_row
from .scripted import CompositePolicy, scripted_bundle

MODES = ("full", "lower-only", "upper-with-scripted-lower")


@dataclass(frozen=True)
class StackConfig:
    control_hz: float = 30.0
    plan_hz: float = 1.0
    explore_hz: float = 0.2
    arrival_radius: float = 0.3
    timeout: float = 90.0
    mode: str = "full"
    resolution: float = 0.1
    gamma: float = 1.0
    entropy_trigger: float = 0.10
    candidate_cap: int = 64
    min_cluster_size: int = 3  # suppress single-cell raster speckle along walls

    def __post_init__(self) -> None:
        if not (self.control_hz >= self.plan_hz >= self.explore_hz > 0):
            raise ValueError("need control_hz >= plan_hz >= explore_hz > 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


@dataclass
class EpisodeResult:
    outcome: str            # success | crash | timeout | failed
    steps: int
    sim_time: float
    metrics: dict
    trajectory: Trajectory
    poses: np.ndarray
    actions: np.ndarray
    exploration_selections: list  # (sim_time, cell, world_xy)
    goal_known_time: float | None
    cadence: dict
    scored_tables: list = field(default_factory=list)  # (tick, rows) when instrumented
    error: str | None = None


class _TraceWriter:
    def __init__(self, path):
        self._f = open(path, "w")

    def write(self, row: dict) -> None:
        from .fileio import json_text

        self._f.write(json_text(row) + "\n")

    def close(self) -> None:
        self._f.close()


def run_episode(
    spec,
    policy,
    config: StackConfig = StackConfig(),
    obs_config: ObservationConfig | None = None,
    trace_path=None,
    collect_candidates: bool = False,
) -> EpisodeResult:
    """Run one episode and return its outcome, metrics, and trajectory.

    ``policy`` provides action(obs); value(obs) feeds the exploration
    heuristic when present.  In "upper-with-scripted-lower" mode actions
    come from the scripted blend while value() stays with ``policy``.
    Simulator or planner errors mark the episode failed (distinct from a
    crash) instead of propagating.
    """
    if config.mode == "upper-with-scripted-lower":
        policy = CompositePolicy(scripted_bundle(), policy) if hasattr(policy, "value") else scripted_bundle()
    if obs_config is None:
        obs_config = getattr(policy, "obs_config", None) or ObservationConfig()

    world = sim.spawn(spec)
    dt = 1.0 / config.control_hz
    max_ticks = int(round(config.timeout * config.control_hz))
    plan_period = max(1, int(round(config.control_hz / config.plan_hz)))
    explore_period = max(1, int(round(config.control_hz / config.explore_hz)))

    grid = OccupancyGrid.for_bounds(spec.bounds, config.resolution)
    explore_cfg = ExplorationConfig(
        config.gamma, config.entropy_trigger, config.candidate_cap, config.min_cluster_size
    )
    exp_state = ExplorationState()
    scans: deque = deque(maxlen=obs_config.history + 1)

    goal = spec.goal
    d_start = math.hypot(spec.robot_start[0] - goal[0], spec.robot_start[1] - goal[1])
    waypoint: tuple[float, float] | None = None
    goal_mode = False
    goal_known_time: float | None = None
    fallback_held = False

    poses, actions, min_ranges = [], [], []
    selections: list = []
    scored_tables: list = []
    cadence = {"map": 0, "plan": 0, "explore_scheduled": 0, "explore_triggered": 0}
    tracer = _TraceWriter(trace_path) if trace_path else None

    outcome = "timeout"
    error: str | None = None
    try:
        for tick in range(max_ticks):
            scan = sim.raycast(world, obs_config.beams, obs_config.max_range)
            integrate_scan(grid, world.robot.pose, scan, obs_config.max_range)
            cadence["map"] += 1
            scans.append(scan)
            pose = world.robot.pose

            if config.mode != "lower-only" and tick % plan_period == 0:
                snapshot = grid.copy()
                blocked = blocked_mask(snapshot, spec.robot_radius)
                occ_inflated = inflate_occupied(snapshot, spec.robot_radius)
                robot_cell = snapshot.world_to_cell(pose[0], pose[1])
                goal_cell = snapshot.world_to_cell(*goal)

                decision = should_reselect(
                    exp_state, snapshot, goal, pose, explore_cfg, config.arrival_radius
                )
                if decision == "goal_now_known":
                    exp_state.goal_known = True
                    goal_known_time = world.sim_time if goal_known_time is None else goal_known_time
                if not goal_mode and exp_state.goal_known:
                    if classify(snapshot, goal_cell) == CellClass.FREE:
                        trial = plan_path(snapshot, robot_cell, goal_cell, spec.robot_radius, blocked)
                        if trial is not None:
                            goal_mode = True

                if not goal_mode:
                    scheduled = tick % explore_period == 0
                    if scheduled:
                        cadence["explore_scheduled"] += 1
                    if scheduled or decision == "reselect" or exp_state.current_point is None:
                        if decision == "reselect" and not scheduled:
                            cadence["explore_triggered"] += 1
                        frontiers = frontier_cells(snapshot)
                        dist = distance_field(snapshot, robot_cell, spec.robot_radius, blocked)
                        obs_now = build_observation(scans, pose, goal, world.robot.velocity, obs_config.history)
                        critic = _candidate_critic(policy, obs_now, pose)
                        scored = score_candidates(
                            frontiers, snapshot, goal, pose, critic, explore_cfg, dist
                        )
                        if collect_candidates:
                            scored_tables.append((tick, candidate_csv_rows(scored, explore_cfg)))
                        if scored:
                            cell = select_exploration_point(scored, explore_cfg)
                            exp_state.current_point = cell
                            exp_state.entropy_at_selection = map_entropy(snapshot)
                            selections.append((world.sim_time, cell, snapshot.cell_center(cell)))
                            fallback_held = False
                        elif exp_state.current_point is not None and not fallback_held:
                            fallback_held = True  # hold the stale point one cycle
                        elif frontiers:
                            cell = min(
                                frontiers,
                                key=lambda rc: _euclid(snapshot.cell_center(rc), (pose[0], pose[1])),
                            )
                            exp_state.current_point = cell
                            exp_state.entropy_at_selection = map_entropy(snapshot)
                            selections.append((world.sim_time, cell, snapshot.cell_center(cell)))
                            fallback_held = False

                target = goal_cell if goal_mode else exp_state.current_point
                if target is not None:
                    path = plan_path(snapshot, robot_cell, target, spec.robot_radius, blocked)
                    cadence["plan"] += 1
                    if path is not None:
                        waypoint = extract_waypoint(path, snapshot, pose, spec.robot_radius, occ_inflated)
                    elif not goal_mode:
                        exp_state.current_point = None  # force re-selection next cycle

            target_world = goal if config.mode == "lower-only" else (waypoint or (pose[0], pose[1]))
            obs = build_observation(scans, pose, target_world, world.robot.velocity, obs_config.history)
            action = policy.action(obs)
            poses.append(pose.copy())
            actions.append(np.asarray(action, dtype=float).copy())
            min_ranges.append(float(np.min(scan)))

            if tracer:
                alpha = getattr(policy, "alpha", lambda _o: None)(obs)
                tracer.write(
                    {
                        "tick": tick,
                        "t": world.sim_time,
                        "pose": [float(v) for v in pose],
                        "action": [float(v) for v in np.asarray(action)],
                        "alpha": [float(v) for v in alpha] if alpha is not None else None,
                        "waypoint": list(waypoint) if waypoint is not None else None,
                        "exploration_point": list(exp_state.current_point) if exp_state.current_point else None,
                    }
                )

            _, event = sim.step(world, action, dt, config.arrival_radius)
            if event == "collision":
                outcome = "crash"
                break
            if event == "goal_reached":
                outcome = "success"
                break
    except Exception as exc:  # noqa: BLE001 - episode must report, not crash the suite
        outcome = "failed"
        error = f"{type(exc).__name__}: {exc}"
    finally:
        if tracer:
            tracer.close()

    traj = Trajectory(
        min_ranges=np.array(min_ranges),
        d_start=d_start,
        d_end=world.goal_distance(),
        outcome=outcome,
        sim_time=world.sim_time,
        arrive_time=world.sim_time if outcome == "success" else None,
    )
    return EpisodeResult(
        outcome=outcome,
        steps=len(min_ranges),
        sim_time=world.sim_time,
        metrics=episode_metrics(traj),
        trajectory=traj,
        poses=np.array(poses).reshape(-1, 3),
        actions=np.array(actions).reshape(-1, 3),
        exploration_selections=selections,
        goal_known_time=goal_known_time,
        cadence=cadence,
        scored_tables=scored_tables,
        error=error,
    )


def _euclid(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _candidate_critic(policy, obs_now, pose):
    """Bind the live observation; candidates arrive as world points and are
    rotated into the robot frame before the critic sees them."""
    from .policy import goal_in_robot_frame

    value = getattr(policy, "value", None)
    if value is None:
        return lambda _pt: 0.0

    def critic(point_world):
        return value(obs_now.with_goal(goal_in_robot_frame(pose, point_world)))

    return critic


def episode_seed(base_seed: int, scenario_index: int, episode_index: int) -> int:
    ss = np.random.SeedSequence([base_seed, scenario_index, episode_index])
    return int(ss.generate_state(2, dtype=np.uint64)[0] % (2**63))


def run_episode_job(args) -> EpisodeResult:
    """Top-level entry for process pools; one argument tuple so executor.map
    keeps submission order (results reduce deterministically)."""
    spec, policy, config, obs_config, trace_path = args
    return run_episode(spec, policy, config, obs_config, trace_path)


def run_suite(
    specs,
    policy,
    episodes: int,
    seed: int,
    config: StackConfig = StackConfig(),
    obs_config: ObservationConfig | None = None,
) -> tuple[list[tuple], list[EpisodeResult]]:
    """Scenarios x seeds, one metrics row per episode (plus full results)."""
    rows: list[tuple] = []
    results: list[EpisodeResult] = []
    for si, spec in enumerate(specs):
        for ei in range(episodes):
            sd = episode_seed(seed, si, ei)
            ep_spec = replace(spec, seed=sd)
            res = run_episode(ep_spec, policy, config, obs_config)
            rows.append(metrics_csv_row(spec.name, sd, res.metrics))
            results.append(res)
    return rows, results
