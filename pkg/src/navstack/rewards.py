"""Step rewards under the three weight presets, per-step risk scores, and
per-episode evaluation metrics.

Sign conventions: progress toward the goal is rewarded (R_g multiplies
d_prev - d_now) and the spin penalty uses |omega_z| so both turn directions
count.  The proximity term's singularity is bounded by clamping the minimum
range at 0.05 m; collisions end the episode before that matters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RISK_BAND = 0.6      # clearance below this starts accruing risk
MIN_RANGE_CLAMP = 0.05
DEFAULT_TIMEOUT = 90.0


@dataclass(frozen=True)
class RewardProfile:
    w_g: float
    w_o: float
    w_c: float
    w_r: float
    w_t: float
    w_e: float
    w_a: float


# Preset weights: goal progress, proximity, collision, reach, per-step time,
# timeout, spin.  The obstacle-avoidance preset really does reward elapsed
# time and timeouts (positive w_t, w_e): it optimizes survival, not progress.
GO_STRAIGHT = RewardProfile(w_g=3, w_o=0, w_c=-0.25, w_r=1, w_t=-1, w_e=-1, w_a=-0.5)
OBSTACLE_AVOIDANCE = RewardProfile(w_g=1, w_o=-0.4, w_c=-1, w_r=0.25, w_t=1, w_e=1, w_a=0)
FUSION = RewardProfile(w_g=4, w_o=0, w_c=-1, w_r=1, w_t=0, w_e=0, w_a=0)

PROFILES = {
    "go-straight": GO_STRAIGHT,
    "obstacle-avoidance": OBSTACLE_AVOIDANCE,
    "fusion": FUSION,
}


@dataclass(frozen=True)
class Transition:
    """One control step as the reward function sees it."""

    d_prev: float      # robot-goal distance before the step, meters
    d_now: float       # distance after the step
    min_range: float   # smallest lidar range this step
    omega_z: float     # commanded yaw rate
    collision: bool = False
    reached: bool = False
    timeout: bool = False


def _proximity(min_range: float) -> float:
    m = max(min_range, MIN_RANGE_CLAMP)
    near = max(RISK_BAND - m, 0.0)
    return near / (RISK_BAND - near)


def reward_terms(profile: RewardProfile, t: Transition) -> dict[str, float]:
    return {
        "goal": profile.w_g * (t.d_prev - t.d_now),
        "proximity": profile.w_o * _proximity(t.min_range),
        "collision": profile.w_c * 15.0 if t.collision else 0.0,
        "reach": profile.w_r * 20.0 if t.reached else 0.0,
        "time": profile.w_t * 0.01,
        "timeout": profile.w_e * 5.0 if t.timeout else 0.0,
        "spin": profile.w_a * max(abs(t.omega_z) - 0.3, 0.0),
    }


def step_reward(profile: RewardProfile, t: Transition) -> float:
    terms = reward_terms(profile, t)
    return (
        terms["goal"] + terms["proximity"] + terms["collision"]
        + terms["reach"] + terms["time"] + terms["timeout"] + terms["spin"]
    )


def risk_score(ranges) -> float:
    """Per-step risk from the scan: 0 with clearance >= 0.6 m, growing as
    the nearest return closes in (1.0 at 0.3 m)."""
    m = float(np.min(np.asarray(ranges, dtype=float)))
    return _proximity(m)


@dataclass
class Trajectory:
    """What a finished episode leaves behind for metric computation."""

    min_ranges: np.ndarray  # per-step smallest lidar range
    d_start: float
    d_end: float
    outcome: str            # success | crash | timeout | failed
    sim_time: float
    arrive_time: float | None = None

    @property
    def n_steps(self) -> int:
        return int(self.min_ranges.shape[0])


def episode_metrics(traj: Trajectory) -> dict:
    """The five evaluation quantities for one episode.

    ARSPS is the mean per-step risk score; ANSPS is the normalized net
    approach per step, (D_start - D_end) / (D_start * N_steps); arriving
    time exists only on success.
    """
    n = traj.n_steps
    if n > 0:
        risks = np.array([_proximity(m) for m in traj.min_ranges])
        arsps = float(risks.mean())
    else:
        arsps = 0.0
    if n > 0 and traj.d_start > 0.0:
        ansps = (traj.d_start - traj.d_end) / (traj.d_start * n)
    else:
        ansps = 0.0
    return {
        "success": traj.outcome == "success",
        "crash": traj.outcome == "crash",
        "timeout": traj.outcome == "timeout",
        "arriving_time": traj.arrive_time if traj.outcome == "success" else None,
        "arsps": arsps,
        "ansps": float(ansps),
        "steps": n,
    }


METRICS_CSV_HEADER = (
    "scenario", "seed", "success", "crash", "timeout",
    "arriving_time", "ARSPS", "ANSPS", "steps",
)


def metrics_csv_row(scenario: str, seed: int, metrics: dict) -> tuple:
    return (
        scenario,
        seed,
        int(metrics["success"]),
        int(metrics["crash"]),
        int(metrics["timeout"]),
        metrics["arriving_time"] if metrics["arriving_time"] is not None else "",
        metrics["arsps"],
        metrics["ansps"],
        metrics["steps"],
    )
