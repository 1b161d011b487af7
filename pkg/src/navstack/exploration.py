"""Exploration-point selection from frontier candidates.

Candidates are frontier clusters scored by two factors: a distance factor
(Euclidean candidate-to-goal plus planned path cost from the robot) and a
safety factor (the critic's value with the candidate substituted as the
goal feature).  Both are min-max normalized over the candidate set and
combined as normalized_distance + gamma * normalized_safety_deficit; the
candidate minimizing the sum wins.  Four triggers force re-selection:
a large relative map-entropy change, arrival at the point, the point losing
its frontier status, and the goal turning known.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import label

from .mapping import CellClass, OccupancyGrid, classify, map_entropy
from .planning import distance_field

_ENTROPY_EPS = 1e-12


@dataclass(frozen=True)
class ExplorationConfig:
    gamma: float = 1.0            # weight of the safety factor
    entropy_trigger: float = 0.10  # relative map-entropy change that forces re-selection
    candidate_cap: int = 64        # max frontier clusters scored per cycle
    min_cluster_size: int = 1      # clusters below this are noise, not candidates

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.entropy_trigger <= 0:
            raise ValueError("entropy_trigger must be > 0")


@dataclass
class ExplorationState:
    current_point: tuple[int, int] | None = None
    entropy_at_selection: float = math.nan
    goal_known: bool = False


@dataclass(frozen=True)
class ScoredCandidate:
    cell: tuple[int, int]
    d1: float   # Euclidean distance candidate -> goal, meters
    d2: float   # planned path length robot -> candidate, meters
    v: float    # critic value with the candidate as the goal feature

    @property
    def d(self) -> float:
        return self.d1 + self.d2


def cluster_representatives(frontiers, grid_shape, cap: int, min_size: int = 1) -> list[tuple[int, int]]:
    """One representative cell per 8-connected frontier cluster.

    The representative is the member nearest the cluster centroid (ties to
    the row-major smallest).  Clusters smaller than ``min_size`` are treated
    as raster noise and skipped; when more than ``cap`` clusters remain the
    largest win, ties again row-major.
    """
    if not frontiers:
        return []
    mask = np.zeros(grid_shape, dtype=bool)
    rows = np.array([c[0] for c in frontiers])
    cols = np.array([c[1] for c in frontiers])
    mask[rows, cols] = True
    labels, count = label(mask, structure=np.ones((3, 3), dtype=int))
    reps: list[tuple[int, tuple[int, int]]] = []
    for k in range(1, count + 1):
        members = np.argwhere(labels == k)
        if len(members) < min_size:
            continue
        centroid = members.mean(axis=0)
        d2 = np.sum((members - centroid) ** 2, axis=1)
        order = np.lexsort((members[:, 1], members[:, 0], d2))
        rep = tuple(int(v) for v in members[order[0]])
        reps.append((len(members), rep))
    reps.sort(key=lambda t: (-t[0], t[1]))
    return [rep for _, rep in reps[:cap]]


def score_candidates(
    frontiers,
    grid: OccupancyGrid,
    goal: tuple[float, float],
    current_pose,
    critic,
    config: ExplorationConfig = ExplorationConfig(),
    dist_field: np.ndarray | None = None,
) -> list[ScoredCandidate]:
    """Score one representative per frontier cluster; drop unreachable ones.

    ``critic`` is a callable mapping a candidate's world point to its safety
    value (the episode harness binds the live observation and network).
    ``dist_field`` may carry a precomputed Dijkstra flood from the robot
    cell; otherwise one is computed here.
    """
    reps = cluster_representatives(frontiers, grid.p.shape, config.candidate_cap, config.min_cluster_size)
    if not reps:
        return []
    if dist_field is None:
        start = grid.world_to_cell(float(current_pose[0]), float(current_pose[1]))
        dist_field = distance_field(grid, start)
    out: list[ScoredCandidate] = []
    for cell in reps:
        d2 = float(dist_field[cell[0], cell[1]])
        if not math.isfinite(d2):
            continue
        cx, cy = grid.cell_center(cell)
        d1 = math.hypot(cx - goal[0], cy - goal[1])
        out.append(ScoredCandidate(cell=cell, d1=d1, d2=d2, v=float(critic((cx, cy)))))
    return out


def _normalized_scores(scored, gamma: float) -> list[float]:
    d = np.array([s.d for s in scored])
    v = np.array([s.v for s in scored])
    d_span = d.max() - d.min()
    v_span = v.max() - v.min()
    # A constant factor cannot discriminate, so its normalized term is 0.
    dn = (d - d.min()) / d_span if d_span > 0 else np.zeros_like(d)
    vn = gamma * (v.max() - v) / v_span if v_span > 0 else np.zeros_like(v)
    return list(dn + vn)


def select_exploration_point(scored, config: ExplorationConfig = ExplorationConfig()) -> tuple[int, int]:
    """Argmin of the combined normalized score; ties break to the smaller
    distance factor, then to the row-major smallest cell."""
    if not scored:
        raise ValueError("cannot select from an empty candidate list")
    totals = _normalized_scores(scored, config.gamma)
    best = min(range(len(scored)), key=lambda i: (totals[i], scored[i].d, scored[i].cell))
    return scored[best].cell


def should_reselect(
    state: ExplorationState,
    grid: OccupancyGrid,
    goal: tuple[float, float],
    current_pose,
    config: ExplorationConfig = ExplorationConfig(),
    arrival_radius: float = 0.3,
) -> str:
    """One of "no", "reselect", "goal_now_known".

    goal_now_known dominates: once the goal cell leaves the unknown class
    the stack should plan straight at it and stop exploring.
    """
    goal_cell = grid.world_to_cell(*goal)
    goal_known = grid.in_grid(goal_cell) and classify(grid, goal_cell) != CellClass.UNKNOWN
    if goal_known and not state.goal_known:
        return "goal_now_known"
    if state.current_point is None:
        return "reselect"

    h_now = map_entropy(grid)
    h_ref = state.entropy_at_selection
    if math.isfinite(h_ref):
        rel = abs(h_now - h_ref) / max(h_ref, _ENTROPY_EPS)
        if rel > config.entropy_trigger:
            return "reselect"

    px, py = grid.cell_center(state.current_point)
    if math.hypot(current_pose[0] - px, current_pose[1] - py) < arrival_radius:
        return "reselect"

    if not _is_frontier_cell(grid, state.current_point):
        return "reselect"
    return "no"


def _is_frontier_cell(grid: OccupancyGrid, cell: tuple[int, int]) -> bool:
    if not grid.in_grid(cell) or classify(grid, cell) != CellClass.FREE:
        return False
    r, c = cell
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            n = (r + dr, c + dc)
            if grid.in_grid(n) and classify(grid, n) == CellClass.UNKNOWN:
                return True
    return False


def candidate_csv_rows(scored, config: ExplorationConfig) -> list[tuple]:
    """Debug table: one row per candidate with both factors and the final
    normalized score."""
    if not scored:
        return []
    totals = _normalized_scores(scored, config.gamma)
    return [
        (s.cell[0], s.cell[1], s.d1, s.d2, s.d, s.v, t)
        for s, t in zip(scored, totals)
    ]


CANDIDATE_CSV_HEADER = ("row", "col", "d1", "d2", "d_total", "v_safety", "score")
