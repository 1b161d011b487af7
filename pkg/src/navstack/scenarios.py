"""Built-in scenario generators and the versioned scenario JSON format.

The four fixed names: ``blind-alley`` (a dead-end pocket between the robot
and the goal), ``double-branch`` (two symmetric corridors, the left one
crowded with walkers), ``rooms`` (static walls and roadblocks), and
``square`` (an open box of fast random walkers, twice the robot's top
speed).  Each generator is a pure function of its seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from .mapping import OccupancyGrid, P_MAX, P_MIN
from .planning import plan_path
from .world import MAX_FORWARD_SPEED, ObstacleSpec, ROBOT_RADIUS, ScenarioSpec

SCENARIO_SCHEMA = 1
BUILTIN_NAMES = ("blind-alley", "double-branch", "rooms", "square")


def _perimeter(bounds) -> tuple[tuple[float, float, float, float], ...]:
    x0, y0, x1, y1 = bounds
    return (
        (x0, y0, x1, y0),
        (x1, y0, x1, y1),
        (x1, y1, x0, y1),
        (x0, y1, x0, y0),
    )


def blind_alley(seed: int = 0) -> ScenarioSpec:
    """Dead-end pocket: the robot starts inside a U of walls opening away
    from the goal, which sits behind the closed end."""
    rng = np.random.default_rng(seed)
    bounds = (0.0, 0.0, 10.0, 8.0)
    # Wall coordinates sit on cell centers (x.x5 at 0.1 m resolution) so that
    # lidar hits from either side rasterize into the same occupied row.
    walls = _perimeter(bounds) + (
        (3.05, 4.95, 6.95, 4.95),   # alley top
        (3.05, 3.05, 6.95, 3.05),   # alley bottom
        (6.95, 3.05, 6.95, 4.95),   # closed end
    )
    sx = 5.5 + rng.uniform(-0.15, 0.15)
    sy = 4.0 + rng.uniform(-0.15, 0.15)
    sth = rng.uniform(-0.3, 0.3)  # facing the closed end
    walkers = tuple(
        ObstacleSpec(radius=0.25, max_speed=0.4, region=(0.6, 0.6, 2.4, 2.4))
        for _ in range(2)
    )
    return ScenarioSpec(
        name="blind-alley",
        bounds=bounds,
        static_segments=walls,
        obstacles=walkers,
        robot_start=(sx, sy, sth),
        goal=(8.5, 4.0),
        seed=seed,
    )


def double_branch(seed: int = 0) -> ScenarioSpec:
    """Two corridors of equal length to the goal chamber; the left corridor
    holds five walkers, the right one.  The start is jittered laterally so
    purely distance-based exploration has no systematic side preference."""
    rng = np.random.default_rng(seed)
    bounds = (0.0, 0.0, 12.0, 10.0)
    # Geometry is mirror-symmetric about x = 6 and wall coordinates sit on
    # cell centers; only the obstacle populations differ between branches.
    walls = _perimeter(bounds) + (
        (4.85, 0.0, 4.85, 3.05),     # entry corridor
        (7.15, 0.0, 7.15, 3.05),
        (2.25, 3.05, 4.85, 3.05),    # junction shelf, left
        (7.15, 3.05, 9.75, 3.05),    # junction shelf, right
        (2.25, 3.05, 2.25, 8.35),    # outer branch walls
        (9.75, 3.05, 9.75, 8.35),
    )
    block = ((4.45, 4.45, 7.55, 8.35),)  # central block separating the branches
    dx = rng.uniform(-0.2, 0.2)
    left = tuple(
        ObstacleSpec(radius=0.28, max_speed=0.5, region=(2.5, 3.5, 4.15, 8.1))
        for _ in range(5)
    )
    right = (ObstacleSpec(radius=0.28, max_speed=0.5, region=(7.85, 3.5, 9.5, 8.1)),)
    return ScenarioSpec(
        name="double-branch",
        bounds=bounds,
        static_rects=block,
        static_segments=walls,
        obstacles=left + right,
        robot_start=(6.0 + dx, 1.2, math.pi / 2),
        goal=(6.0, 9.2),
        seed=seed,
    )


def rooms(seed: int = 0) -> ScenarioSpec:
    """Static clutter: interior walls with door gaps plus box roadblocks;
    start and goal are sampled mutually reachable."""
    rng = np.random.default_rng(seed)
    bounds = (0.0, 0.0, 10.0, 10.0)
    for _ in range(60):
        wx = rng.uniform(3.0, 7.0)
        gap_y = rng.uniform(1.5, 7.0)
        wy = rng.uniform(3.0, 7.0)
        gap_x = rng.uniform(1.5, 7.0)
        walls = _perimeter(bounds) + (
            (wx, 0.0, wx, gap_y),
            (wx, gap_y + 1.6, wx, 10.0),
            (0.0, wy, gap_x, wy),
            (gap_x + 1.6, wy, 10.0, wy),
        )
        blocks = tuple(
            (bx, by, bx + w, by + h)
            for bx, by, w, h in (
                (rng.uniform(0.8, 8.4), rng.uniform(0.8, 8.4), rng.uniform(0.4, 0.9), rng.uniform(0.4, 0.9))
                for _ in range(3)
            )
        )
        spec = ScenarioSpec(
            name="rooms",
            bounds=bounds,
            static_rects=blocks,
            static_segments=walls,
            robot_start=(0.0, 0.0, 0.0),
            goal=(0.0, 0.0),
            seed=seed,
        )
        picked = _sample_start_goal(spec, rng, min_separation=5.0)
        if picked is not None:
            start_xy, goal_xy = picked
            theta = rng.uniform(-math.pi, math.pi)
            return replace(spec, robot_start=(start_xy[0], start_xy[1], theta), goal=goal_xy)
    raise RuntimeError(f"rooms generator failed to find a connected layout for seed {seed}")


def square(seed: int = 0) -> ScenarioSpec:
    """Open walled box full of walkers moving at twice the robot's top
    forward speed; pure dynamic-avoidance pressure."""
    rng = np.random.default_rng(seed)
    bounds = (0.0, 0.0, 10.0, 10.0)
    spec = ScenarioSpec(
        name="square",
        bounds=bounds,
        static_segments=_perimeter(bounds),
        obstacles=tuple(
            ObstacleSpec(radius=0.3, max_speed=2.0 * MAX_FORWARD_SPEED)
            for _ in range(8)
        ),
        robot_start=(rng.uniform(0.8, 2.2), rng.uniform(0.8, 2.2), rng.uniform(-math.pi, math.pi)),
        goal=(rng.uniform(7.8, 9.2), rng.uniform(7.8, 9.2)),
        seed=seed,
    )
    return spec


_BUILTINS = {
    "blind-alley": blind_alley,
    "double-branch": double_branch,
    "rooms": rooms,
    "square": square,
}


def make_scenario(name: str, seed: int = 0) -> ScenarioSpec:
    if name not in _BUILTINS:
        raise KeyError(f"unknown scenario {name!r}; built-ins: {', '.join(BUILTIN_NAMES)}")
    return _BUILTINS[name](seed)


def ground_truth_grid(spec: ScenarioSpec, resolution: float = 0.1) -> OccupancyGrid:
    """Rasterize the static geometry into a fully known grid (occupied cells
    at P_MAX, the rest at P_MIN).  Used for reachability checks and tests."""
    grid = OccupancyGrid.for_bounds(spec.bounds, resolution)
    grid.p[:] = P_MIN
    x0, y0 = grid.origin
    for rx0, ry0, rx1, ry1 in spec.static_rects:
        c0 = int(math.floor((rx0 - x0) / resolution))
        c1 = int(math.floor((rx1 - x0) / resolution))
        r0 = int(math.floor((ry0 - y0) / resolution))
        r1 = int(math.floor((ry1 - y0) / resolution))
        grid.p[max(r0, 0):min(r1 + 1, grid.rows), max(c0, 0):min(c1 + 1, grid.cols)] = P_MAX
    from .geometry import supercover_cells

    for ax, ay, bx, by in spec.static_segments:
        for r, c in supercover_cells((ax, ay), (bx, by), grid.origin, resolution):
            if 0 <= r < grid.rows and 0 <= c < grid.cols:
                grid.p[r, c] = P_MAX
    return grid


def _sample_start_goal(spec: ScenarioSpec, rng: np.random.Generator, min_separation: float):
    """Sample a start/goal pair with static clearance and a connecting path
    on the ground-truth raster, or None after bounded retries."""
    from .world import point_static_clearance

    grid = ground_truth_grid(spec)
    x0, y0, x1, y1 = spec.bounds
    for _ in range(40):
        s = rng.uniform([x0 + 0.6, y0 + 0.6], [x1 - 0.6, y1 - 0.6])
        g = rng.uniform([x0 + 0.6, y0 + 0.6], [x1 - 0.6, y1 - 0.6])
        if math.hypot(s[0] - g[0], s[1] - g[1]) < min_separation:
            continue
        if point_static_clearance(spec, s[0], s[1]) < spec.robot_radius + 0.15:
            continue
        if point_static_clearance(spec, g[0], g[1]) < spec.robot_radius + 0.15:
            continue
        path = plan_path(grid, grid.world_to_cell(*s), grid.world_to_cell(*g))
        if path is None:
            continue
        return (float(s[0]), float(s[1])), (float(g[0]), float(g[1]))
    return None


# ---------------------------------------------------------------------------
# Training task sets


def training_scenarios(kind: str, count: int, base_seed: int = 0) -> list[ScenarioSpec]:
    """Task sets for the trainer.

    "static": small rooms with roadblocks and no walkers (the go-straight
    diet).  "dynamic": a small box of walkers (the obstacle-avoidance diet).
    "static+dynamic": alternating mix of the two, used to measure whether a
    blended policy keeps both skills.  "families": round-robin over the four
    built-in scenario generators for the co-training stage.
    """
    if kind == "families":
        return [make_scenario(BUILTIN_NAMES[i % 4], base_seed * 1000 + i) for i in range(count)]
    if kind == "static+dynamic":
        out = []
        for i in range(count):
            maker = _static_task if i % 2 == 0 else _dynamic_task
            out.append(maker(base_seed * 1000 + i))
        return out
    if kind == "static":
        return [_static_task(base_seed * 1000 + i) for i in range(count)]
    if kind == "dynamic":
        return [_dynamic_task(base_seed * 1000 + i) for i in range(count)]
    raise KeyError(f"unknown training set kind {kind!r}")


def _task_box(seed: int, obstacles: tuple[ObstacleSpec, ...], blocks: int, name: str) -> ScenarioSpec:
    rng = np.random.default_rng(seed)
    bounds = (0.0, 0.0, 7.0, 7.0)
    for _ in range(60):
        rects = tuple(
            (bx, by, bx + w, by + h)
            for bx, by, w, h in (
                (rng.uniform(1.0, 5.2), rng.uniform(1.0, 5.2), rng.uniform(0.4, 0.8), rng.uniform(0.4, 0.8))
                for _ in range(blocks)
            )
        )
        spec = ScenarioSpec(
            name=name,
            bounds=bounds,
            static_rects=rects,
            static_segments=_perimeter(bounds),
            obstacles=obstacles,
            robot_start=(0.0, 0.0, 0.0),
            goal=(0.0, 0.0),
            seed=seed,
        )
        picked = _sample_start_goal(spec, rng, min_separation=3.5)
        if picked is not None:
            (sx, sy), goal = picked
            heading = math.atan2(goal[1] - sy, goal[0] - sx) + rng.uniform(-0.6, 0.6)
            return replace(spec, robot_start=(sx, sy, heading), goal=goal)
    raise RuntimeError(f"training task generator failed for seed {seed}")


def _static_task(seed: int) -> ScenarioSpec:
    return _task_box(seed, obstacles=(), blocks=2, name="train-static")


def _dynamic_task(seed: int) -> ScenarioSpec:
    walkers = tuple(ObstacleSpec(radius=0.3, max_speed=0.8) for _ in range(3))
    return _task_box(seed, obstacles=walkers, blocks=0, name="train-dynamic")


# ---------------------------------------------------------------------------
# Serialization (schema 1)


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    return {
        "schema": SCENARIO_SCHEMA,
        "name": spec.name,
        "bounds": list(spec.bounds),
        "static_shapes": (
            [{"type": "rect", "rect": list(r)} for r in spec.static_rects]
            + [{"type": "segment", "a": [s[0], s[1]], "b": [s[2], s[3]]} for s in spec.static_segments]
        ),
        "obstacles": [
            {
                "radius": o.radius,
                "max_speed": o.max_speed,
                "resample_prob": o.resample_prob,
                "region": list(o.region) if o.region is not None else None,
            }
            for o in spec.obstacles
        ],
        "robot_start": list(spec.robot_start),
        "goal": list(spec.goal),
        "robot_radius": spec.robot_radius,
        "seed": spec.seed,
    }


def scenario_from_dict(doc: dict) -> ScenarioSpec:
    if doc.get("schema") != SCENARIO_SCHEMA:
        raise ValueError(f"unsupported scenario schema {doc.get('schema')!r}")
    rects = []
    segments = []
    for shape in doc.get("static_shapes", []):
        if shape["type"] == "rect":
            rects.append(tuple(float(v) for v in shape["rect"]))
        elif shape["type"] == "segment":
            segments.append((*map(float, shape["a"]), *map(float, shape["b"])))
        else:
            raise ValueError(f"unknown static shape type {shape['type']!r}")
    obstacles = tuple(
        ObstacleSpec(
            radius=float(o["radius"]),
            max_speed=float(o["max_speed"]),
            resample_prob=float(o.get("resample_prob", 0.05)),
            region=tuple(o["region"]) if o.get("region") is not None else None,
        )
        for o in doc.get("obstacles", [])
    )
    return ScenarioSpec(
        name=doc.get("name", "custom"),
        bounds=tuple(float(v) for v in doc["bounds"]),
        static_rects=tuple(rects),
        static_segments=tuple(segments),
        obstacles=obstacles,
        robot_start=tuple(float(v) for v in doc["robot_start"]),
        goal=tuple(float(v) for v in doc["goal"]),
        robot_radius=float(doc.get("robot_radius", ROBOT_RADIUS)),
        seed=int(doc.get("seed", 0)),
    )


def save_scenario(spec: ScenarioSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(spec), indent=2, sort_keys=True) + "\n")


def load_scenario(path: str | Path) -> ScenarioSpec:
    return scenario_from_dict(json.loads(Path(path).read_text()))
