"""Deterministic 2D world: static geometry, random-walk obstacles, a holonomic
robot disc, simulated lidar, and collision detection.

Everything downstream (mapping, training, the episode harness) treats this
module as ground truth.  A world advanced from the same state and seed must
reproduce bitwise-identical successor states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    point_rect_distance,
    point_segment_distance,
    ray_disc_hits,
    ray_segment_hits,
    rect_edges,
)

# Robot disc and holonomic command limits (v_x, v_y, omega_z).
ROBOT_RADIUS = 0.3
ARRIVAL_RADIUS = 0.3
CONTROL_DT = 1.0 / 30.0
ACTION_LOW = np.array([-0.5, -0.5, -1.5])
ACTION_HIGH = np.array([1.0, 0.5, 1.5])
MAX_FORWARD_SPEED = float(ACTION_HIGH[0])

DEFAULT_RESAMPLE_PROB = 0.05


@dataclass(frozen=True)
class ObstacleSpec:
    """A random-walking disc: constant speed, heading resampled stochastically,
    reflected at the edges of its confinement region."""

    radius: float
    max_speed: float
    resample_prob: float = DEFAULT_RESAMPLE_PROB
    region: tuple[float, float, float, float] | None = None  # defaults to world bounds


@dataclass(frozen=True)
class ScenarioSpec:
    """Static description of an episode: geometry, obstacle population,
    start/goal, and the seed that fixes every random draw."""

    name: str
    bounds: tuple[float, float, float, float]
    static_rects: tuple[tuple[float, float, float, float], ...] = ()
    static_segments: tuple[tuple[float, float, float, float], ...] = ()
    obstacles: tuple[ObstacleSpec, ...] = ()
    robot_start: tuple[float, float, float] = (0.0, 0.0, 0.0)
    goal: tuple[float, float] = (0.0, 0.0)
    robot_radius: float = ROBOT_RADIUS
    seed: int = 0


@dataclass
class RobotState:
    pose: np.ndarray      # (x, y, theta)
    velocity: np.ndarray  # commanded (v_x, v_y, omega_z), already clamped

    def copy(self) -> "RobotState":
        return RobotState(self.pose.copy(), self.velocity.copy())


@dataclass
class WorldState:
    """Mutable simulation state.  ``step`` advances it in place; use ``copy``
    to snapshot (the RNG state is cloned, so replays are bitwise stable)."""

    spec: ScenarioSpec
    robot: RobotState
    obstacle_pos: np.ndarray      # (k, 2)
    obstacle_heading: np.ndarray  # (k,)
    sim_time: float
    rng: np.random.Generator
    segments: np.ndarray = field(repr=False, default=None)  # (m, 4) cached statics

    def __post_init__(self) -> None:
        if self.segments is None:
            self.segments = static_segment_array(self.spec)

    @property
    def obstacle_radii(self) -> np.ndarray:
        return np.array([o.radius for o in self.spec.obstacles])

    def copy(self) -> "WorldState":
        rng = np.random.Generator(np.random.PCG64())
        rng.bit_generator.state = self.rng.bit_generator.state
        return WorldState(
            spec=self.spec,
            robot=self.robot.copy(),
            obstacle_pos=self.obstacle_pos.copy(),
            obstacle_heading=self.obstacle_heading.copy(),
            sim_time=self.sim_time,
            rng=rng,
            segments=self.segments,
        )

    def goal_distance(self) -> float:
        gx, gy = self.spec.goal
        return math.hypot(self.robot.pose[0] - gx, self.robot.pose[1] - gy)


def static_segment_array(spec: ScenarioSpec) -> np.ndarray:
    segs = [e for r in spec.static_rects for e in rect_edges(r)]
    segs.extend(spec.static_segments)
    return np.array(segs, dtype=float).reshape(-1, 4)


def point_static_clearance(spec: ScenarioSpec, x: float, y: float) -> float:
    """Distance from a point to the nearest static shape (inf if none)."""
    d = math.inf
    for r in spec.static_rects:
        d = min(d, point_rect_distance(x, y, r))
    for ax, ay, bx, by in spec.static_segments:
        d = min(d, point_segment_distance(x, y, ax, ay, bx, by))
    return d


def _inside_bounds(bounds, x: float, y: float) -> bool:
    x0, y0, x1, y1 = bounds
    return x0 <= x <= x1 and y0 <= y <= y1


def spawn(spec: ScenarioSpec) -> WorldState:
    """Build the initial world for a scenario.

    Raises ValueError when the start or goal is invalid (outside bounds, or
    inside a static shape inflated by the robot radius),
    or when an obstacle cannot be placed collision-free.
    """
    sx, sy, sth = spec.robot_start
    gx, gy = spec.goal
    if not _inside_bounds(spec.bounds, sx, sy):
        raise ValueError(f"robot_start {spec.robot_start[:2]} outside bounds {spec.bounds}")
    if not _inside_bounds(spec.bounds, gx, gy):
        raise ValueError(f"goal {spec.goal} outside bounds {spec.bounds}")
    if point_static_clearance(spec, sx, sy) < spec.robot_radius:
        raise ValueError("robot_start intersects an inflated static shape")
    if point_static_clearance(spec, gx, gy) < spec.robot_radius:
        raise ValueError("goal intersects an inflated static shape")
    for ob in spec.obstacles:
        if ob.max_speed < 0:
            raise ValueError("obstacle max_speed must be >= 0")

    rng = np.random.Generator(np.random.PCG64(spec.seed))
    positions = np.zeros((len(spec.obstacles), 2))
    headings = np.zeros(len(spec.obstacles))
    placed: list[tuple[float, float, float]] = []
    for i, ob in enumerate(spec.obstacles):
        region = ob.region if ob.region is not None else spec.bounds
        x0, y0, x1, y1 = region
        lo = np.array([x0 + ob.radius, y0 + ob.radius])
        hi = np.array([x1 - ob.radius, y1 - ob.radius])
        if np.any(hi < lo):
            raise ValueError(f"obstacle {i} does not fit its region {region}")
        for _ in range(500):
            p = rng.uniform(lo, hi)
            if point_static_clearance(spec, p[0], p[1]) < ob.radius:
                continue
            if math.hypot(p[0] - sx, p[1] - sy) < ob.radius + spec.robot_radius + 0.1:
                continue
            if math.hypot(p[0] - gx, p[1] - gy) < ob.radius + spec.robot_radius + 0.1:
                continue
            if any(math.hypot(p[0] - qx, p[1] - qy) < ob.radius + qr for qx, qy, qr in placed):
                continue
            break
        else:
            raise ValueError(f"could not place obstacle {i} collision-free")
        positions[i] = p
        headings[i] = rng.uniform(0.0, 2.0 * math.pi)
        placed.append((p[0], p[1], ob.radius))

    robot = RobotState(
        pose=np.array([sx, sy, sth], dtype=float),
        velocity=np.zeros(3),
    )
    return WorldState(
        spec=spec,
        robot=robot,
        obstacle_pos=positions,
        obstacle_heading=headings,
        sim_time=0.0,
        rng=rng,
    )


def _wrap_angle(a: float) -> float:
    return math.atan2(math.sin(a), math.cos(a))


def step(
    world: WorldState,
    action,
    dt: float = CONTROL_DT,
    arrival_radius: float = ARRIVAL_RADIUS,
) -> tuple[WorldState, str]:
    """Advance the world one tick (in place) and report the resulting event.

    The action is clamped to the command limits, integrated in the robot
    frame, then rotated into the world frame (explicit Euler).  Obstacles
    take one random-walk step.  Returns (world, event) with event one of
    "collision", "goal_reached", "none"; collision wins if both hold.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    a = np.clip(np.asarray(action, dtype=float), ACTION_LOW, ACTION_HIGH)
    x, y, th = world.robot.pose
    c, s = math.cos(th), math.sin(th)
    x += (a[0] * c - a[1] * s) * dt
    y += (a[0] * s + a[1] * c) * dt
    th = _wrap_angle(th + a[2] * dt)
    world.robot.pose[:] = (x, y, th)
    world.robot.velocity[:] = a

    _advance_obstacles(world, dt)
    world.sim_time += dt

    if check_collision(world):
        return world, "collision"
    if world.goal_distance() < arrival_radius:
        return world, "goal_reached"
    return world, "none"


def _advance_obstacles(world: WorldState, dt: float) -> None:
    n = world.obstacle_pos.shape[0]
    if n == 0:
        return
    specs = world.spec.obstacles
    rng = world.rng
    resample = rng.random(n)
    for i, ob in enumerate(specs):
        if resample[i] < ob.resample_prob:
            world.obstacle_heading[i] = rng.uniform(0.0, 2.0 * math.pi)
        h = world.obstacle_heading[i]
        px = world.obstacle_pos[i, 0] + ob.max_speed * math.cos(h) * dt
        py = world.obstacle_pos[i, 1] + ob.max_speed * math.sin(h) * dt
        region = ob.region if ob.region is not None else world.spec.bounds
        x0, y0, x1, y1 = region
        hx, hy = math.cos(h), math.sin(h)
        if px < x0 + ob.radius or px > x1 - ob.radius:
            hx = -hx
            px = min(max(px, x0 + ob.radius), x1 - ob.radius)
        if py < y0 + ob.radius or py > y1 - ob.radius:
            hy = -hy
            py = min(max(py, y0 + ob.radius), y1 - ob.radius)
        world.obstacle_pos[i] = (px, py)
        world.obstacle_heading[i] = math.atan2(hy, hx)


def raycast(world: WorldState, beams: int, max_range: float, noise_std: float = 0.0) -> np.ndarray:
    """Lidar ranges, beam i pointing at robot heading + 2*pi*i/beams.

    Ranges are the nearest hit among static shapes and obstacle discs,
    clamped to (0, max_range].  Optional Gaussian range noise draws from the
    world RNG (off by default so replays stay exact).
    """
    if beams < 1:
        raise ValueError("beams must be >= 1")
    x, y, th = world.robot.pose
    origin = np.array([x, y])
    angles = th + 2.0 * math.pi * np.arange(beams) / beams
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)

    t_seg = ray_segment_hits(origin, dirs, world.segments)
    radii = np.array([o.radius for o in world.spec.obstacles])
    t_disc = ray_disc_hits(origin, dirs, world.obstacle_pos, radii)
    t = np.full(beams, max_range)
    if t_seg.size:
        t = np.minimum(t, t_seg.min(axis=1))
    if t_disc.size:
        t = np.minimum(t, t_disc.min(axis=1))
    ranges = np.minimum(t, max_range)
    if noise_std > 0.0:
        ranges = ranges + world.rng.normal(0.0, noise_std, beams)
    return np.clip(ranges, 1e-6, max_range)


def check_collision(world: WorldState) -> bool:
    """True iff the robot disc intersects any static shape or obstacle disc."""
    x, y, _ = world.robot.pose
    rr = world.spec.robot_radius
    for r in world.spec.static_rects:
        if point_rect_distance(x, y, r) < rr:
            return True
    for ax, ay, bx, by in world.spec.static_segments:
        if point_segment_distance(x, y, ax, ay, bx, by) < rr:
            return True
    for i, ob in enumerate(world.spec.obstacles):
        px, py = world.obstacle_pos[i]
        if math.hypot(x - px, y - py) < rr + ob.radius:
            return True
    return False
