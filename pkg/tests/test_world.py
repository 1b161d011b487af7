import math

import numpy as np
import pytest

from navstack.world import (
    ACTION_HIGH,
    ACTION_LOW,
    ObstacleSpec,
    RobotState,
    ScenarioSpec,
    WorldState,
    check_collision,
    raycast,
    spawn,
    step,
)


def empty_room(seed=7, goal=(9.0, 9.0)):
    return ScenarioSpec(
        name="empty",
        bounds=(0.0, 0.0, 10.0, 10.0),
        robot_start=(5.0, 5.0, 0.0),
        goal=goal,
        seed=seed,
    )


def walled_room(seed=7):
    return ScenarioSpec(
        name="walled",
        bounds=(0.0, 0.0, 10.0, 10.0),
        static_rects=((6.0, 0.0, 6.4, 10.0),),
        robot_start=(2.0, 5.0, 0.0),
        goal=(1.0, 1.0),
        seed=seed,
    )


def manual_world(obstacle_xy, obstacle_radius=0.5):
    spec = ScenarioSpec(
        name="manual",
        bounds=(0.0, 0.0, 10.0, 10.0),
        obstacles=(ObstacleSpec(radius=obstacle_radius, max_speed=0.0),),
        robot_start=(5.0, 5.0, 0.0),
        goal=(9.0, 9.0),
    )
    return WorldState(
        spec=spec,
        robot=RobotState(np.array([5.0, 5.0, 0.0]), np.zeros(3)),
        obstacle_pos=np.array([obstacle_xy], dtype=float),
        obstacle_heading=np.zeros(1),
        sim_time=0.0,
        rng=np.random.default_rng(0),
    )


class TestSpawn:
    def test_initial_state(self):
        w = spawn(empty_room(seed=7))
        assert np.array_equal(w.robot.pose, np.array([5.0, 5.0, 0.0]))
        assert w.sim_time == 0.0
        assert np.array_equal(w.robot.velocity, np.zeros(3))

    def test_deterministic(self):
        spec = ScenarioSpec(
            name="obs",
            bounds=(0.0, 0.0, 10.0, 10.0),
            obstacles=tuple(ObstacleSpec(radius=0.3, max_speed=1.0) for _ in range(5)),
            robot_start=(5.0, 5.0, 0.0),
            goal=(9.0, 9.0),
            seed=42,
        )
        a, b = spawn(spec), spawn(spec)
        assert np.array_equal(a.obstacle_pos, b.obstacle_pos)
        assert np.array_equal(a.obstacle_heading, b.obstacle_heading)
        assert a.rng.bit_generator.state == b.rng.bit_generator.state

    def test_goal_inside_wall_rejected(self):
        spec = ScenarioSpec(
            name="bad",
            bounds=(0.0, 0.0, 10.0, 10.0),
            static_rects=((4.0, 4.0, 6.0, 6.0),),
            robot_start=(1.0, 1.0, 0.0),
            goal=(5.0, 5.0),
        )
        with pytest.raises(ValueError):
            spawn(spec)

    def test_start_outside_bounds_rejected(self):
        with pytest.raises(ValueError):
            spawn(ScenarioSpec(name="bad", bounds=(0, 0, 4, 4), robot_start=(5, 1, 0), goal=(1, 1)))

    def test_obstacles_placed_clear(self):
        spec = ScenarioSpec(
            name="obs",
            bounds=(0.0, 0.0, 10.0, 10.0),
            obstacles=tuple(ObstacleSpec(radius=0.4, max_speed=0.5) for _ in range(6)),
            robot_start=(5.0, 5.0, 0.0),
            goal=(9.0, 9.0),
            seed=3,
        )
        w = spawn(spec)
        assert not check_collision(w)
        for i in range(6):
            for j in range(i + 1, 6):
                d = np.linalg.norm(w.obstacle_pos[i] - w.obstacle_pos[j])
                assert d >= 0.8 - 1e-9


class TestStep:
    def test_zero_action_identity(self):
        w = spawn(empty_room())
        pose0 = w.robot.pose.copy()
        _, event = step(w, (0.0, 0.0, 0.0), 1.0 / 30.0)
        assert np.array_equal(w.robot.pose, pose0)
        assert w.sim_time == 1.0 / 30.0
        assert event == "none"

    def test_straight_line_integration(self):
        w = spawn(empty_room())
        for _ in range(30):
            step(w, (1.0, 0.0, 0.0), 1.0 / 30.0)
        assert w.robot.pose[0] == pytest.approx(6.0, abs=1e-9)
        assert w.robot.pose[1] == pytest.approx(5.0, abs=1e-9)

    def test_action_clamped(self):
        w = spawn(empty_room())
        step(w, (5.0, -5.0, 9.0), 1.0 / 30.0)
        assert np.all(w.robot.velocity <= ACTION_HIGH + 1e-12)
        assert np.all(w.robot.velocity >= ACTION_LOW - 1e-12)

    def test_wall_collision_on_first_penetrating_step(self):
        spec = walled_room()
        dt = 1.0 / 30.0
        # analytic first-penetration step for constant +x drive at top speed
        rr = spec.robot_radius
        wall_x = spec.static_rects[0][0]
        k_expected = math.floor((wall_x - rr - 2.0) / (1.0 * dt)) + 1
        w = spawn(spec)
        hit_at = None
        for k in range(1, 300):
            _, event = step(w, (1.0, 0.0, 0.0), dt)
            if event == "collision":
                hit_at = k
                break
        assert hit_at == k_expected

    def test_goal_reached_event(self):
        w = spawn(empty_room(goal=(5.5, 5.0)))
        event = "none"
        for _ in range(60):
            _, event = step(w, (1.0, 0.0, 0.0), 1.0 / 30.0)
            if event != "none":
                break
        assert event == "goal_reached"

    def test_rejects_nonpositive_dt(self):
        w = spawn(empty_room())
        with pytest.raises(ValueError):
            step(w, (0, 0, 0), 0.0)


class TestRaycast:
    def test_empty_region_all_max(self):
        w = spawn(empty_room())
        r = raycast(w, 36, 3.0)
        assert r.shape == (36,)
        assert np.all(r == 3.0)

    def test_perpendicular_wall(self):
        spec = ScenarioSpec(
            name="seg",
            bounds=(0.0, 0.0, 10.0, 10.0),
            static_segments=((7.0, 0.0, 7.0, 10.0),),
            robot_start=(5.0, 5.0, 0.0),
            goal=(1.0, 1.0),
        )
        r = raycast(spawn(spec), 72, 6.0)
        assert r[0] == pytest.approx(2.0, abs=1e-6)

    def test_disc_on_beam(self):
        w = manual_world((8.0, 5.0), obstacle_radius=0.5)
        r = raycast(w, 72, 6.0)
        assert r[0] == pytest.approx(2.5, abs=1e-6)

    def test_ranges_positive_and_counted(self):
        spec = ScenarioSpec(
            name="clutter",
            bounds=(0.0, 0.0, 10.0, 10.0),
            static_rects=((1.0, 1.0, 2.0, 2.0), (7.0, 6.5, 8.0, 9.0)),
            static_segments=((0.0, 0.0, 10.0, 0.0),),
            obstacles=tuple(ObstacleSpec(radius=0.3, max_speed=1.0) for _ in range(4)),
            robot_start=(5.0, 5.0, 0.3),
            goal=(9.0, 9.0),
            seed=8,
        )
        w = spawn(spec)
        for beams in (1, 7, 72):
            r = raycast(w, beams, 5.0)
            assert r.shape == (beams,)
            assert np.all(r > 0)
            assert np.all(r <= 5.0)

    def test_rejects_zero_beams(self):
        with pytest.raises(ValueError):
            raycast(spawn(empty_room()), 0, 5.0)


class TestCollision:
    def test_far_from_everything(self):
        assert not check_collision(spawn(empty_room()))

    def test_disc_disc_boundary(self):
        eps = 1e-6
        rsum = 0.3 + 0.5
        inside = manual_world((5.0 + rsum - eps, 5.0))
        outside = manual_world((5.0 + rsum + eps, 5.0))
        assert check_collision(inside)
        assert not check_collision(outside)

    def test_agrees_with_independent_oracle(self):
        # Circle-vs-shapes verdicts checked against dense boundary sampling;
        # configurations within 2 mm of tangency are skipped as ambiguous.
        rng = np.random.default_rng(123)
        rect = (4.0, 4.0, 6.0, 5.5)
        seg = (1.0, 8.0, 9.0, 8.0)
        checked = 0
        for _ in range(1000):
            x, y = rng.uniform(0.5, 9.5, 2)
            spec = ScenarioSpec(
                name="oracle",
                bounds=(0.0, 0.0, 10.0, 10.0),
                static_rects=(rect,),
                static_segments=(seg,),
                robot_start=(x, y, 0.0),
                goal=(0.5, 0.5),
            )
            w = WorldState(
                spec=spec,
                robot=RobotState(np.array([x, y, 0.0]), np.zeros(3)),
                obstacle_pos=np.zeros((0, 2)),
                obstacle_heading=np.zeros(0),
                sim_time=0.0,
                rng=np.random.default_rng(0),
            )
            verdict = check_collision(w)
            oracle, margin = _collision_oracle(x, y, 0.3, rect, seg)
            if margin < 2e-3:
                continue
            checked += 1
            assert verdict == oracle, (x, y)
        assert checked > 800


def _collision_oracle(x, y, rr, rect, seg):
    """Sampling-based circle-vs-shapes test, independent of the package
    geometry helpers.  Returns (colliding, distance-to-boundary margin)."""
    x0, y0, x1, y1 = rect
    inside_rect = x0 <= x <= x1 and y0 <= y <= y1
    best = math.inf
    for i in range(2000):
        t = i / 1999
        for px, py in (
            (x0 + t * (x1 - x0), y0),
            (x0 + t * (x1 - x0), y1),
            (x0, y0 + t * (y1 - y0)),
            (x1, y0 + t * (y1 - y0)),
            (seg[0] + t * (seg[2] - seg[0]), seg[1] + t * (seg[3] - seg[1])),
        ):
            best = min(best, math.hypot(px - x, py - y))
    colliding = inside_rect or best < rr
    return colliding, abs(best - rr)


class TestDeterminism:
    def test_bitwise_replay_1000_steps(self):
        spec = ScenarioSpec(
            name="replay",
            bounds=(0.0, 0.0, 10.0, 10.0),
            obstacles=tuple(ObstacleSpec(radius=0.3, max_speed=1.5) for _ in range(4)),
            robot_start=(5.0, 5.0, 0.0),
            goal=(9.5, 9.5),
            seed=99,
        )
        a = spawn(spec)
        b = a.copy()
        actions = np.random.default_rng(1).uniform(-1, 1, (1000, 3))
        for act in actions:
            step(a, act, 1.0 / 30.0)
            step(b, act, 1.0 / 30.0)
            assert np.array_equal(a.robot.pose, b.robot.pose)
            assert np.array_equal(a.obstacle_pos, b.obstacle_pos)
            assert np.array_equal(a.obstacle_heading, b.obstacle_heading)
        assert a.sim_time == b.sim_time

    def test_obstacle_speed_bounded(self):
        spec = ScenarioSpec(
            name="speed",
            bounds=(0.0, 0.0, 10.0, 10.0),
            obstacles=(ObstacleSpec(radius=0.3, max_speed=1.2),),
            robot_start=(5.0, 5.0, 0.0),
            goal=(9.0, 9.0),
            seed=5,
        )
        w = spawn(spec)
        prev = w.obstacle_pos.copy()
        dt = 1.0 / 30.0
        for _ in range(1000):
            step(w, (0.0, 0.0, 0.0), dt)
            moved = np.linalg.norm(w.obstacle_pos - prev, axis=1)
            assert np.all(moved <= 1.2 * dt + 1e-9)
            prev = w.obstacle_pos.copy()
