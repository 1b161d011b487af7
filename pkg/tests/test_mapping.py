import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from navstack.mapping import (
    CellClass,
    FREE_THRESHOLD,
    OCCUPIED_THRESHOLD,
    OccupancyGrid,
    P_MAX,
    P_MIN,
    classify,
    classify_p,
    frontier_cells,
    integrate_scan,
    load_pgm,
    map_entropy,
    save_pgm,
    unknown_mask,
)


def fresh(rows=20, cols=20):
    return OccupancyGrid.fresh(rows, cols, 0.1, (0.0, 0.0))


class TestGridBasics:
    def test_fresh_is_unknown(self):
        g = fresh()
        assert np.all(g.p == 0.5)

    def test_world_cell_round_trip(self):
        g = fresh()
        cell = g.world_to_cell(0.55, 1.25)
        assert cell == (12, 5)
        assert g.cell_center(cell) == (pytest.approx(0.55), pytest.approx(1.25))

    def test_copy_is_independent(self):
        g = fresh()
        h = g.copy()
        h.p[0, 0] = 0.9
        assert g.p[0, 0] == 0.5


class TestClassify:
    @pytest.mark.parametrize(
        "p,expected",
        [
            (0.5, CellClass.UNKNOWN),
            (0.53, CellClass.OCCUPIED),
            (0.47, CellClass.FREE),
            (0.52, CellClass.UNKNOWN),  # boundary values stay unknown
            (0.48, CellClass.UNKNOWN),
            (0.98, CellClass.OCCUPIED),
            (0.02, CellClass.FREE),
        ],
    )
    def test_thresholds(self, p, expected):
        assert classify_p(p) is expected

    def test_classify_reads_grid(self):
        g = fresh()
        g.p[3, 4] = 0.95
        assert classify(g, (3, 4)) is CellClass.OCCUPIED


class TestIntegrateScan:
    def test_max_range_beam_frees_traversed_cells(self):
        g = fresh(30, 30)
        integrate_scan(g, (1.05, 1.05, 0.0), np.array([1.5]), max_range=1.5)
        touched = g.p != 0.5
        assert touched.sum() > 10
        assert np.all(g.p[touched] < 0.5)
        assert not np.any(g.p > 0.5)

    def test_repeated_hits_follow_log_odds_iteration(self):
        g = fresh(30, 30)
        pose = (0.55, 0.55, 0.0)
        hit_cell = g.world_to_cell(0.55 + 0.5, 0.55)
        expected = 0.5
        for k in range(1, 25):
            integrate_scan(g, pose, np.array([0.5]), max_range=2.0)
            logit = math.log(expected / (1 - expected)) + 0.85
            expected = min(max(1 / (1 + math.exp(-logit)), P_MIN), P_MAX)
            assert g.p[hit_cell] == pytest.approx(expected, abs=1e-12)
        assert g.p[hit_cell] == P_MAX

    def test_empty_scan_is_identity(self):
        g = fresh()
        before = g.p.copy()
        h_before = map_entropy(g)
        integrate_scan(g, (1.0, 1.0, 0.0), np.array([]), max_range=2.0)
        assert np.array_equal(g.p, before)
        assert map_entropy(g) == h_before

    def test_probabilities_stay_clamped(self):
        g = fresh(40, 40)
        rng = np.random.default_rng(0)
        for _ in range(60):
            pose = (rng.uniform(0.5, 3.5), rng.uniform(0.5, 3.5), rng.uniform(0, 6.28))
            ranges = rng.uniform(0.1, 2.0, 36)
            integrate_scan(g, pose, ranges, max_range=2.0)
        assert np.all(g.p >= P_MIN)
        assert np.all(g.p <= P_MAX)

    def test_beams_truncated_at_border(self):
        g = fresh(10, 10)
        integrate_scan(g, (0.15, 0.15, math.pi), np.array([5.0]), max_range=6.0)
        assert np.all(g.p >= P_MIN)  # no crash, and nothing outside touched

    def test_pose_outside_grid_rejected(self):
        g = fresh()
        with pytest.raises(ValueError):
            integrate_scan(g, (50.0, 50.0, 0.0), np.array([1.0]), max_range=2.0)


def _frontier_oracle(grid):
    out = []
    rows, cols = grid.p.shape
    for r in range(rows):
        for c in range(cols):
            if not grid.p[r, c] < FREE_THRESHOLD:
                continue
            hit = False
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if dr == 0 and dc == 0:
                        continue
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < rows and 0 <= cc < cols:
                        if FREE_THRESHOLD <= grid.p[rr, cc] <= OCCUPIED_THRESHOLD:
                            hit = True
            if hit:
                out.append((r, c))
    return out


class TestFrontiers:
    def test_fully_unknown_grid(self):
        assert frontier_cells(fresh()) == []

    def test_fully_free_grid(self):
        g = fresh()
        g.p[:] = 0.1
        assert frontier_cells(g) == []

    def test_matches_bruteforce_oracle_100_seeds(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            g = OccupancyGrid(0.1, (0.0, 0.0), rng.uniform(0.0, 1.0, (50, 50)))
            assert frontier_cells(g) == _frontier_oracle(g)


class TestEntropy:
    def test_uniform_half_grid(self):
        g = OccupancyGrid(0.1, (0.0, 0.0), np.full((10, 10), 0.5))
        assert map_entropy(g) == pytest.approx(100 * (-0.5 * math.log(0.5)), rel=1e-12)

    def test_upper_clamp_value(self):
        g = OccupancyGrid(0.1, (0.0, 0.0), np.full((7, 9), 0.98))
        assert map_entropy(g) == pytest.approx(63 * (-0.98 * math.log(0.98)), rel=1e-12)

    def test_matches_naive_summation(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            g = OccupancyGrid(0.1, (0.0, 0.0), rng.uniform(P_MIN, P_MAX, (23, 31)))
            naive = -sum(p * math.log(p) for p in g.p.reshape(-1))
            assert map_entropy(g) == pytest.approx(naive, rel=1e-9)

    def test_single_term_form_is_not_symmetric(self):
        # the single-term form keeps decreasing as p -> 1, unlike binary entropy
        low = OccupancyGrid(0.1, (0.0, 0.0), np.full((5, 5), 0.5))
        high = OccupancyGrid(0.1, (0.0, 0.0), np.full((5, 5), 0.98))
        assert map_entropy(high) < map_entropy(low)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_frontier_cells_are_free_with_unknown_neighbor(seed):
    rng = np.random.default_rng(seed)
    g = OccupancyGrid(0.1, (0.0, 0.0), rng.uniform(0.0, 1.0, (20, 20)))
    unk = unknown_mask(g)
    for r, c in frontier_cells(g):
        assert classify(g, (r, c)) is CellClass.FREE
        neighborhood = unk[max(r - 1, 0):r + 2, max(c - 1, 0):c + 2]
        assert neighborhood.any()


class TestPgmRoundTrip:
    def test_round_trip_and_byte_stability(self, tmp_path):
        rng = np.random.default_rng(3)
        g = OccupancyGrid(0.05, (1.0, -2.0), rng.uniform(P_MIN, P_MAX, (12, 17)))
        p1 = tmp_path / "a.pgm"
        save_pgm(g, p1)
        loaded = load_pgm(p1)
        assert loaded.resolution == g.resolution
        assert loaded.origin == g.origin
        assert loaded.p.shape == g.p.shape
        assert np.max(np.abs(loaded.p - g.p)) <= 0.5 / 255 + 1e-12
        p2 = tmp_path / "b.pgm"
        save_pgm(g, p2)
        assert p1.read_bytes() == p2.read_bytes()
