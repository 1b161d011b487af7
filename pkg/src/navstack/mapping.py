"""Occupancy-probability grid built from lidar scans at known pose.

Cells hold p(occupied) in [0, 1]; a fresh grid is all 0.5 (unknown).
Updates run in log-odds with a fixed hit/miss inverse sensor model and are
clamped to [0.02, 0.98].  Classification, frontier detection, and map
entropy are pure functions of the probabilities.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

P_MIN = 0.02
P_MAX = 0.98
OCCUPIED_THRESHOLD = 0.52   # occupied iff p > this
FREE_THRESHOLD = 0.48       # free iff p < this
LOGIT_HIT = 0.85
LOGIT_MISS = -0.4
DEFAULT_RESOLUTION = 0.1


class CellClass(Enum):
    OCCUPIED = "occupied"
    FREE = "free"
    UNKNOWN = "unknown"


@dataclass
class OccupancyGrid:
    """Row-major probability grid; cell (0, 0) has its lower corner at
    ``origin`` and rows advance along +y."""

    resolution: float
    origin: tuple[float, float]
    p: np.ndarray  # (rows, cols) float64

    @classmethod
    def fresh(cls, rows: int, cols: int, resolution: float = DEFAULT_RESOLUTION,
              origin: tuple[float, float] = (0.0, 0.0)) -> "OccupancyGrid":
        return cls(resolution, origin, np.full((rows, cols), 0.5))

    @classmethod
    def for_bounds(cls, bounds: tuple[float, float, float, float],
                   resolution: float = DEFAULT_RESOLUTION) -> "OccupancyGrid":
        x0, y0, x1, y1 = bounds
        cols = max(1, int(math.ceil((x1 - x0) / resolution)))
        rows = max(1, int(math.ceil((y1 - y0) / resolution)))
        return cls.fresh(rows, cols, resolution, (x0, y0))

    @property
    def rows(self) -> int:
        return self.p.shape[0]

    @property
    def cols(self) -> int:
        return self.p.shape[1]

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.resolution, self.origin, self.p.copy())

    def in_grid(self, cell: tuple[int, int]) -> bool:
        r, c = cell
        return 0 <= r < self.rows and 0 <= c < self.cols

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        return (
            int(math.floor((y - self.origin[1]) / self.resolution)),
            int(math.floor((x - self.origin[0]) / self.resolution)),
        )

    def cell_center(self, cell: tuple[int, int]) -> tuple[float, float]:
        r, c = cell
        return (
            self.origin[0] + (c + 0.5) * self.resolution,
            self.origin[1] + (r + 0.5) * self.resolution,
        )


def classify_p(p: float) -> CellClass:
    if p > OCCUPIED_THRESHOLD:
        return CellClass.OCCUPIED
    if p < FREE_THRESHOLD:
        return CellClass.FREE
    return CellClass.UNKNOWN


def classify(grid: OccupancyGrid, cell: tuple[int, int]) -> CellClass:
    return classify_p(float(grid.p[cell[0], cell[1]]))


def free_mask(grid: OccupancyGrid) -> np.ndarray:
    return grid.p < FREE_THRESHOLD


def occupied_mask(grid: OccupancyGrid) -> np.ndarray:
    return grid.p > OCCUPIED_THRESHOLD


def unknown_mask(grid: OccupancyGrid) -> np.ndarray:
    return (grid.p >= FREE_THRESHOLD) & (grid.p <= OCCUPIED_THRESHOLD)


def _logit(p: np.ndarray) -> np.ndarray:
    return np.log(p / (1.0 - p))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def integrate_scan(grid: OccupancyGrid, pose, ranges, max_range: float) -> OccupancyGrid:
    """Fold one lidar scan (beam i at heading + 2*pi*i/n) into the grid.

    Cells traversed by a beam move toward free; the terminal cell moves
    toward occupied when the beam actually hit something (range < max_range).
    Each scan applies at most one update per cell and the hit update wins
    over the miss update.  Beams leaving the grid are truncated at the
    border.  Returns the grid for chaining; the update is in place.
    """
    x, y, th = float(pose[0]), float(pose[1]), float(pose[2])
    ranges = np.asarray(ranges, dtype=float)
    n = ranges.shape[0]
    cell = grid.world_to_cell(x, y)
    if not grid.in_grid(cell):
        raise ValueError("scan pose lies outside the grid extent")
    if n == 0:
        return grid

    res = grid.resolution
    angles = th + 2.0 * math.pi * np.arange(n) / n
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)

    # Sample along each beam at half-cell spacing; as a traversal this is the
    # cell set the beam sweeps, minus corner-only touches.
    step = 0.5 * res
    n_steps = int(math.ceil(ranges.max() / step)) + 1
    ts = (np.arange(n_steps) + 0.5) * step
    mask = ts[None, :] < ranges[:, None]
    px = x + dirs[:, 0:1] * ts[None, :]
    py = y + dirs[:, 1:2] * ts[None, :]
    rows = np.floor((py - grid.origin[1]) / res).astype(np.int64)
    cols = np.floor((px - grid.origin[0]) / res).astype(np.int64)
    valid = mask & (rows >= 0) & (rows < grid.rows) & (cols >= 0) & (cols < grid.cols)
    miss_flat = rows[valid] * grid.cols + cols[valid]
    miss_flat = np.unique(np.append(miss_flat, cell[0] * grid.cols + cell[1]))

    hit_beams = ranges < max_range
    hx = x + dirs[hit_beams, 0] * ranges[hit_beams]
    hy = y + dirs[hit_beams, 1] * ranges[hit_beams]
    hrows = np.floor((hy - grid.origin[1]) / res).astype(np.int64)
    hcols = np.floor((hx - grid.origin[0]) / res).astype(np.int64)
    hvalid = (hrows >= 0) & (hrows < grid.rows) & (hcols >= 0) & (hcols < grid.cols)
    hit_flat = np.unique(hrows[hvalid] * grid.cols + hcols[hvalid])

    miss_flat = np.setdiff1d(miss_flat, hit_flat, assume_unique=True)
    flat_p = grid.p.reshape(-1)
    for flat, delta in ((miss_flat, LOGIT_MISS), (hit_flat, LOGIT_HIT)):
        if flat.size:
            flat_p[flat] = np.clip(_sigmoid(_logit(flat_p[flat]) + delta), P_MIN, P_MAX)
    return grid


def frontier_cells(grid: OccupancyGrid) -> list[tuple[int, int]]:
    """Free cells with at least one unknown cell in their 8-neighborhood,
    in row-major order."""
    free = free_mask(grid)
    unk = unknown_mask(grid)
    near_unknown = np.zeros_like(unk)
    rows, cols = unk.shape
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            src = unk[max(dr, 0):rows + min(dr, 0), max(dc, 0):cols + min(dc, 0)]
            near_unknown[max(-dr, 0):rows + min(-dr, 0), max(-dc, 0):cols + min(-dc, 0)] |= src
    return [tuple(rc) for rc in np.argwhere(free & near_unknown)]


def map_entropy(grid: OccupancyGrid) -> float:
    """H = -sum_ij p_ij * ln p_ij over all cells (single-term form, nats).

    Deliberately not the two-term binary entropy: the quantity is only used
    as a change detector, and the single-term form is what the rest of the
    stack (re-selection trigger, tests) is calibrated against.
    """
    p = grid.p
    return float(-np.sum(p * np.log(p)))


def save_pgm(grid: OccupancyGrid, pgm_path: str | Path, sidecar_path: str | Path | None = None) -> None:
    """Write probabilities as an 8-bit binary PGM (value = round(p * 255),
    row 0 first) plus a JSON sidecar with origin/resolution."""
    pgm_path = Path(pgm_path)
    data = np.round(grid.p * 255.0).astype(np.uint8)
    with open(pgm_path, "wb") as f:
        f.write(f"P5\n{grid.cols} {grid.rows}\n255\n".encode("ascii"))
        f.write(data.tobytes())
    if sidecar_path is None:
        sidecar_path = pgm_path.with_suffix(".json")
    meta = {
        "schema": 1,
        "resolution": grid.resolution,
        "origin": [grid.origin[0], grid.origin[1]],
        "rows": grid.rows,
        "cols": grid.cols,
    }
    Path(sidecar_path).write_text(json.dumps(meta, sort_keys=True) + "\n")


def load_pgm(pgm_path: str | Path, sidecar_path: str | Path | None = None) -> OccupancyGrid:
    """Inverse of save_pgm; probabilities are quantized to 8 bits."""
    pgm_path = Path(pgm_path)
    raw = pgm_path.read_bytes()
    if not raw.startswith(b"P5"):
        raise ValueError("expected a binary (P5) PGM file")
    header, rest = raw.split(b"\n", 1)
    dims, rest = rest.split(b"\n", 1)
    maxval, pixels = rest.split(b"\n", 1)
    cols, rows = (int(v) for v in dims.split())
    if int(maxval) != 255:
        raise ValueError("expected maxval 255")
    p = np.frombuffer(pixels[: rows * cols], dtype=np.uint8).reshape(rows, cols) / 255.0
    if sidecar_path is None:
        sidecar_path = pgm_path.with_suffix(".json")
    meta = json.loads(Path(sidecar_path).read_text())
    return OccupancyGrid(meta["resolution"], tuple(meta["origin"]), p.astype(float))
