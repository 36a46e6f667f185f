"""Builders for the bundled scenarios.

The shipped ``.scn`` files under ``scenarios/`` are generated from these
functions (``python -m offroadnav.worlds``); tests check they stay in sync.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .projection import CameraIntrinsics, CameraMount
from .sim import HazardZone, Landmark, Rect, Scenario, TerrainClass, TerrainGrid
from .vehicle import VehicleState

SCENARIO_DIR = Path(__file__).parent / "scenarios"

DEFAULT_INTRINSICS = CameraIntrinsics(fx=40.0, fy=40.0, cx=40.0, cy=30.0, width=80, height=60)
DEFAULT_MOUNT = CameraMount(height_above_ground=3.0, pitch=0.0)


class GridPainter:
    """Rasterise simple shapes onto a terrain grid, cell centres tested."""

    def __init__(self, x_min, y_min, x_max, y_max, cell_size, classes):
        self.cell_size = cell_size
        self.origin = (x_min, y_min)
        self.cols = int(round((x_max - x_min) / cell_size))
        self.rows = int(round((y_max - y_min) / cell_size))
        self.classes = list(classes)
        self.ids = np.zeros((self.rows, self.cols), dtype=np.int16)
        r, c = np.mgrid[0:self.rows, 0:self.cols]
        self.cx = x_min + (c + 0.5) * cell_size
        self.cy = y_min + (self.rows - 1 - r + 0.5) * cell_size

    def _id(self, name):
        return [c.label + ("!" if c.blocked else "") for c in self.classes].index(name)

    def rect(self, name, x0, y0, x1, y1):
        sel = (self.cx >= x0) & (self.cx < x1) & (self.cy >= y0) & (self.cy < y1)
        self.ids[sel] = self._id(name)

    def polyline(self, name, points, width):
        half = width / 2
        for (x0, y0), (x1, y1) in zip(points, points[1:]):
            dx, dy = x1 - x0, y1 - y0
            length2 = dx * dx + dy * dy
            t = np.clip(((self.cx - x0) * dx + (self.cy - y0) * dy) / length2, 0.0, 1.0)
            d2 = (self.cx - x0 - t * dx) ** 2 + (self.cy - y0 - t * dy) ** 2
            self.ids[d2 <= half * half] = self._id(name)

    def grid(self) -> TerrainGrid:
        return TerrainGrid(self.cell_size, self.ids.copy(), tuple(self.classes), self.origin)


TWO_LANDMARK_DIRECTIVE = (
    "★ asphalt: quickly\n"
    "★ asphalt: slowly\n"
    "★ sandy road: slowly\n"
    "# parked car\n"
    "# animal sculpture\n"
)

TWO_LANDMARK_INSTRUCTION = (
    "Drive quickly along the asphalt road. Once you reach the parked car, slow down, "
    "the road ahead is narrow and curvy. After the animal sculpture the asphalt is "
    "blocked, so take the sandy road and keep going slowly until the end."
)


def two_landmark() -> Scenario:
    """Asphalt start at 3 m/s, parked car -> 1.5 m/s through a hazard, sculpture -> sandy detour."""
    classes = [
        TerrainClass("other"),
        TerrainClass("asphalt"),
        TerrainClass("asphalt", blocked=True),
        TerrainClass("sandy road"),
    ]
    g = GridPainter(-6.0, -24.0, 84.0, 8.0, 0.5, classes)
    g.rect("asphalt", -6.0, -2.5, 84.0, 2.5)
    g.polyline("sandy road", [(44.0, -1.0), (54.0, -13.0), (84.0, -13.0)], 5.0)
    g.rect("asphalt!", 56.0, -2.5, 62.0, 2.5)
    return Scenario(
        name="two_landmark",
        grid=g.grid(),
        intrinsics=DEFAULT_INTRINSICS,
        mount=DEFAULT_MOUNT,
        start=VehicleState(0.0, 0.0, 0.0, 0.0),
        goal=Rect(72.0, -16.0, 80.0, -10.0),
        mission=TWO_LANDMARK_DIRECTIVE,
        instruction=TWO_LANDMARK_INSTRUCTION,
        landmarks=(
            Landmark("parked car", 17.0, 3.5, 1.0, 6.0),
            Landmark("animal sculpture", 40.0, -3.5, 1.0, 6.0),
        ),
        hazards=(HazardZone(21.0, -3.0, 38.0, 3.0, 2.0),),
        noise=0.05,
        seed=0,
        step_limit=900,
        dt=0.1,
    )


def loop_track(perimeter: float = 500.0, radius: float = 15.0, width: float = 6.0) -> Scenario:
    """Rounded-rectangle road of the given centre-line perimeter, driven counter-clockwise."""
    straight_total = perimeter - 2 * math.pi * radius
    a = straight_total * 0.3  # horizontal straights
    b = straight_total * 0.2  # vertical straights
    margin = 6.0
    classes = [TerrainClass("other"), TerrainClass("road")]
    g = GridPainter(-margin - radius, -margin - radius, a + radius + margin, b + radius + margin, 0.5, classes)
    pts = []
    corners = [(a, 0.0, -math.pi / 2), (a, b, 0.0), (0.0, b, math.pi / 2), (0.0, 0.0, math.pi)]
    for cx, cy, start in corners:
        for i in range(17):
            ang = start + (math.pi / 2) * i / 16
            pts.append((cx + radius * math.cos(ang), cy + radius * math.sin(ang)))
    pts.append(pts[0])
    g.polyline("road", pts, width)
    start_x = a / 2
    return Scenario(
        name="loop",
        grid=g.grid(),
        intrinsics=DEFAULT_INTRINSICS,
        mount=DEFAULT_MOUNT,
        start=VehicleState(start_x, -radius, 0.0, 0.0),
        goal=Rect(start_x - 6.0, -radius - width / 2, start_x - 3.0, -radius + width / 2),
        mission="★ road: quickly\n",
        instruction="Follow the road quickly.",
        noise=0.05,
        seed=0,
        step_limit=6000,
        dt=0.1,
        laps=3,
    )


def corridor(length: float = 40.0, blocked_at: float | None = None, noise: float = 0.0) -> Scenario:
    """Straight all-road corridor; optionally blocked across its width at ``blocked_at``."""
    classes = [TerrainClass("other"), TerrainClass("road"), TerrainClass("road", blocked=True)]
    g = GridPainter(-5.0, -8.0, length + 10.0, 8.0, 0.5, classes)
    g.rect("road", -5.0, -2.5, length + 10.0, 2.5)
    if blocked_at is not None:
        g.rect("road!", blocked_at, -2.5, blocked_at + 2.0, 2.5)
    return Scenario(
        name="corridor" if blocked_at is None else "corridor_blocked",
        grid=g.grid(),
        intrinsics=DEFAULT_INTRINSICS,
        mount=DEFAULT_MOUNT,
        start=VehicleState(0.0, 0.0, 0.0, 0.0),
        goal=Rect(length - 1.0, -2.5, length + 3.0, 2.5),
        mission="★ road: quickly\n",
        noise=noise,
        step_limit=400,
    )


BUNDLED = {"two_landmark": two_landmark, "loop": loop_track, "corridor": corridor}


def main():
    from .scenario_file import dump_scenario

    SCENARIO_DIR.mkdir(exist_ok=True)
    for name, build in BUNDLED.items():
        path = SCENARIO_DIR / f"{name}.scn"
        path.write_text(dump_scenario(build()), encoding="utf-8")
        print(path)


if __name__ == "__main__":
    main()
