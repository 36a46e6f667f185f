"""Flat-ground camera model: image pixel <-> point on the vehicle's motion plane.

Body frame: x forward, y left, z up, origin on the ground under the vehicle
reference point. The camera sits ``height_above_ground`` above the plane at
(``offset_x``, ``offset_y``), pitched down by ``pitch`` with zero roll and yaw.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AboveHorizon, BehindCamera

HORIZON_GUARD = 0.5


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")


@dataclass(frozen=True)
class CameraMount:
    height_above_ground: float
    pitch: float = 0.0
    offset_x: float = 0.0
    offset_y: float = 0.0

    def __post_init__(self):
        if not self.height_above_ground > 0:
            raise ValueError("camera height must be positive")
        if not abs(self.pitch) < math.pi / 2:
            raise ValueError("|pitch| must be below pi/2")


@dataclass(frozen=True)
class GroundPoint:
    x: float
    y: float


def horizon_row(intr: CameraIntrinsics, mount: CameraMount) -> float:
    return intr.cy - intr.fy * math.tan(mount.pitch)


def pixel_to_ground(pixel, intr: CameraIntrinsics, mount: CameraMount) -> GroundPoint:
    row, col = pixel
    if not row > horizon_row(intr, mount) + HORIZON_GUARD:
        raise AboveHorizon(f"row {row} is not below the horizon")
    x, y = pixels_to_ground(np.array([row], float), np.array([col], float), intr, mount)
    return GroundPoint(float(x[0]), float(y[0]))


def pixels_to_ground(rows, cols, intr: CameraIntrinsics, mount: CameraMount):
    """Vectorised ray/plane intersection; callers guarantee rows are below the horizon."""
    s, c = math.sin(mount.pitch), math.cos(mount.pitch)
    down = (np.asarray(rows, float) - intr.cy) / intr.fy
    right = (np.asarray(cols, float) - intr.cx) / intr.fx
    t = mount.height_above_ground / (s + down * c)
    return mount.offset_x + t * (c - down * s), mount.offset_y - t * right


def ground_to_pixel(p: GroundPoint, intr: CameraIntrinsics, mount: CameraMount) -> tuple[float, float]:
    s, c = math.sin(mount.pitch), math.cos(mount.pitch)
    dx = p.x - mount.offset_x
    dy = p.y - mount.offset_y
    h = mount.height_above_ground
    forward = dx * c + h * s
    if not forward > 0:
        raise BehindCamera(f"({p.x}, {p.y}) is behind the camera")
    down = h * c - dx * s
    return intr.cy + intr.fy * down / forward, intr.cx - intr.fx * dy / forward
