"""Kinematic bicycle model.

State (x, y, heading, speed), input (steering, acceleration)::

    x' = v cos(psi),  y' = v sin(psi),  psi' = v tan(delta) / L,  v' = a

Integrated with one RK4 step per control interval. Speed is held inside
[0, max_speed] by saturating the acceleration over the step, which is the
same end-of-step clamp but keeps the position update consistent with it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 0.5
    max_steer: float = 0.4
    max_accel: float = 2.0
    max_speed: float = 3.5

    def __post_init__(self):
        if min(self.wheelbase, self.max_steer, self.max_accel, self.max_speed) <= 0:
            raise ValueError("vehicle parameters must be positive")
        if not self.max_steer < math.pi / 2:
            raise ValueError("max steering must be below pi/2")

    def with_wheelbase(self, wheelbase: float) -> "VehicleParams":
        return VehicleParams(wheelbase, self.max_steer, self.max_accel, self.max_speed)


@dataclass(frozen=True)
class VehicleState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    speed: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.heading, self.speed])

    @classmethod
    def from_array(cls, arr) -> "VehicleState":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]), float(arr[3]))


@dataclass(frozen=True)
class ControlInput:
    steering: float = 0.0
    accel: float = 0.0

    def clipped(self, params: VehicleParams) -> "ControlInput":
        return ControlInput(
            min(max(self.steering, -params.max_steer), params.max_steer),
            min(max(self.accel, -params.max_accel), params.max_accel),
        )


@njit(cache=True)
def wrap_angle(a):
    """Wrap to [-pi, pi], odd-symmetric so mirrored trajectories stay exact mirrors."""
    if -math.pi <= a <= math.pi:
        return a
    r = (abs(a) + math.pi) % (2.0 * math.pi) - math.pi
    return r if a > 0 else -r


@njit(cache=True)
def rk4(x, y, psi, v, delta, a, dt, wheelbase, max_speed):
    a = min(max(a, -v / dt), (max_speed - v) / dt)
    kappa = math.tan(delta) / wheelbase
    h2 = 0.5 * dt

    v1 = v
    dx1 = v1 * math.cos(psi)
    dy1 = v1 * math.sin(psi)
    dp1 = v1 * kappa

    v2 = v + h2 * a
    p2 = psi + h2 * dp1
    dx2 = v2 * math.cos(p2)
    dy2 = v2 * math.sin(p2)
    dp2 = v2 * kappa

    p3 = psi + h2 * dp2
    dx3 = v2 * math.cos(p3)
    dy3 = v2 * math.sin(p3)
    dp3 = v2 * kappa

    v4 = v + dt * a
    p4 = psi + dt * dp3
    dx4 = v4 * math.cos(p4)
    dy4 = v4 * math.sin(p4)
    dp4 = v4 * kappa

    s = dt / 6.0
    xn = x + s * (dx1 + 2.0 * dx2 + 2.0 * dx3 + dx4)
    yn = y + s * (dy1 + 2.0 * dy2 + 2.0 * dy3 + dy4)
    pn = psi + s * (dp1 + 2.0 * dp2 + 2.0 * dp3 + dp4)
    return xn, yn, wrap_angle(pn), v4


@njit(cache=True)
def rollout_array(s0, controls, dt, wheelbase, max_speed):
    n = controls.shape[0]
    out = np.empty((n + 1, 4))
    out[0] = s0
    x, y, p, v = s0[0], s0[1], s0[2], s0[3]
    for k in range(n):
        x, y, p, v = rk4(x, y, p, v, controls[k, 0], controls[k, 1], dt, wheelbase, max_speed)
        out[k + 1, 0] = x
        out[k + 1, 1] = y
        out[k + 1, 2] = p
        out[k + 1, 3] = v
    return out


def step(s: VehicleState, u: ControlInput, dt: float, p: VehicleParams) -> VehicleState:
    return VehicleState(*rk4(s.x, s.y, s.heading, s.speed, u.steering, u.accel, dt, p.wheelbase, p.max_speed))


def rollout(s0: VehicleState, controls, dt: float, p: VehicleParams) -> list[VehicleState]:
    traj = [s0]
    for u in controls:
        traj.append(step(traj[-1], u, dt, p))
    return traj


def controls_to_array(controls) -> np.ndarray:
    if isinstance(controls, np.ndarray):
        return np.asarray(controls, dtype=np.float64).reshape(-1, 2)
    return np.array([[u.steering, u.accel] for u in controls], dtype=np.float64).reshape(-1, 2)
