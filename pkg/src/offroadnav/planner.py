"""Nonlinear MPC on the kinematic bicycle: single shooting, projected gradient descent.

Stage cost over the predicted states k = 1..H and controls k = 0..H-1::

    w_pos |p_k - g|^2 + w_head (1 - cos(psi_k - bearing_k(g)))
      + w_speed_track (v_k - v_limit)^2 + w_steer delta_k^2 + w_accel a_k^2
    + w_terminal |p_H - g|^2

Gradients are central finite differences on the control vector. After every
iterate the controls are projected onto the actuator boxes and accelerations
are clipped so that no predicted speed exceeds the speed limit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .projection import GroundPoint
from .vehicle import ControlInput, VehicleParams, VehicleState, controls_to_array, rk4, rollout_array

FD_STEP = 1e-5
MAX_BACKTRACKS = 10


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 20
    dt: float = 0.1
    w_pos: float = 1.0
    w_head: float = 0.5
    w_speed_track: float = 0.0
    w_steer: float = 0.1
    w_accel: float = 0.05
    w_terminal: float = 5.0
    max_iterations: int = 60
    step_size: float = 1.0
    gradient_tol: float = 1e-6

    def __post_init__(self):
        if self.horizon < 5:
            raise ValueError("horizon must be at least 5 steps")
        if not 0 < self.dt <= 0.1:
            raise ValueError("dt must be in (0, 0.1]")
        weights = self.weights()
        if np.any(weights < 0):
            raise ValueError("weights must be non-negative")
        if not (self.w_pos > 0 or self.w_terminal > 0):
            raise ValueError("one of w_pos, w_terminal must be positive")

    def weights(self) -> np.ndarray:
        return np.array([self.w_pos, self.w_head, self.w_speed_track, self.w_steer, self.w_accel, self.w_terminal])


@dataclass(frozen=True)
class MpcProblem:
    state: VehicleState
    goal: GroundPoint  # body frame of ``state``
    speed_limit: float
    params: VehicleParams

    def __post_init__(self):
        if not 0 < self.speed_limit <= self.params.max_speed:
            raise ValueError("speed limit must be in (0, max_speed]")
        if not (math.isfinite(self.goal.x) and math.isfinite(self.goal.y)):
            raise ValueError("goal must be finite")

    def goal_world(self) -> tuple[float, float]:
        c, s = math.cos(self.state.heading), math.sin(self.state.heading)
        return (
            self.state.x + c * self.goal.x - s * self.goal.y,
            self.state.y + s * self.goal.x + c * self.goal.y,
        )


@dataclass(frozen=True, eq=False)
class MpcSolution:
    controls: np.ndarray  # (H, 2): steering, acceleration
    trajectory: np.ndarray  # (H + 1, 4)
    cost: float
    iterations: int
    converged: bool
    cost_history: tuple[float, ...] = field(default=())

    def first_control(self) -> ControlInput:
        return ControlInput(float(self.controls[0, 0]), float(self.controls[0, 1]))

    @property
    def speeds(self) -> np.ndarray:
        return self.trajectory[:, 3]


@njit(cache=True)
def _misalignment(p, ex, ey, dist2):
    """1 - cos(heading - bearing to goal), without the atan2."""
    if dist2 == 0.0:
        # atan2(0, 0) == 0
        return 1.0 - math.cos(p)
    return 1.0 - (math.cos(p) * ex + math.sin(p) * ey) / math.sqrt(dist2)


@njit(cache=True)
def _accumulate(x, y, p, v, u, k0, acc, gx, gy, dt, L, vmax, w, vref):
    """Add the cost of controls k0..H-1 starting from state k0 to ``acc``."""
    H = u.shape[0]
    w_pos, w_head, w_speed, w_steer, w_accel, w_term = w[0], w[1], w[2], w[3], w[4], w[5]
    for k in range(k0, H):
        d = u[k, 0]
        a = u[k, 1]
        acc += w_steer * d * d + w_accel * a * a
        x, y, p, v = rk4(x, y, p, v, d, a, dt, L, vmax)
        ex = gx - x
        ey = gy - y
        dist2 = ex * ex + ey * ey
        acc += w_pos * dist2 + w_head * _misalignment(p, ex, ey, dist2)
        dv = v - vref
        acc += w_speed * dv * dv
        if k == H - 1:
            acc += w_term * dist2
    return acc


@njit(cache=True)
def _cost(s0, u, gx, gy, dt, L, vmax, w, vref):
    return _accumulate(s0[0], s0[1], s0[2], s0[3], u, 0, 0.0, gx, gy, dt, L, vmax, w, vref)


@njit(cache=True)
def _gradient_curvature(s0, u, gx, gy, dt, L, vmax, w, vref, h):
    """Central-difference gradient and Hessian diagonal, reusing rollout prefixes.

    The prefix partial sum is accumulated in the same order as a full
    evaluation, so each perturbed cost equals a from-scratch ``_cost`` exactly.
    """
    H = u.shape[0]
    states = np.empty((H + 1, 4))
    prefix = np.empty(H + 1)
    w_pos, w_head, w_speed, w_steer, w_accel, w_term = w[0], w[1], w[2], w[3], w[4], w[5]
    x, y, p, v = s0[0], s0[1], s0[2], s0[3]
    acc = 0.0
    for k in range(H):
        states[k, 0] = x
        states[k, 1] = y
        states[k, 2] = p
        states[k, 3] = v
        prefix[k] = acc
        d = u[k, 0]
        a = u[k, 1]
        acc += w_steer * d * d + w_accel * a * a
        x, y, p, v = rk4(x, y, p, v, d, a, dt, L, vmax)
        ex = gx - x
        ey = gy - y
        dist2 = ex * ex + ey * ey
        acc += w_pos * dist2 + w_head * _misalignment(p, ex, ey, dist2)
        dv = v - vref
        acc += w_speed * dv * dv
        if k == H - 1:
            acc += w_term * dist2
    g = np.empty((H, 2))
    curv = np.empty((H, 2))
    work = u.copy()
    for j in range(H):
        for c in range(2):
            base = u[j, c]
            work[j, c] = base + h
            jp = _accumulate(states[j, 0], states[j, 1], states[j, 2], states[j, 3],
                             work, j, prefix[j], gx, gy, dt, L, vmax, w, vref)
            work[j, c] = base - h
            jm = _accumulate(states[j, 0], states[j, 1], states[j, 2], states[j, 3],
                             work, j, prefix[j], gx, gy, dt, L, vmax, w, vref)
            work[j, c] = base
            g[j, c] = (jp - jm) / (2.0 * h)
            curv[j, c] = (jp - 2.0 * acc + jm) / (h * h)
    return g, curv


@njit(cache=True)
def _gradient(s0, u, gx, gy, dt, L, vmax, w, vref, h):
    return _gradient_curvature(s0, u, gx, gy, dt, L, vmax, w, vref, h)[0]


@njit(cache=True)
def _scaling(curv, w):
    """Inverse of the (floored) Hessian diagonal, used as a diagonal metric."""
    out = np.empty_like(curv)
    floor_steer = max(2.0 * w[3], 1e-3)
    floor_accel = max(2.0 * w[4], 1e-3)
    for k in range(curv.shape[0]):
        out[k, 0] = 1.0 / max(curv[k, 0], floor_steer)
        out[k, 1] = 1.0 / max(curv[k, 1], floor_accel)
    return out


@njit(cache=True)
def _project(u, v0, dt, max_steer, max_accel, vmax, limit):
    H = u.shape[0]
    v = v0
    for k in range(H):
        u[k, 0] = min(max(u[k, 0], -max_steer), max_steer)
        a = min(max(u[k, 1], -max_accel), max_accel)
        if v + a * dt > limit:
            a = max((limit - v) / dt, -max_accel)
        u[k, 1] = a
        # plant speed update: saturated to [0, vmax]
        a = min(max(a, -v / dt), (vmax - v) / dt)
        v = v + dt * a
    return u


@njit(cache=True)
def _solve(s0, u0, gx, gy, dt, L, vmax, max_steer, max_accel, limit, w, vref,
           max_iter, step0, tol, h):
    u = _project(u0.copy(), s0[3], dt, max_steer, max_accel, vmax, limit)
    J = _cost(s0, u, gx, gy, dt, L, vmax, w, vref)
    history = np.empty(max_iter + 1)
    history[0] = J
    alpha = step0
    iters = 0
    converged = False
    for it in range(max_iter):
        g, curv = _gradient_curvature(s0, u, gx, gy, dt, L, vmax, w, vref, h)
        direction = g * _scaling(curv, w)
        probe = _project(u - direction, s0[3], dt, max_steer, max_accel, vmax, limit)
        if np.max(np.abs(probe - u)) < tol:
            converged = True
            break
        accepted = False
        for bt in range(MAX_BACKTRACKS):
            cand = _project(u - alpha * direction, s0[3], dt, max_steer, max_accel, vmax, limit)
            Jc = _cost(s0, cand, gx, gy, dt, L, vmax, w, vref)
            if Jc < J:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        u = cand
        J = Jc
        iters += 1
        history[iters] = J
        alpha = min(2.0 * alpha, 1.0)
    return u, J, iters, converged, history[:iters + 1]


def solve(prob: MpcProblem, cfg: MpcConfig = MpcConfig(), warm=None) -> MpcSolution:
    """Plan ``cfg.horizon`` controls toward the goal under the speed limit.

    Never raises on non-convergence: the best iterate is returned with
    ``converged=False`` so the control loop always has a command.
    """
    H = cfg.horizon
    if warm is None:
        u0 = np.zeros((H, 2))
    else:
        u0 = controls_to_array(warm)
        if u0.shape != (H, 2):
            raise ValueError(f"warm start must have {H} controls")
    p = prob.params
    # The cost is invariant under rigid motions and mirroring, so solve in the
    # body frame with the goal folded onto the left. Mirrored goals then give
    # exactly negated steering, rather than agreeing only up to rounding noise
    # that the iteration can amplify.
    mirror = prob.goal.y < 0.0
    gy = -prob.goal.y if mirror else prob.goal.y
    if mirror:
        u0 = u0 * np.array([-1.0, 1.0])
    body = np.array([0.0, 0.0, 0.0, prob.state.speed])
    u, J, iters, converged, history = _solve(
        body, u0, prob.goal.x, gy, cfg.dt, p.wheelbase, p.max_speed, p.max_steer, p.max_accel,
        prob.speed_limit, cfg.weights(), prob.speed_limit,
        cfg.max_iterations, cfg.step_size, cfg.gradient_tol, FD_STEP,
    )
    if mirror:
        u = u * np.array([-1.0, 1.0])
    traj = rollout_array(prob.state.as_array(), u, cfg.dt, p.wheelbase, p.max_speed)
    return MpcSolution(u, traj, float(J), int(iters), bool(converged), tuple(float(c) for c in history))


def cost(prob: MpcProblem, controls, cfg: MpcConfig = MpcConfig()) -> float:
    p = prob.params
    gx, gy = prob.goal_world()
    return float(_cost(prob.state.as_array(), controls_to_array(controls), gx, gy, cfg.dt,
                       p.wheelbase, p.max_speed, cfg.weights(), prob.speed_limit))


def cost_gradient(prob: MpcProblem, controls, cfg: MpcConfig = MpcConfig(), h: float = FD_STEP) -> np.ndarray:
    p = prob.params
    gx, gy = prob.goal_world()
    return _gradient(prob.state.as_array(), controls_to_array(controls), gx, gy, cfg.dt,
                     p.wheelbase, p.max_speed, cfg.weights(), prob.speed_limit, h)


def shift_warm_start(prev: MpcSolution) -> np.ndarray:
    u = np.asarray(prev.controls)
    return np.concatenate([u[1:], u[-1:]], axis=0)
