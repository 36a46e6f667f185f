"""Moving horizon estimation of the bicycle state and wheelbase.

Decision vector: the window's N states (x, y, heading, speed) stacked with the
wheelbase L. Cost::

    prior_weight |s_0 - prior|^2 + wheelbase_prior_weight (L - L_guess)^2
      + sum_k |y_k - h(s_k)|^2 / sigma^2
      + rho sum_k |s_{k+1} - f(s_k, u_k; L)|^2

with f one RK4 step and h the pose (x, y, heading). Minimised by damped
Gauss-Newton; the Jacobian of f is taken by central differences.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import Diverged
from .vehicle import VehicleParams, VehicleState, controls_to_array, rk4, rollout_array, wrap_angle

_FD_STEP = 1e-6
_MAX_BACKOFFS = 5


@dataclass(frozen=True, eq=False)
class MheWindow:
    measurements: np.ndarray  # (N, 3) x, y, heading
    controls: np.ndarray  # (N - 1, 2) steering, acceleration
    dt: float
    prior: VehicleState
    prior_weight: float = 1.0
    sigma_pos: float = 0.01
    sigma_heading: float = 0.005

    def __post_init__(self):
        meas = np.asarray(self.measurements, dtype=np.float64).reshape(-1, 3)
        ctrl = controls_to_array(self.controls)
        object.__setattr__(self, "measurements", meas)
        object.__setattr__(self, "controls", ctrl)
        if meas.shape[0] < 2:
            raise ValueError("window needs at least two measurements")
        if ctrl.shape[0] != meas.shape[0] - 1:
            raise ValueError("need exactly N - 1 controls for N measurements")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def horizon(self) -> int:
        return self.measurements.shape[0]


@dataclass(frozen=True)
class MheOptions:
    max_iterations: int = 20
    gradient_tol: float = 1e-6
    model_weight: float = 1e4
    wheelbase_prior_weight: float = 0.0
    min_wheelbase: float = 0.05
    max_wheelbase: float = 10.0

    def __post_init__(self):
        if self.max_iterations < 1 or not self.gradient_tol > 0:
            raise ValueError("need max_iterations >= 1 and gradient_tol > 0")


@dataclass(frozen=True, eq=False)
class MheResult:
    state: VehicleState
    wheelbase: float
    cost: float
    iterations: int
    trajectory: np.ndarray  # (N, 4) smoothed states
    cost_history: tuple[float, ...] = ()


@njit(cache=True)
def _model_blocks(states, controls, L, dt, vmax, h):
    """f(s_k) for every k, plus d f / d s_k and d f / d L by central differences."""
    n = controls.shape[0]
    F = np.empty((n, 4))
    Js = np.empty((n, 4, 4))
    JL = np.empty((n, 4))
    for k in range(n):
        x, y, p, v = states[k, 0], states[k, 1], states[k, 2], states[k, 3]
        d, a = controls[k, 0], controls[k, 1]
        r = rk4(x, y, p, v, d, a, dt, L, vmax)
        for i in range(4):
            F[k, i] = r[i]
        for j in range(5):
            pert = np.array([x, y, p, v, L])
            pert[j] += h
            fp = rk4(pert[0], pert[1], pert[2], pert[3], d, a, dt, pert[4], vmax)
            pert[j] -= 2.0 * h
            fm = rk4(pert[0], pert[1], pert[2], pert[3], d, a, dt, pert[4], vmax)
            for i in range(4):
                diff = fp[i] - fm[i]
                if i == 2:
                    diff = wrap_angle(diff)
                if j < 4:
                    Js[k, i, j] = diff / (2.0 * h)
                else:
                    JL[k, i] = diff / (2.0 * h)
    return F, Js, JL


def _wrap(a):
    return np.pi - np.mod(np.pi - a, 2.0 * np.pi)


class _Problem:
    def __init__(self, w: MheWindow, p: VehicleParams, opts: MheOptions):
        self.w = w
        self.p = p
        self.opts = opts
        self.n = w.horizon
        self.sqrt_prior = np.sqrt(w.prior_weight)
        self.sqrt_lprior = np.sqrt(opts.wheelbase_prior_weight)
        self.sqrt_rho = np.sqrt(opts.model_weight)
        self.meas_scale = np.array([1 / w.sigma_pos, 1 / w.sigma_pos, 1 / w.sigma_heading])
        self.prior = w.prior.as_array()
        self.l_guess = p.wheelbase

    def residuals(self, z, with_jacobian):
        n = self.n
        states = z[:-1].reshape(n, 4)
        L = z[-1]
        w = self.w
        d_prior = states[0] - self.prior
        d_prior[2] = _wrap(d_prior[2])
        d_meas = states[:, :3] - w.measurements
        d_meas[:, 2] = _wrap(d_meas[:, 2])
        F, Js, JL = _model_blocks(states, w.controls, L, w.dt, self.p.max_speed, _FD_STEP)
        d_model = states[1:] - F
        d_model[:, 2] = _wrap(d_model[:, 2])
        r = np.concatenate([
            self.sqrt_prior * d_prior,
            [self.sqrt_lprior * (L - self.l_guess)],
            (d_meas * self.meas_scale).ravel(),
            self.sqrt_rho * d_model.ravel(),
        ])
        if not with_jacobian:
            return r, None
        m, nz = r.size, z.size
        J = np.zeros((m, nz))
        J[0:4, 0:4] = self.sqrt_prior * np.eye(4)
        J[4, -1] = self.sqrt_lprior
        row = 5
        for k in range(n):
            for i in range(3):
                J[row + 3 * k + i, 4 * k + i] = self.meas_scale[i]
        row += 3 * n
        eye = self.sqrt_rho * np.eye(4)
        for k in range(n - 1):
            rows = slice(row + 4 * k, row + 4 * k + 4)
            J[rows, 4 * (k + 1):4 * (k + 2)] = eye
            J[rows, 4 * k:4 * k + 4] = -self.sqrt_rho * Js[k]
            J[rows, -1] = -self.sqrt_rho * JL[k]
        return r, J

    def clamp(self, z):
        z[-1] = min(max(z[-1], self.opts.min_wheelbase), self.opts.max_wheelbase)
        states = z[:-1].reshape(self.n, 4)
        states[:, 2] = _wrap(states[:, 2])
        return z


def mhe_estimate(
    w: MheWindow,
    p_guess: VehicleParams,
    opts: MheOptions = MheOptions(),
    init: np.ndarray | None = None,
    init_wheelbase: float | None = None,
) -> MheResult:
    """Jointly estimate the window's states and the wheelbase.

    ``init`` optionally warm-starts the (N, 4) state trajectory; otherwise the
    prior is rolled forward through the window's controls with the guessed
    wheelbase.
    """
    prob = _Problem(w, p_guess, opts)
    L0 = p_guess.wheelbase if init_wheelbase is None else init_wheelbase
    if init is None:
        init = rollout_array(w.prior.as_array(), w.controls, w.dt, L0, p_guess.max_speed)
    z = np.concatenate([np.asarray(init, dtype=np.float64).ravel(), [L0]])
    r, J = prob.residuals(z, True)
    cost = float(r @ r)
    history = [cost]
    lam = 1e-6
    iterations = 0
    while iterations < opts.max_iterations:
        g = J.T @ r
        if np.max(np.abs(g)) < opts.gradient_tol:
            break
        A = J.T @ J
        diag = np.diag(A).copy()
        backoffs = 0
        while True:
            try:
                step = np.linalg.solve(A + lam * (np.diag(diag) + np.eye(z.size) * 1e-9), -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                cand = prob.clamp(z + step)
                r_c, _ = prob.residuals(cand, False)
                cost_c = float(r_c @ r_c)
                if cost_c <= cost:
                    break
                predicted = -(g @ step + 0.5 * step @ (A @ step))
                if np.max(np.abs(cand - z)) < 1e-13 or predicted <= 1e-12 * max(cost, 1.0):
                    # converged: the model's promised decrease is below the cost's rounding
                    step = None
                    break
            backoffs += 1
            lam *= 10.0
            if backoffs >= _MAX_BACKOFFS:
                raise Diverged(f"no decrease after {backoffs} damping backoffs (cost {cost:.3e})")
        if step is None:
            break
        done = np.max(np.abs(cand - z)) < 1e-12
        z = cand
        r, J = prob.residuals(z, True)
        cost = float(r @ r)
        history.append(cost)
        iterations += 1
        lam = max(lam * 0.1, 1e-12)
        if done:
            break
    states = z[:-1].reshape(w.horizon, 4)
    return MheResult(
        VehicleState.from_array(states[-1]), float(z[-1]), cost, iterations, states.copy(), tuple(history)
    )
