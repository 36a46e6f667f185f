"""Deterministic world model, synthetic segmentation renderer and mission executor."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import AboveHorizon, BehindCamera, Diverged, NavError, NoTraversableRegion, ScenarioInvalid
from .instruction import AdverbLexicon, MissionPlan, compile_mission, parse_directive
from .mhe import MheOptions, MheWindow, mhe_estimate
from .perception import (
    BACKGROUND,
    DEFAULT_CONFIDENCE_FLOOR,
    DEFAULT_KERNELS,
    LabelMask,
    ScoreMap,
    denoise,
    detect_landmark,
    select_goal_pixel,
)
from .planner import MpcConfig, MpcProblem, shift_warm_start, solve
from .projection import (
    HORIZON_GUARD,
    CameraIntrinsics,
    CameraMount,
    GroundPoint,
    ground_to_pixel,
    horizon_row,
    pixel_to_ground,
    pixels_to_ground,
)
from .vehicle import ControlInput, VehicleParams, VehicleState, rk4

RENDER_CONFIDENCE = 0.9
VIEW_RANGE = 30.0
SPEED_TOLERANCE = 1e-6


@dataclass(frozen=True)
class TerrainClass:
    label: str
    blocked: bool = False


@dataclass(frozen=True, eq=False)
class TerrainGrid:
    """Row 0 is the northern edge; ``origin`` is the south-west corner in metres."""

    cell_size: float
    class_ids: np.ndarray
    classes: tuple[TerrainClass, ...]
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        ids = np.asarray(self.class_ids, dtype=np.int16)
        object.__setattr__(self, "class_ids", ids)
        object.__setattr__(self, "classes", tuple(self.classes))
        if ids.ndim != 2 or ids.size < 1:
            raise ValueError("terrain grid must be a non-empty 2-D array")
        if ids.min() < 0 or ids.max() >= len(self.classes):
            raise ValueError("terrain class id out of range")
        if not self.cell_size > 0:
            raise ValueError("cell size must be positive")
        if BACKGROUND not in {c.label for c in self.classes}:
            raise ValueError(f"terrain classes must include {BACKGROUND!r}")

    @property
    def rows(self) -> int:
        return self.class_ids.shape[0]

    @property
    def cols(self) -> int:
        return self.class_ids.shape[1]

    @cached_property
    def labels(self) -> tuple[str, ...]:
        """Distinct terrain labels, background first."""
        rest = sorted({c.label for c in self.classes} - {BACKGROUND})
        return (BACKGROUND, *rest)

    @cached_property
    def _blocked(self) -> np.ndarray:
        return np.array([c.blocked for c in self.classes])

    def cells(self, xs, ys):
        """(row, col, inside) for world coordinates."""
        ox, oy = self.origin
        col = np.floor((np.asarray(xs) - ox) / self.cell_size).astype(np.int64)
        row = self.rows - 1 - np.floor((np.asarray(ys) - oy) / self.cell_size).astype(np.int64)
        inside = (row >= 0) & (row < self.rows) & (col >= 0) & (col < self.cols)
        return row, col, inside

    def class_at(self, x: float, y: float) -> TerrainClass | None:
        row, col, inside = self.cells(x, y)
        if not inside:
            return None
        return self.classes[self.class_ids[row, col]]

    def is_blocked(self, x: float, y: float) -> bool:
        cls = self.class_at(x, y)
        return cls is not None and cls.blocked

    def label_ids(self, xs, ys, labels) -> np.ndarray:
        """Index into ``labels`` of the terrain under each point; outside the grid is background."""
        lookup = np.array([labels.index(c.label) for c in self.classes])
        row, col, inside = self.cells(xs, ys)
        out = np.zeros(np.shape(xs), dtype=np.int64)
        out[inside] = lookup[self.class_ids[row[inside], col[inside]]]
        return out


@dataclass(frozen=True)
class Landmark:
    label: str
    x: float
    y: float
    visual_radius: float = 1.0
    trigger_radius: float = 6.0

    def __post_init__(self):
        if not (self.visual_radius > 0 and self.trigger_radius > 0):
            raise ValueError("landmark radii must be positive")


@dataclass(frozen=True)
class HazardZone:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    speed_threshold: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("hazard zone needs positive area")
        if not self.speed_threshold > 0:
            raise ValueError("hazard threshold must be positive")

    def contains(self, x, y) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class Rect:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def contains(self, x, y) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class PerceptionConfig:
    kernels: tuple[int, ...] = DEFAULT_KERNELS
    confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR
    min_pixels: int = 20
    band_offset: float = 5.0


@dataclass(frozen=True)
class EstimatorConfig:
    horizon: int = 20
    initial_prior_weight: float = 100.0
    prior_weight: float = 10.0
    sigma_pos: float = 0.01
    sigma_heading: float = 0.005
    options: MheOptions = MheOptions(max_iterations=5, wheelbase_prior_weight=1000.0)


# Closed-loop planner: track the speed limit, fewer iterations per step since
# the shifted warm start carries most of the previous solution over.
EPISODE_PLANNER = MpcConfig(w_speed_track=1.0, max_iterations=20)


@dataclass(frozen=True, eq=False)
class Scenario:
    grid: TerrainGrid
    intrinsics: CameraIntrinsics
    mount: CameraMount
    start: VehicleState
    goal: Rect
    mission: str  # offline directive text
    vehicle: VehicleParams = VehicleParams()
    landmarks: tuple[Landmark, ...] = ()
    hazards: tuple[HazardZone, ...] = ()
    instruction: str = ""
    use_llm: bool = False
    lexicon: dict = field(default_factory=dict)  # overrides on the default lexicon
    noise: float = 0.0
    seed: int = 0
    step_limit: int = 1000
    dt: float = 0.1
    laps: int = 1
    plant_wheelbase_factor: float = 1.1
    perception: PerceptionConfig = PerceptionConfig()
    planner: MpcConfig = EPISODE_PLANNER
    name: str = "scenario"

    @property
    def labels(self) -> tuple[str, ...]:
        """Score-map vocabulary: background, terrains, then landmarks."""
        marks = tuple(lm.label for lm in self.landmarks if lm.label not in self.grid.labels)
        return self.grid.labels + tuple(dict.fromkeys(marks))

    def adverb_lexicon(self) -> AdverbLexicon:
        return AdverbLexicon().with_overrides(self.lexicon)

    def landmark(self, label: str) -> Landmark | None:
        for lm in self.landmarks:
            if lm.label == label:
                return lm
        return None

    def compile(self, directive_text: str | None = None) -> MissionPlan:
        try:
            return compile_mission(
                parse_directive(self.mission if directive_text is None else directive_text),
                self.adverb_lexicon(),
                terrain_vocabulary=self.grid.labels,
                landmark_vocabulary=[lm.label for lm in self.landmarks],
            )
        except NavError as exc:
            raise ScenarioInvalid(f"mission does not compile: {exc}") from exc

    def validate(self) -> MissionPlan:
        if not 0 <= self.noise < 1:
            raise ScenarioInvalid("noise probability must be in [0, 1)")
        if self.step_limit < 0:
            raise ScenarioInvalid("step limit must be non-negative")
        if not 0 < self.dt <= 0.1:
            raise ScenarioInvalid("dt must be in (0, 0.1]")
        if self.laps < 1:
            raise ScenarioInvalid("laps must be >= 1")
        if self.grid.class_at(self.start.x, self.start.y) is None:
            raise ScenarioInvalid("start pose is outside the terrain grid")
        for lm in self.landmarks:
            if lm.trigger_radius < self.grid.cell_size:
                raise ScenarioInvalid(f"trigger radius of {lm.label!r} is below the cell size")
        plan = self.compile()
        for leg in plan.legs:
            if leg.speed_limit > self.vehicle.max_speed:
                raise ScenarioInvalid(f"speed limit {leg.speed_limit} exceeds vehicle max speed")
        return plan


class _Camera:
    """Per-camera cache of the ground points of all below-horizon pixels."""

    def __init__(self, intr: CameraIntrinsics, mount: CameraMount):
        self.intr = intr
        self.mount = mount
        self.horizon = horizon_row(intr, mount)
        rows, cols = np.mgrid[0:intr.height, 0:intr.width]
        valid = rows > self.horizon + HORIZON_GUARD
        self.rows = rows[valid]
        self.cols = cols[valid]
        self.gx, self.gy = pixels_to_ground(self.rows, self.cols, intr, mount)
        self.grid_r, self.grid_c = rows, cols


_CAMERAS: dict = {}


def _camera(intr, mount) -> _Camera:
    key = (intr, mount)
    if key not in _CAMERAS:
        _CAMERAS[key] = _Camera(intr, mount)
    return _CAMERAS[key]


def to_world(state: VehicleState, bx, by):
    c, s = math.cos(state.heading), math.sin(state.heading)
    return state.x + c * bx - s * by, state.y + s * bx + c * by


def to_body(state: VehicleState, wx, wy):
    c, s = math.cos(state.heading), math.sin(state.heading)
    dx, dy = wx - state.x, wy - state.y
    return c * dx + s * dy, -s * dx + c * dy


def render_truth(state: VehicleState, scenario: Scenario) -> np.ndarray:
    """Noise-free class ids of the camera view (terrain plus landmark discs)."""
    cam = _camera(scenario.intrinsics, scenario.mount)
    labels = scenario.labels
    intr = scenario.intrinsics
    ids = np.zeros((intr.height, intr.width), dtype=np.int64)
    wx, wy = to_world(state, cam.gx, cam.gy)
    ids[cam.rows, cam.cols] = scenario.grid.label_ids(wx, wy, labels)
    for lm in scenario.landmarks:
        bx, by = to_body(state, lm.x, lm.y)
        if math.hypot(bx, by) > VIEW_RANGE:
            continue
        try:
            r0, c0 = ground_to_pixel(GroundPoint(bx, by), intr, scenario.mount)
        except BehindCamera:
            continue
        m = scenario.mount
        depth = (bx - m.offset_x) * math.cos(m.pitch) + m.height_above_ground * math.sin(m.pitch)
        radius = lm.visual_radius * intr.fy / depth
        disc = (cam.grid_r - r0) ** 2 + (cam.grid_c - c0) ** 2 <= radius * radius
        ids[disc] = labels.index(lm.label)
    return ids


def render_view(state: VehicleState, scenario: Scenario, rng: np.random.Generator) -> ScoreMap:
    """Synthetic stand-in for a language-driven segmentation model's output."""
    ids = render_truth(state, scenario)
    n = len(scenario.labels)
    flip = rng.random(ids.shape) < scenario.noise
    shift = rng.integers(1, n, size=ids.shape)
    ids = np.where(flip, (ids + shift) % n, ids)
    return ScoreMap.from_class_ids(scenario.labels, ids, RENDER_CONFIDENCE)


def _near(state: VehicleState, lm: Landmark) -> bool:
    return math.hypot(state.x - lm.x, state.y - lm.y) <= lm.trigger_radius


def advance_mission(plan: MissionPlan, leg_index: int, mask: LabelMask, state: VehicleState, landmarks, min_pixels: int) -> int:
    """Move to the next leg once its trigger landmark is both seen and near."""
    if leg_index + 1 >= len(plan.legs):
        return leg_index
    trigger = plan.legs[leg_index + 1].trigger
    lm = landmarks.get(trigger) if isinstance(landmarks, dict) else next(
        (l for l in landmarks if l.label == trigger), None)
    if lm is None or trigger not in mask.labels:
        return leg_index
    if detect_landmark(mask, trigger, min_pixels) is None:
        return leg_index
    return leg_index + 1 if _near(state, lm) else leg_index


class Outcome(str, enum.Enum):
    SUCCESS = "Success"
    BLOCKED = "BlockedCellEntered"
    HAZARD = "HazardSpeedViolation"
    STEP_LIMIT = "StepLimitExceeded"


@dataclass(frozen=True)
class StepRecord:
    step: int
    true_state: VehicleState
    estimate: VehicleState
    wheelbase_estimate: float
    leg: int
    speed_limit: float
    control: ControlInput | None
    cost: float
    converged: bool
    landmark: str = ""


@dataclass(frozen=True)
class RunLog:
    records: tuple[StepRecord, ...]
    outcome: Outcome
    path_length: float
    steps: int
    max_speed_per_leg: tuple[float, ...]
    scenario: str = ""
    mode: str = "full"
    seed: int = 0


def _totals(records, n_legs):
    path = 0.0
    for a, b in zip(records, records[1:]):
        path += math.hypot(b.true_state.x - a.true_state.x, b.true_state.y - a.true_state.y)
    per_leg = [0.0] * n_legs
    for r in records:
        per_leg[r.leg] = max(per_leg[r.leg], r.true_state.speed)
    return path, tuple(per_leg)


def _check(state: VehicleState, scenario: Scenario):
    if scenario.grid.is_blocked(state.x, state.y):
        return Outcome.BLOCKED
    for hz in scenario.hazards:
        if hz.contains(state.x, state.y) and state.speed > hz.speed_threshold:
            return Outcome.HAZARD
    return None


class _Estimator:
    """Sliding-window MHE over pose measurements and applied controls."""

    def __init__(self, start: VehicleState, params: VehicleParams, dt: float, cfg: EstimatorConfig):
        self.params = params
        self.dt = dt
        self.cfg = cfg
        self.meas: list = []
        self.ctrl: list = []
        self.prior = start
        self.prior_weight = cfg.initial_prior_weight
        self.wheelbase = params.wheelbase
        self.traj = None
        self.state = start

    def update(self, measurement, control: ControlInput | None) -> VehicleState:
        """Add the pose measured after applying ``control`` (None for the first one)."""
        self.meas.append(measurement)
        if control is not None:
            self.ctrl.append((control.steering, control.accel))
        if len(self.meas) == 1:
            return self.state
        n = self.cfg.horizon
        init = None
        if self.traj is not None:
            last = self.traj[-1]
            nxt = rk4(*last, *self.ctrl[-1], self.dt, self.wheelbase, self.params.max_speed)
            init = np.vstack([self.traj, nxt])
        if len(self.meas) > n:
            # slide: arrival prior is the previous estimate of the new first state
            self.prior = VehicleState.from_array(self.traj[1])
            self.prior_weight = self.cfg.prior_weight
            self.meas.pop(0)
            self.ctrl.pop(0)
            init = init[1:]
        window = MheWindow(
            np.array(self.meas), np.array(self.ctrl), self.dt, self.prior,
            self.prior_weight, self.cfg.sigma_pos, self.cfg.sigma_heading,
        )
        try:
            res = mhe_estimate(window, self.params.with_wheelbase(self.wheelbase), self.cfg.options,
                               init=init, init_wheelbase=self.wheelbase)
        except Diverged:
            self.traj = init
            self.state = VehicleState.from_array(init[-1]) if init is not None else self.state
            return self.state
        self.traj = res.trajectory
        self.wheelbase = res.wheelbase
        self.state = res.state
        return self.state


def run_episode(
    scenario: Scenario,
    perception: PerceptionConfig | None = None,
    planner: MpcConfig | None = None,
    estimator: EstimatorConfig | None = None,
    plan: MissionPlan | None = None,
    seed: int | None = None,
    mode: str = "full",
) -> RunLog:
    """Close the loop render -> denoise -> mission -> goal -> MPC -> plant -> MHE.

    ``plan`` overrides the scenario's compiled mission (used by ablations).
    """
    compiled = scenario.validate()
    plan = compiled if plan is None else plan
    perception = perception or scenario.perception
    planner = replace(planner or scenario.planner, dt=scenario.dt)
    estimator = estimator or EstimatorConfig()
    seed = scenario.seed if seed is None else seed
    render_rng, meas_rng = np.random.default_rng(seed).spawn(2)

    nominal = scenario.vehicle
    plant = nominal.with_wheelbase(nominal.wheelbase * scenario.plant_wheelbase_factor)
    dt = scenario.dt
    cam = _camera(scenario.intrinsics, scenario.mount)
    band = (max(0, math.ceil(cam.horizon + perception.band_offset)), scenario.intrinsics.height)
    landmarks = {lm.label: lm for lm in scenario.landmarks}
    meas_std = np.array([estimator.sigma_pos, estimator.sigma_pos, estimator.sigma_heading])

    state = scenario.start
    est = _Estimator(state, nominal, dt, estimator)
    est.update(np.array([state.x, state.y, state.heading]) + meas_std * meas_rng.standard_normal(3), None)
    commanded_speed = state.speed
    leg = 0
    braking_for_next = False
    warm = None
    inside_goal = scenario.goal.contains(state.x, state.y)
    laps_done = 0
    records = []
    outcome = None

    for step_i in range(scenario.step_limit + 1):
        fail = _check(state, scenario)
        now_inside = scenario.goal.contains(state.x, state.y)
        if now_inside and not inside_goal:
            laps_done += 1
        inside_goal = now_inside
        if fail is None and laps_done >= scenario.laps:
            fail = Outcome.SUCCESS
        if fail is None and step_i == scenario.step_limit:
            fail = Outcome.STEP_LIMIT
        if fail is not None:
            records.append(StepRecord(step_i, state, est.state, est.wheelbase, leg,
                                      plan.legs[leg].speed_limit, None, math.nan, False))
            outcome = fail
            break

        view = render_view(state, scenario, render_rng)
        mask = denoise(view, perception.kernels, perception.confidence_floor)
        new_leg = advance_mission(plan, leg, mask, state, landmarks, perception.min_pixels)
        triggered = ""
        if new_leg != leg:
            triggered = plan.legs[new_leg].trigger
            leg = new_leg
            braking_for_next = False
        limit = plan.legs[leg].speed_limit
        if leg + 1 < len(plan.legs):
            nxt = plan.legs[leg + 1]
            if nxt.speed_limit < limit and nxt.trigger in mask.labels and \
                    detect_landmark(mask, nxt.trigger, perception.min_pixels) is not None:
                braking_for_next = True
            if braking_for_next:
                limit = min(limit, nxt.speed_limit)

        estimate = est.state
        params = nominal.with_wheelbase(est.wheelbase)
        try:
            row, col = select_goal_pixel(mask, plan.legs[leg].preferred_terrain, band)
            goal = pixel_to_ground((row, col), scenario.intrinsics, scenario.mount)
        except (NoTraversableRegion, AboveHorizon):
            goal = None
        if goal is None:
            u = ControlInput(0.0, -nominal.max_accel)
            cost, converged, warm = math.nan, False, None
        else:
            prob = MpcProblem(estimate, goal, min(limit, nominal.max_speed), params)
            sol = solve(prob, planner, warm)
            u = sol.first_control()
            cost, converged = sol.cost, sol.converged
            warm = shift_warm_start(sol)
        # speed governor on the commanded-speed integrator (equals plant speed)
        u = u.clipped(nominal)
        a = min(u.accel, (limit - commanded_speed) / dt)
        a = max(a, -nominal.max_accel)
        u = ControlInput(u.steering, a)

        records.append(StepRecord(step_i, state, estimate, est.wheelbase, leg,
                                  plan.legs[leg].speed_limit, u, cost, converged, triggered))
        state = VehicleState(*rk4(state.x, state.y, state.heading, state.speed,
                                  u.steering, u.accel, dt, plant.wheelbase, plant.max_speed))
        # same saturation as the plant's speed update
        commanded_speed += dt * min(max(u.accel, -commanded_speed / dt), (plant.max_speed - commanded_speed) / dt)
        z = np.array([state.x, state.y, state.heading]) + meas_std * meas_rng.standard_normal(3)
        est.update(z, u)

    path, per_leg = _totals(records, len(plan.legs))
    return RunLog(tuple(records), outcome, path, len(records) - 1, per_leg, scenario.name, mode, seed)


@dataclass(frozen=True)
class EpisodeMetrics:
    success: bool
    max_speed_per_leg: tuple[float, ...]
    speed_violations: int
    path_length: float
    steps: int
    outcome: str


def evaluate(log: RunLog, scenario: Scenario | None = None) -> EpisodeMetrics:
    records = log.records
    if not records:
        return EpisodeMetrics(False, (), 0, 0.0, 0, log.outcome.value if log.outcome else "")
    n_legs = max(r.leg for r in records) + 1
    if scenario is not None:
        n_legs = max(n_legs, len(scenario.compile().legs))
    path, per_leg = _totals(records, n_legs)
    violations = sum(1 for r in records if r.true_state.speed > r.speed_limit + SPEED_TOLERANCE)
    return EpisodeMetrics(
        log.outcome == Outcome.SUCCESS, per_leg, violations, path, len(records) - 1, log.outcome.value
    )
