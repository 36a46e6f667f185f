"""Ablation driver, report writers and corpus evaluation."""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import UsageError
from .instruction import MissionPlan
from .perception import CoverageBinReport, coverage_report
from .sim import RunLog, Scenario, evaluate, run_episode
from . import smap


class Mode(str, enum.Enum):
    FULL = "full"
    NO_ADVERBS = "no-adverbs"
    NO_TERRAINS = "no-terrains"

    @classmethod
    def parse(cls, text: str) -> "Mode":
        key = text.strip().lower().replace("_", "-")
        aliases = {"noadverbs": "no-adverbs", "noterrains": "no-terrains"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise UsageError(f"unknown ablation mode {text!r}") from None


@dataclass(frozen=True)
class AblationSpec:
    mode: Mode
    seeds: tuple[int, ...]

    def __post_init__(self):
        if not self.seeds:
            raise UsageError("ablation needs at least one seed")


def _merge_repeats(legs):
    # Removing a constraint can make neighbouring legs identical; the later leg
    # would change nothing when triggered, so it is folded into the earlier one.
    merged = [legs[0]]
    for leg in legs[1:]:
        prev = merged[-1]
        if (leg.preferred_terrain, leg.speed_limit) != (prev.preferred_terrain, prev.speed_limit):
            merged.append(leg)
    return tuple(merged)


def apply_ablation(plan: MissionPlan, mode, max_speed: float) -> MissionPlan:
    """Strip the speed constraints (no-adverbs) or the terrain switching (no-terrains)."""
    mode = Mode.parse(mode) if isinstance(mode, str) else mode
    if mode is Mode.FULL:
        return plan
    if mode is Mode.NO_ADVERBS:
        legs = [replace(leg, speed_limit=max_speed) for leg in plan.legs]
    else:
        first = plan.legs[0].preferred_terrain
        legs = [replace(leg, preferred_terrain=first) for leg in plan.legs]
    return replace(plan, legs=_merge_repeats(legs))


def run_ablation(scenario: Scenario, specs) -> list[RunLog]:
    """Run every (mode, seed) pair in order; logs come back in the same order."""
    base = scenario.validate()
    logs = []
    for spec in specs:
        plan = apply_ablation(base, spec.mode, scenario.vehicle.max_speed)
        for seed in spec.seeds:
            logs.append(run_episode(scenario, plan=plan, seed=seed, mode=spec.mode.value))
    return logs


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"1..3"`` -> (1, 2, 3); also accepts ``"4"`` and ``"1,5,9"``."""
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                lo, hi = part.split("..", 1)
                lo, hi = int(lo), int(hi)
                if hi < lo:
                    raise UsageError(f"empty seed range {part!r}")
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise UsageError(f"bad seed list {text!r}") from None
    if not out:
        raise UsageError("no seeds given")
    return tuple(out)


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return repr(float(x))


TRAJECTORY_HEADER = (
    "step", "x", "y", "heading", "speed",
    "est_x", "est_y", "est_heading", "est_speed", "wheelbase_est",
    "leg", "speed_limit", "steering", "accel", "mpc_cost", "mpc_converged", "landmark",
)
SUMMARY_HEADER = ("scenario", "mode", "seed", "outcome", "steps", "path_length", "speed_violations", "max_speed_per_leg")
COVERAGE_HEADER = ("label", "bin_lo", "bin_hi", "count", "dice_mean", "dice_variance")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def trajectory_csv(log: RunLog) -> str:
    rows = []
    for r in log.records:
        t, e = r.true_state, r.estimate
        steer = accel = math.nan
        if r.control is not None:
            steer, accel = r.control.steering, r.control.accel
        rows.append([
            r.step, _fmt(t.x), _fmt(t.y), _fmt(t.heading), _fmt(t.speed),
            _fmt(e.x), _fmt(e.y), _fmt(e.heading), _fmt(e.speed), _fmt(r.wheelbase_estimate),
            r.leg, _fmt(r.speed_limit), _fmt(steer), _fmt(accel), _fmt(r.cost), int(r.converged), r.landmark,
        ])
    return _csv_text(TRAJECTORY_HEADER, rows)


def summary_row(log: RunLog) -> list:
    m = evaluate(log)
    return [
        log.scenario, log.mode, log.seed, m.outcome, m.steps, _fmt(m.path_length), m.speed_violations,
        ";".join(_fmt(v) for v in log.max_speed_per_leg),
    ]


def summary_csv(logs) -> str:
    return _csv_text(SUMMARY_HEADER, [summary_row(log) for log in logs])


def coverage_csv(reports) -> str:
    rows = []
    for rep in reports:
        for lo, hi, count, mean, var in rep.rows():
            rows.append([rep.label, _fmt(lo), _fmt(hi), count, _fmt(mean), _fmt(var)])
    return _csv_text(COVERAGE_HEADER, rows)


def run_filename(log: RunLog) -> str:
    return f"{log.scenario}_{log.mode}_seed{log.seed}.csv"


def emit_reports(logs, out_dir, coverage: list[CoverageBinReport] | None = None) -> list[Path]:
    """Write one trajectory CSV per run, ``summary.csv`` and optionally ``coverage.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for log in logs:
        path = out / run_filename(log)
        path.write_text(trajectory_csv(log), encoding="utf-8")
        written.append(path)
    path = out / "summary.csv"
    path.write_text(summary_csv(logs), encoding="utf-8")
    written.append(path)
    if coverage is not None:
        path = out / "coverage.csv"
        path.write_text(coverage_csv(coverage), encoding="utf-8")
        written.append(path)
    return written


def seg_eval(truth_dir, pred_dir, label: str) -> CoverageBinReport:
    """Pair ``*.smap`` files by name across the two directories and bin dice by coverage."""
    truth_dir, pred_dir = Path(truth_dir), Path(pred_dir)
    names = sorted(p.name for p in truth_dir.glob("*.smap"))
    pairs = []
    for name in names:
        pred_path = pred_dir / name
        if not pred_path.exists():
            raise UsageError(f"no prediction for {name}")
        pairs.append((smap.load_mask(truth_dir / name), smap.load_mask(pred_path)))
    return coverage_report(pairs, label)
