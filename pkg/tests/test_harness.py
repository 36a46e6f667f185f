import csv
import io
import math
from dataclasses import replace

import numpy as np
import pytest

from offroadnav import smap
from offroadnav.errors import UsageError
from offroadnav.harness import (
    COVERAGE_HEADER,
    SUMMARY_HEADER,
    TRAJECTORY_HEADER,
    AblationSpec,
    Mode,
    apply_ablation,
    emit_reports,
    parse_seeds,
    run_ablation,
    seg_eval,
    trajectory_csv,
)
from offroadnav.instruction import MissionLeg, MissionPlan
from offroadnav.perception import LabelMask
from offroadnav.sim import Outcome, RunLog, StepRecord
from offroadnav.vehicle import ControlInput, VehicleState
from offroadnav.worlds import corridor, two_landmark

PLAN = MissionPlan(
    (MissionLeg("asphalt", 3.0), MissionLeg("asphalt", 1.5, "parked car"),
     MissionLeg("sandy road", 1.5, "animal sculpture")),
    frozenset({"asphalt", "sandy road"}), frozenset({"parked car", "animal sculpture"}),
)


# Mode and AblationSpec

@pytest.mark.parametrize("text, mode", [
    ("full", Mode.FULL), ("FULL", Mode.FULL), ("no-adverbs", Mode.NO_ADVERBS),
    ("no_adverbs", Mode.NO_ADVERBS), ("noadverbs", Mode.NO_ADVERBS), (" no-terrains ", Mode.NO_TERRAINS),
])
def test_mode_parse(text, mode):
    assert Mode.parse(text) is mode


def test_mode_parse_rejects_unknown():
    with pytest.raises(UsageError):
        Mode.parse("no-landmarks")


def test_spec_needs_seeds():
    with pytest.raises(UsageError):
        AblationSpec(Mode.FULL, ())


# apply_ablation

def test_full_is_identity():
    assert apply_ablation(PLAN, Mode.FULL, 3.5) is PLAN


def test_no_adverbs_lifts_limits_and_merges():
    plan = apply_ablation(PLAN, "no-adverbs", 3.5)
    # the second leg becomes identical to the first and is folded into it
    assert plan.legs == (MissionLeg("asphalt", 3.5), MissionLeg("sandy road", 3.5, "animal sculpture"))
    assert plan.terrain_vocabulary == PLAN.terrain_vocabulary


def test_no_terrains_keeps_first_terrain():
    plan = apply_ablation(PLAN, Mode.NO_TERRAINS, 3.5)
    assert plan.legs == (MissionLeg("asphalt", 3.0), MissionLeg("asphalt", 1.5, "parked car"))


# parse_seeds

@pytest.mark.parametrize("text, seeds", [
    ("1..3", (1, 2, 3)), ("4", (4,)), ("1,5,9", (1, 5, 9)), ("1..2,7", (1, 2, 7)), ("0..0", (0,)),
])
def test_parse_seeds(text, seeds):
    assert parse_seeds(text) == seeds


@pytest.mark.parametrize("text", ["", "3..1", "a..b", "1..", "x"])
def test_parse_seeds_rejects(text):
    with pytest.raises(UsageError):
        parse_seeds(text)


# reports

def _log(seed, outcome=Outcome.SUCCESS):
    recs = (
        StepRecord(0, VehicleState(0, 0, 0, 0), VehicleState(0, 0, 0, 0), 0.55, 0, 3.0, ControlInput(0.1, 1.0), 2.5, True),
        StepRecord(1, VehicleState(0.3, 0.4, 0.1, 1.0), VehicleState(0.3, 0.4, 0.1, 1.0), 0.5, 0, 3.0, None,
                   math.nan, False, "parked car"),
    )
    return RunLog(recs, outcome, 0.5, 1, (1.0,), "demo", "full", seed)


def _read(path):
    return list(csv.reader(io.StringIO(path.read_text(encoding="utf-8"))))


def test_emit_no_logs_writes_header_only(tmp_path):
    written = emit_reports([], tmp_path)
    assert [p.name for p in written] == ["summary.csv"]
    assert _read(tmp_path / "summary.csv") == [list(SUMMARY_HEADER)]


def test_emit_two_logs(tmp_path):
    logs = [_log(2), _log(1, Outcome.BLOCKED)]
    written = emit_reports(logs, tmp_path)
    assert [p.name for p in written] == ["demo_full_seed2.csv", "demo_full_seed1.csv", "summary.csv"]
    rows = _read(tmp_path / "summary.csv")
    assert rows[0] == list(SUMMARY_HEADER)
    assert [r[2] for r in rows[1:]] == ["2", "1"]
    assert rows[1][3] == Outcome.SUCCESS.value and rows[2][3] == Outcome.BLOCKED.value
    assert rows[1][4:] == ["1", "0.5", "0", "1.0"]
    traj = _read(tmp_path / "demo_full_seed2.csv")
    assert traj[0] == list(TRAJECTORY_HEADER)
    assert traj[1][12:] == ["0.1", "1.0", "2.5", "1", ""]
    assert traj[2][12:] == ["nan", "nan", "nan", "0", "parked car"]


def test_emit_is_byte_stable(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    emit_reports([_log(3)], a)
    emit_reports([_log(3)], b)
    for name in ("demo_full_seed3.csv", "summary.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_trajectory_columns_match_header():
    lines = trajectory_csv(_log(0)).splitlines()
    assert all(len(next(csv.reader([line]))) == len(TRAJECTORY_HEADER) for line in lines)


def test_run_ablation_order_and_modes():
    sc = replace(corridor(), step_limit=5)
    logs = run_ablation(sc, [AblationSpec(Mode.NO_ADVERBS, (2, 1)), AblationSpec(Mode.FULL, (1,))])
    assert [(log.mode, log.seed) for log in logs] == [("no-adverbs", 2), ("no-adverbs", 1), ("full", 1)]


def test_two_landmark_ablation_plans():
    base = two_landmark().validate()
    assert [leg.speed_limit for leg in apply_ablation(base, Mode.NO_ADVERBS, 3.5).legs] == [3.5, 3.5]
    assert {leg.preferred_terrain for leg in apply_ablation(base, Mode.NO_TERRAINS, 3.5).legs} == {"asphalt"}


# seg_eval

def test_seg_eval_pairs_by_name(tmp_path):
    truth_dir, pred_dir = tmp_path / "t", tmp_path / "p"
    truth_dir.mkdir()
    pred_dir.mkdir()
    labels = ("other", "road")
    ids = np.zeros((10, 10), dtype=np.uint8)
    ids[:5] = 1  # coverage 0.5
    pred = ids.copy()
    pred[0] = 0  # 40 of 50 recovered: dice = 80 / 90
    smap.save(truth_dir / "a.smap", LabelMask(labels, ids))
    smap.save(pred_dir / "a.smap", LabelMask(labels, pred))
    full = np.ones((10, 10), dtype=np.uint8)
    smap.save(truth_dir / "b.smap", LabelMask(labels, full))
    smap.save(pred_dir / "b.smap", LabelMask(labels, full))
    rep = seg_eval(truth_dir, pred_dir, "road")
    assert rep.counts[5] == 1 and rep.counts[9] == 1 and sum(rep.counts) == 2
    assert rep.dice_mean[5] == pytest.approx(80 / 90, abs=1e-15)
    assert rep.dice_mean[9] == 1.0 and rep.dice_variance[9] == 0.0
    assert math.isnan(rep.dice_mean[0])


def test_seg_eval_missing_prediction(tmp_path):
    (tmp_path / "t").mkdir()
    (tmp_path / "p").mkdir()
    smap.save(tmp_path / "t" / "a.smap", LabelMask(("other",), np.zeros((2, 2), np.uint8)))
    with pytest.raises(UsageError):
        seg_eval(tmp_path / "t", tmp_path / "p", "other")


def test_coverage_header():
    assert COVERAGE_HEADER == ("label", "bin_lo", "bin_hi", "count", "dice_mean", "dice_variance")
