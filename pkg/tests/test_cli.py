import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from offroadnav import smap
from offroadnav.cli import cli_parse, main
from offroadnav.errors import UsageError
from offroadnav.harness import Mode, SUMMARY_HEADER, TRAJECTORY_HEADER
from offroadnav.llm import ENV_URL
from offroadnav.perception import LabelMask
from offroadnav.worlds import SCENARIO_DIR, TWO_LANDMARK_DIRECTIVE

CORRIDOR = str(SCENARIO_DIR / "corridor.scn")


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


# argument parsing

def test_parse_run_with_seed():
    ns = cli_parse(["run", "demo.scn", "--seed", "7"])
    assert (ns.command, ns.scenario, ns.seed) == ("run", "demo.scn", 7)


def test_parse_ablate():
    ns = cli_parse(["ablate", "demo.scn", "--modes", "full", "--seeds", "1..3"])
    assert ns.modes == (Mode.FULL,) and ns.seeds == (1, 2, 3)


@pytest.mark.parametrize("argv", [
    ["run"],
    [],
    ["fly", "x"],
    ["run", "x.scn", "--turbo"],
    ["run", "x.scn", "--seed", "seven"],
    ["ablate", "x.scn", "--seeds", "3..1"],
    ["ablate", "x.scn", "--seeds", "1", "--modes", "sideways"],
    ["seg-eval", "a", "b"],
])
def test_usage_errors(argv):
    with pytest.raises(UsageError):
        cli_parse(argv)
    code, out, err = call(*argv)
    assert code == 2 and out == "" and "usage:" in err


# commands

def test_run_bundled_scenario(tmp_path):
    code, out, _ = call("run", CORRIDOR, "--seed", "7", "--out", str(tmp_path))
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == list(SUMMARY_HEADER)
    assert rows[1][:4] == ["corridor", "full", "7", "Success"]
    traj = list(csv.reader(io.StringIO((tmp_path / "corridor_full_seed7.csv").read_text())))
    assert traj[0] == list(TRAJECTORY_HEADER) and len(traj) == int(rows[1][4]) + 2
    assert (tmp_path / "summary.csv").read_text() == out


def test_run_by_bundled_name():
    assert call("run", "corridor")[0] == 0


def test_run_missing_file_is_runtime_error():
    code, out, err = call("run", "no/such/file.scn")
    assert code == 1 and "ScenarioInvalid" in err


def test_ablate_rows_in_order():
    code, out, _ = call("ablate", CORRIDOR, "--modes", "full,no-adverbs", "--seeds", "1..2")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))[1:]
    assert [(r[1], r[2]) for r in rows] == [("full", "1"), ("full", "2"), ("no-adverbs", "1"), ("no-adverbs", "2")]


def test_parse_directive_file(tmp_path):
    path = tmp_path / "d.txt"
    path.write_text(TWO_LANDMARK_DIRECTIVE, encoding="utf-8")
    code, out, _ = call("parse", str(path))
    assert code == 0
    assert out.startswith(TWO_LANDMARK_DIRECTIVE)
    assert "; leg 0: terrain=asphalt speed_limit=3.0 trigger=(start)\n" in out


def test_parse_bad_directive_is_runtime_error(tmp_path):
    path = tmp_path / "d.txt"
    path.write_text("★ asphalt: quickly\n★ asphalt: fast\n# tree\n", encoding="utf-8")
    code, _, err = call("parse", str(path))
    assert code == 1 and "RedundantLeg" in err


def test_parse_llm_falls_back_to_offline_directive(monkeypatch):
    monkeypatch.setenv(ENV_URL, "http://127.0.0.1:1")
    code, out, err = call("parse", str(SCENARIO_DIR / "two_landmark.scn"), "--llm")
    assert code == 0
    assert "offline directive" in err
    assert out.startswith(TWO_LANDMARK_DIRECTIVE)


def test_parse_llm_needs_vocabulary(tmp_path):
    path = tmp_path / "i.txt"
    path.write_text("drive quickly", encoding="utf-8")
    assert call("parse", str(path), "--llm")[0] == 2


def test_seg_eval(tmp_path):
    for sub in ("t", "p"):
        (tmp_path / sub).mkdir()
        smap.save(tmp_path / sub / "a.smap", LabelMask(("other", "road"), np.ones((4, 4), np.uint8)))
    code, out, _ = call("seg-eval", str(tmp_path / "t"), str(tmp_path / "p"), "--label", "road",
                        "--out", str(tmp_path / "o"))
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert len(rows) == 11 and rows[10][:4] == ["road", "0.9", "1.0", "1"]
    assert (tmp_path / "o" / "coverage.csv").read_text() == out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "offroadnav.cli", "run"], capture_output=True, text=True)
    assert proc.returncode == 2 and "usage:" in proc.stderr
