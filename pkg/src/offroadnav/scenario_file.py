"""Plain-text scenario files.

A scenario is a sequence of ``[section]`` blocks. Inside a section each entry
is either ``key = value`` on one line or ``key:`` followed by an indented
block of lines. Lines starting with ``;`` are comments; there are no
trailing comments, so values may contain ``;``. Example::

    [terrain]
    cell_size = 0.5
    ; origin is the south-west corner in metres
    origin = -5.0 -2.0
    legend:
      . = other
      r = road
      X = road [blocked]
    grid:
      ..........
      rrrrrXrrrr
      ..........

    [mission]
    use_llm = false
    instruction = Follow the road quickly.
    directive:
      ★ road: quickly

    [run]
    ; x_min y_min x_max y_max
    goal = 3.0 -1.0 5.0 1.0

The first grid line is the northern edge. Sections ``[terrain]``,
``[mission]`` and ``[run]`` are required, the rest fall back to defaults.
"""
from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from .errors import ScenarioInvalid
from .perception import BACKGROUND
from .planner import MpcConfig
from .projection import CameraIntrinsics, CameraMount
from .sim import EPISODE_PLANNER, HazardZone, Landmark, PerceptionConfig, Rect, Scenario, TerrainClass, TerrainGrid
from .vehicle import VehicleParams, VehicleState

SECTIONS = ("scenario", "terrain", "camera", "vehicle", "mission", "lexicon", "landmarks", "hazards", "run",
            "perception", "planner")
REQUIRED = ("terrain", "mission", "run")
BLOCKED_TAG = "[blocked]"
_LEGEND_CHARS = "abcdefghijklmnopqrstuvwxyz0123456789"


def _split_sections(text: str):
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip()
        stripped = line.strip()
        if not stripped or stripped.startswith(";"):
            continue
        if stripped.startswith("[") and stripped.endswith("]") and not line[0].isspace():
            current = stripped[1:-1].strip().lower()
            if current not in SECTIONS:
                raise ScenarioInvalid(f"line {lineno}: unknown section [{current}]")
            if current in sections:
                raise ScenarioInvalid(f"line {lineno}: section [{current}] appears twice")
            sections[current] = []
            continue
        if current is None:
            raise ScenarioInvalid(f"line {lineno}: content before the first section")
        sections[current].append((lineno, line))
    return sections


def _entries(lines) -> dict[str, str]:
    """``key = value`` and ``key:`` blocks; block values keep one item per line."""
    out: dict[str, str] = {}
    i = 0
    while i < len(lines):
        lineno, line = lines[i]
        if line[0].isspace():
            raise ScenarioInvalid(f"line {lineno}: unexpected indentation")
        if "=" in line:
            key, value = line.split("=", 1)
            key, value = key.strip(), value.strip()
            i += 1
        elif line.endswith(":"):
            key = line[:-1].strip()
            block = []
            i += 1
            while i < len(lines) and lines[i][1][0].isspace():
                block.append(lines[i][1].strip())
                i += 1
            value = "\n".join(block)
        else:
            raise ScenarioInvalid(f"line {lineno}: expected 'key = value' or 'key:'")
        if key in out:
            raise ScenarioInvalid(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _floats(text: str, n: int, what: str) -> tuple[float, ...]:
    try:
        values = tuple(float(t) for t in text.split())
    except ValueError:
        raise ScenarioInvalid(f"{what}: expected numbers, got {text!r}") from None
    if len(values) != n:
        raise ScenarioInvalid(f"{what}: expected {n} numbers, got {len(values)}")
    return values


def _bool(text: str, what: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ScenarioInvalid(f"{what}: expected true/false, got {text!r}")


def _convert(value: str, default, what: str):
    if isinstance(default, bool):
        return _bool(value, what)
    try:
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            return tuple(int(t) for t in value.split())
    except ValueError:
        raise ScenarioInvalid(f"{what}: cannot parse {value!r}") from None
    return value


def _fill(cls, entries: dict, base, section: str, skip=()):
    """Override dataclass fields of ``base`` from ``entries``; unknown keys are errors."""
    names = {f.name for f in dataclasses.fields(cls)} - set(skip)
    unknown = set(entries) - names
    if unknown:
        raise ScenarioInvalid(f"[{section}]: unknown keys {sorted(unknown)}")
    changes = {k: _convert(v, getattr(base, k), f"[{section}] {k}") for k, v in entries.items()}
    try:
        return dataclasses.replace(base, **changes)
    except (TypeError, ValueError) as exc:
        raise ScenarioInvalid(f"[{section}]: {exc}") from exc


def _parse_terrain(entries: dict) -> TerrainGrid:
    for key in ("cell_size", "legend", "grid"):
        if key not in entries:
            raise ScenarioInvalid(f"[terrain] needs {key!r}")
    extra = set(entries) - {"cell_size", "origin", "legend", "grid"}
    if extra:
        raise ScenarioInvalid(f"[terrain]: unknown keys {sorted(extra)}")
    chars: dict[str, int] = {}
    classes = []
    for line in entries["legend"].splitlines():
        if "=" not in line:
            raise ScenarioInvalid(f"legend line {line!r} must be 'c = label'")
        ch, label = line.split("=", 1)
        ch, label = ch.strip(), label.strip()
        if len(ch) != 1:
            raise ScenarioInvalid(f"legend key {ch!r} must be a single character")
        if ch in chars:
            raise ScenarioInvalid(f"legend character {ch!r} defined twice")
        blocked = label.endswith(BLOCKED_TAG)
        if blocked:
            label = label[: -len(BLOCKED_TAG)].strip()
        if not label:
            raise ScenarioInvalid(f"legend character {ch!r} has no label")
        chars[ch] = len(classes)
        classes.append(TerrainClass(label, blocked))
    rows = entries["grid"].splitlines()
    if not rows or len({len(r) for r in rows}) != 1:
        raise ScenarioInvalid("terrain grid rows must be non-empty and of equal length")
    missing = sorted(set("".join(rows)) - set(chars))
    if missing:
        raise ScenarioInvalid(f"grid characters not in the legend: {missing}")
    ids = np.array([[chars[c] for c in r] for r in rows], dtype=np.int16)
    origin = _floats(entries.get("origin", "0 0"), 2, "[terrain] origin")
    try:
        return TerrainGrid(float(entries["cell_size"]), ids, tuple(classes), origin)
    except ValueError as exc:
        raise ScenarioInvalid(f"[terrain]: {exc}") from exc


def _parse_landmarks(entries: dict) -> tuple[Landmark, ...]:
    out = []
    for label, value in entries.items():
        nums = value.split()
        if len(nums) not in (2, 3, 4):
            raise ScenarioInvalid(f"landmark {label!r}: expected 'x y [visual_radius [trigger_radius]]'")
        vals = _floats(value, len(nums), f"landmark {label!r}")
        try:
            out.append(Landmark(label.lower(), *vals))
        except ValueError as exc:
            raise ScenarioInvalid(f"landmark {label!r}: {exc}") from exc
    return tuple(out)


def _parse_hazards(entries: dict) -> tuple[HazardZone, ...]:
    out = []
    for name, value in entries.items():
        try:
            out.append(HazardZone(*_floats(value, 5, f"hazard {name!r}")))
        except ValueError as exc:
            raise ScenarioInvalid(f"hazard {name!r}: {exc}") from exc
    return tuple(out)


def parse_scenario(text: str) -> Scenario:
    """Build a Scenario from file text; every structural problem is ScenarioInvalid."""
    raw = _split_sections(text)
    for name in REQUIRED:
        if name not in raw:
            raise ScenarioInvalid(f"missing [{name}] section")
    sec = {name: _entries(lines) for name, lines in raw.items()}

    grid = _parse_terrain(sec["terrain"])

    from .worlds import DEFAULT_INTRINSICS, DEFAULT_MOUNT

    cam = sec.get("camera", {})
    intr_keys = {f.name for f in dataclasses.fields(CameraIntrinsics)}
    intr = _fill(CameraIntrinsics, {k: v for k, v in cam.items() if k in intr_keys}, DEFAULT_INTRINSICS, "camera")
    mount = _fill(CameraMount, {k: v for k, v in cam.items() if k not in intr_keys}, DEFAULT_MOUNT, "camera")
    vehicle = _fill(VehicleParams, sec.get("vehicle", {}), VehicleParams(), "vehicle")

    mission = dict(sec["mission"])
    if "directive" not in mission:
        raise ScenarioInvalid("[mission] needs a 'directive:' block (the offline directive)")
    directive = mission.pop("directive")
    directive = "".join(line + "\n" for line in directive.splitlines())
    instruction = mission.pop("instruction", "")
    use_llm = _bool(mission.pop("use_llm", "false"), "[mission] use_llm")
    if mission:
        raise ScenarioInvalid(f"[mission]: unknown keys {sorted(mission)}")

    lexicon = {}
    for token, value in sec.get("lexicon", {}).items():
        lexicon[token.lower()] = _floats(value, 1, f"lexicon {token!r}")[0]

    run = dict(sec["run"])
    if "goal" not in run:
        raise ScenarioInvalid("[run] needs 'goal = x_min y_min x_max y_max'")
    goal = Rect(*_floats(run.pop("goal"), 4, "[run] goal"))
    start = VehicleState(*_floats(run.pop("start", "0 0 0 0"), 4, "[run] start"))
    name = sec.get("scenario", {}).get("name", "scenario")
    extra = set(sec.get("scenario", {})) - {"name"}
    if extra:
        raise ScenarioInvalid(f"[scenario]: unknown keys {sorted(extra)}")

    base = Scenario(grid=grid, intrinsics=intr, mount=mount, start=start, goal=goal, mission=directive)
    run_fields = ("seed", "dt", "step_limit", "noise", "laps", "plant_wheelbase_factor")
    unknown = set(run) - set(run_fields)
    if unknown:
        raise ScenarioInvalid(f"[run]: unknown keys {sorted(unknown)}")
    changes = {k: _convert(v, getattr(base, k), f"[run] {k}") for k, v in run.items()}
    return dataclasses.replace(
        base,
        vehicle=vehicle,
        landmarks=_parse_landmarks(sec.get("landmarks", {})),
        hazards=_parse_hazards(sec.get("hazards", {})),
        instruction=instruction,
        use_llm=use_llm,
        lexicon=lexicon,
        perception=_fill(PerceptionConfig, sec.get("perception", {}), PerceptionConfig(), "perception"),
        planner=_fill(MpcConfig, sec.get("planner", {}), EPISODE_PLANNER, "planner"),
        name=name,
        **changes,
    )


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioInvalid(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(text)


def _num(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def _legend_chars(classes) -> list[str]:
    chars = []
    pool = [c for c in _LEGEND_CHARS]
    for i, cls in enumerate(classes):
        if i == 0 and cls.label == BACKGROUND and not cls.blocked:
            ch = "."
        else:
            first = cls.label[0].lower()
            ch = first.upper() if cls.blocked else first
            if ch in chars or not ch.isalnum() or not ch.isascii():
                ch = next(c.upper() if cls.blocked else c for c in pool
                          if (c.upper() if cls.blocked else c) not in chars)
        chars.append(ch)
    return chars


def _fields_block(obj, skip=()) -> list[str]:
    out = []
    for f in dataclasses.fields(obj):
        if f.name in skip:
            continue
        value = getattr(obj, f.name)
        if isinstance(value, tuple):
            out.append(f"{f.name} = {' '.join(_num(v) for v in value)}")
        elif isinstance(value, bool):
            out.append(f"{f.name} = {'true' if value else 'false'}")
        else:
            out.append(f"{f.name} = {_num(value)}")
    return out


def _block(key: str, lines) -> list[str]:
    return [f"{key}:"] + [f"  {line}" for line in lines]


def dump_scenario(s: Scenario) -> str:
    """Serialise so that ``parse_scenario(dump_scenario(s))`` reproduces ``s``."""
    if "\n" in s.instruction:
        raise ScenarioInvalid("instruction text must be a single line")
    chars = _legend_chars(s.grid.classes)
    legend = [f"{ch} = {c.label}" + (f" {BLOCKED_TAG}" if c.blocked else "") for ch, c in zip(chars, s.grid.classes)]
    table = np.array(chars)
    grid_lines = ["".join(row) for row in table[s.grid.class_ids]]
    out = [f"; scenario {s.name}", "", "[scenario]", f"name = {s.name}", "", "[terrain]",
           f"cell_size = {_num(float(s.grid.cell_size))}",
           f"origin = {_num(float(s.grid.origin[0]))} {_num(float(s.grid.origin[1]))}"]
    out += _block("legend", legend)
    out += _block("grid", grid_lines)
    out += ["", "[camera]"] + _fields_block(s.intrinsics) + _fields_block(s.mount)
    out += ["", "[vehicle]"] + _fields_block(s.vehicle)
    out += ["", "[mission]", f"use_llm = {'true' if s.use_llm else 'false'}", f"instruction = {s.instruction}"]
    out += _block("directive", s.mission.splitlines())
    if s.lexicon:
        out += ["", "[lexicon]"] + [f"{k} = {_num(float(v))}" for k, v in s.lexicon.items()]
    if s.landmarks:
        out += ["", "[landmarks]", "; label = x y visual_radius trigger_radius"]
        out += [f"{lm.label} = {_num(lm.x)} {_num(lm.y)} {_num(lm.visual_radius)} {_num(lm.trigger_radius)}"
                for lm in s.landmarks]
    if s.hazards:
        out += ["", "[hazards]", "; name = x_min y_min x_max y_max speed_threshold"]
        out += [f"zone{i + 1} = " + " ".join(_num(getattr(h, f.name)) for f in dataclasses.fields(h))
                for i, h in enumerate(s.hazards)]
    g, st = s.goal, s.start
    out += ["", "[run]",
            f"seed = {s.seed}", f"dt = {_num(s.dt)}", f"step_limit = {s.step_limit}", f"noise = {_num(s.noise)}",
            f"laps = {s.laps}", f"plant_wheelbase_factor = {_num(s.plant_wheelbase_factor)}",
            f"start = {_num(st.x)} {_num(st.y)} {_num(st.heading)} {_num(st.speed)}",
            f"goal = {_num(g.x_min)} {_num(g.y_min)} {_num(g.x_max)} {_num(g.y_max)}"]
    out += ["", "[perception]"] + _fields_block(s.perception)
    out += ["", "[planner]"] + _fields_block(s.planner)
    return "\n".join(out) + "\n"


def save_scenario(path, s: Scenario) -> None:
    Path(path).write_text(dump_scenario(s), encoding="utf-8")
