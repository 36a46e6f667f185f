"""Instruction handling: prompt construction, directive parsing, mission compilation.

The LLM is asked to answer in a two-marker line grammar::

    ★ <terrain>: <adverb>
    # <landmark>

Terrain lines are ordered by travel; landmark ``i`` switches the mission from
terrain line ``i`` to terrain line ``i + 1``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import (
    EmptyInstruction,
    MalformedTerrainLine,
    NoTerrainLines,
    RedundantLeg,
    TriggerCountMismatch,
    UnknownAdverb,
    UnknownLandmark,
    UnknownTerrain,
)

TERRAIN_MARK = "★"
LANDMARK_MARK = "#"

DEFAULT_ADVERBS = {
    "quickly": 3.0,
    "fast": 3.0,
    "slowly": 1.5,
    "carefully": 1.5,
    "very slowly": 0.75,
}

_NUMERIC = re.compile(r"^([0-9]+(?:\.[0-9]*)?|\.[0-9]+)\s*(?:m/s)?$")


class AdverbLexicon:
    """Adverb -> speed limit (m/s). Lookups are exact on the lowercased token."""

    def __init__(self, entries: Mapping[str, float] | None = None):
        entries = DEFAULT_ADVERBS if entries is None else entries
        table: dict[str, float] = {}
        for token, speed in entries.items():
            key = token.strip().lower()
            if not key:
                raise ValueError("empty adverb token")
            if key in table:
                raise ValueError(f"duplicate adverb {key!r}")
            speed = float(speed)
            if not speed > 0:
                raise ValueError(f"speed for {key!r} must be positive, got {speed}")
            table[key] = speed
        self._entries = table

    @property
    def entries(self) -> dict[str, float]:
        return dict(self._entries)

    def with_overrides(self, overrides: Mapping[str, float]) -> "AdverbLexicon":
        merged = dict(self._entries)
        merged.update({k.strip().lower(): v for k, v in overrides.items()})
        return AdverbLexicon(merged)

    def adverb_for(self, speed: float) -> str | None:
        for token, value in self._entries.items():
            if value == speed:
                return token
        return None

    def __contains__(self, token):
        return token in self._entries

    def __getitem__(self, token):
        return self._entries[token]

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def __eq__(self, other):
        return isinstance(other, AdverbLexicon) and self._entries == other._entries

    def __repr__(self):
        return f"AdverbLexicon({self._entries!r})"


@dataclass(frozen=True)
class Directive:
    terrain_speed_pairs: tuple[tuple[str, str], ...]
    landmarks: tuple[str, ...] = ()


@dataclass(frozen=True)
class MissionLeg:
    preferred_terrain: str
    speed_limit: float
    trigger: str | None = None  # None means start of mission

    @property
    def starts_mission(self) -> bool:
        return self.trigger is None


@dataclass(frozen=True)
class MissionPlan:
    legs: tuple[MissionLeg, ...]
    terrain_vocabulary: frozenset[str] = field(default_factory=frozenset)
    landmark_vocabulary: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.legs:
            raise ValueError("mission needs at least one leg")
        if not self.legs[0].starts_mission:
            raise ValueError("first leg must start the mission")
        for prev, leg in zip(self.legs, self.legs[1:]):
            if leg.trigger not in self.landmark_vocabulary:
                raise ValueError(f"trigger {leg.trigger!r} not in landmark vocabulary")
            if (prev.preferred_terrain, prev.speed_limit) == (leg.preferred_terrain, leg.speed_limit):
                raise RedundantLeg(f"legs repeat ({leg.preferred_terrain}, {leg.speed_limit})")
        for leg in self.legs:
            if not leg.speed_limit > 0:
                raise ValueError("speed limits must be positive")

    @property
    def terrains(self) -> list[str]:
        return [leg.preferred_terrain for leg in self.legs]


DEFAULT_EXAMPLE = (
    "Leave the garage quickly on the gravel path. When you see the red barn, "
    "slow down and keep to the grass.",
    [("gravel", "quickly"), ("grass", "slowly")],
    ["red barn"],
)

PREAMBLE = (
    "You convert navigation instructions for an off-road robot into a compact plan.\n"
    "Extract, in the order they apply, the preferred terrain types and the adverb that\n"
    "describes how fast to drive on each, and list the landmarks at which the robot\n"
    "switches from one terrain or speed to the next. Use only the terrain types and\n"
    "adverbs listed below. Reply with the plan lines only."
)


def _format_example(instruction, pairs, landmarks) -> str:
    lines = ["### Example", f'Instruction: "{instruction}"', "Output:"]
    lines += [f"{TERRAIN_MARK} {t}: {a}" for t, a in pairs]
    lines += [f"{LANDMARK_MARK} {lm}" for lm in landmarks]
    return "\n".join(lines)


def build_prompt(
    instruction_text: str,
    terrain_vocabulary: Iterable[str],
    lexicon: AdverbLexicon | None = None,
    examples: list | None = None,
) -> str:
    """Assemble the LLM prompt; the instruction is quoted in the final section."""
    if not instruction_text or not instruction_text.strip():
        raise EmptyInstruction("instruction text is empty")
    lexicon = AdverbLexicon() if lexicon is None else lexicon
    examples = [DEFAULT_EXAMPLE] if examples is None else examples
    sections = [
        PREAMBLE,
        "Terrain types: " + ", ".join(sorted(terrain_vocabulary)),
        "Adverbs: " + ", ".join(lexicon),
        "\n".join([
            "Output format:",
            f"{TERRAIN_MARK} <terrain>: <adverb>   (one line per terrain, in travel order)",
            f"{LANDMARK_MARK} <landmark>            (one line per landmark, in the order reached)",
        ]),
    ]
    sections += [_format_example(*ex) for ex in examples]
    sections.append("\n".join(["### Task", f'Instruction: "{instruction_text}"', "Output:"]))
    return "\n\n".join(sections)


def parse_directive(llm_output: str) -> Directive:
    pairs = []
    landmarks = []
    for raw in llm_output.splitlines():
        line = raw.strip()
        if line.startswith(TERRAIN_MARK):
            body = line[len(TERRAIN_MARK):]
            if body.count(":") != 1:
                raise MalformedTerrainLine(raw)
            terrain, adverb = (part.strip().lower() for part in body.split(":"))
            if not terrain or not adverb:
                raise MalformedTerrainLine(raw)
            pairs.append((terrain, adverb))
        elif line.startswith(LANDMARK_MARK):
            label = line[len(LANDMARK_MARK):].strip().lower()
            if label:
                landmarks.append(label)
    if not pairs:
        raise NoTerrainLines("no terrain lines in LLM output")
    return Directive(tuple(pairs), tuple(landmarks))


def resolve_adverb(adverb: str, lexicon: AdverbLexicon | None = None) -> float:
    """Look up an adverb's speed limit.

    Bare numeric tokens (``"2.5"`` or ``"2.5 m/s"``) map to themselves, so an LLM
    that answers with a number instead of an adverb still resolves.
    """
    lexicon = AdverbLexicon() if lexicon is None else lexicon
    token = adverb.strip().lower()
    if token in lexicon:
        return lexicon[token]
    m = _NUMERIC.match(token)
    if m and float(m.group(1)) > 0:
        return float(m.group(1))
    raise UnknownAdverb(adverb)


def compile_mission(
    directive: Directive,
    lexicon: AdverbLexicon | None = None,
    terrain_vocabulary: Iterable[str] | None = None,
    landmark_vocabulary: Iterable[str] | None = None,
) -> MissionPlan:
    pairs = directive.terrain_speed_pairs
    if len(directive.landmarks) != len(pairs) - 1:
        raise TriggerCountMismatch(
            f"{len(pairs)} terrain lines need {len(pairs) - 1} landmarks, got {len(directive.landmarks)}"
        )
    terrains = frozenset(terrain_vocabulary) if terrain_vocabulary is not None else frozenset(t for t, _ in pairs)
    marks = frozenset(landmark_vocabulary) if landmark_vocabulary is not None else frozenset(directive.landmarks)
    legs = []
    for i, (terrain, adverb) in enumerate(pairs):
        if terrain not in terrains:
            raise UnknownTerrain(terrain)
        trigger = None if i == 0 else directive.landmarks[i - 1]
        if trigger is not None and trigger not in marks:
            raise UnknownLandmark(trigger)
        legs.append(MissionLeg(terrain, resolve_adverb(adverb, lexicon), trigger))
    return MissionPlan(tuple(legs), terrains, marks)


def render_directive(plan: MissionPlan, lexicon: AdverbLexicon | None = None) -> str:
    """Format a plan back into directive text (inverse of parse + compile)."""
    lexicon = AdverbLexicon() if lexicon is None else lexicon
    lines = []
    for leg in plan.legs:
        adverb = lexicon.adverb_for(leg.speed_limit) or repr(leg.speed_limit)
        lines.append(f"{TERRAIN_MARK} {leg.preferred_terrain}: {adverb}")
    lines += [f"{LANDMARK_MARK} {leg.trigger}" for leg in plan.legs[1:]]
    return "\n".join(lines) + "\n"
