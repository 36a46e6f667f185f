"""Command-line entry point: ``offroadnav run | parse | seg-eval | ablate``.

Only ``parse --llm`` touches the network; everything else is deterministic.
Exit status is 0 when every requested run completed, whatever the mission
outcome; 1 for runtime failures; 2 for usage errors.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import llm
from .errors import LlmError, NavError, ScenarioInvalid, UsageError
from .harness import AblationSpec, Mode, coverage_csv, emit_reports, parse_seeds, run_ablation, seg_eval, summary_csv
from .instruction import build_prompt, compile_mission, parse_directive, render_directive
from .scenario_file import load_scenario
from .sim import run_episode


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="offroadnav", description="Instruction-constrained off-road navigation simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one episode of a scenario")
    run.add_argument("scenario", help="scenario file (.scn) or a bundled scenario name")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--out", type=Path, default=None, help="directory for the trajectory and summary CSVs")

    parse = sub.add_parser("parse", help="compile a directive file, or an instruction via the LLM")
    parse.add_argument("file", type=Path, help="directive file, instruction text file, or scenario file")
    parse.add_argument("--llm", action="store_true", help="send the instruction to the LLM endpoint first")
    parse.add_argument("--scenario", default=None, help="take vocabularies and the fallback directive from here")

    seg = sub.add_parser("seg-eval", help="dice-by-coverage report over SMAP mask pairs")
    seg.add_argument("truth_dir", type=Path)
    seg.add_argument("pred_dir", type=Path)
    seg.add_argument("--label", required=True)
    seg.add_argument("--out", type=Path, default=None, help="directory for coverage.csv")

    abl = sub.add_parser("ablate", help="run full / no-adverbs / no-terrains over a seed range")
    abl.add_argument("scenario")
    abl.add_argument("--modes", default="full,no-adverbs,no-terrains")
    abl.add_argument("--seeds", required=True, help="e.g. 1..20 or 1,4,9")
    abl.add_argument("--out", type=Path, default=None)
    return p


def cli_parse(argv) -> argparse.Namespace:
    """Parse arguments; malformed command lines raise UsageError."""
    ns = build_parser().parse_args(list(argv))
    if ns.command == "ablate":
        ns.modes = tuple(Mode.parse(m) for m in ns.modes.split(",") if m.strip())
        if not ns.modes:
            raise UsageError("no ablation modes given")
        ns.seeds = parse_seeds(ns.seeds)
    return ns


def resolve_scenario(ref: str):
    path = Path(ref)
    if path.exists():
        return load_scenario(path)
    from .worlds import SCENARIO_DIR

    bundled = SCENARIO_DIR / f"{ref}.scn"
    if bundled.exists():
        return load_scenario(bundled)
    raise ScenarioInvalid(f"no scenario file {ref!r}")


def _cmd_run(ns, out):
    scenario = resolve_scenario(ns.scenario)
    log = run_episode(scenario, seed=ns.seed)
    if ns.out is not None:
        emit_reports([log], ns.out)
    out.write(summary_csv([log]))


def _cmd_parse(ns, out, err):
    scenario = resolve_scenario(ns.scenario) if ns.scenario else None
    text = ns.file.read_text(encoding="utf-8")
    if ns.file.suffix == ".scn":
        scenario = load_scenario(ns.file)
        text = scenario.instruction if ns.llm else scenario.mission
    lexicon = scenario.adverb_lexicon() if scenario else None
    terrains = scenario.grid.labels if scenario else None
    landmarks = [lm.label for lm in scenario.landmarks] if scenario else None
    directive_text = text
    if ns.llm:
        if terrains is None:
            raise UsageError("parse --llm needs a scenario for the terrain vocabulary (--scenario)")
        prompt = build_prompt(text, terrains, lexicon)
        try:
            directive_text = llm.request_completion(prompt, llm.EndpointConfig.from_env())
        except LlmError as exc:
            if scenario is None:
                raise
            err.write(f"LLM request failed ({exc}); using the scenario's offline directive\n")
            directive_text = scenario.mission
    plan = compile_mission(parse_directive(directive_text), lexicon, terrains, landmarks)
    out.write(render_directive(plan, lexicon))
    for i, leg in enumerate(plan.legs):
        trigger = leg.trigger if leg.trigger is not None else "(start)"
        out.write(f"; leg {i}: terrain={leg.preferred_terrain} speed_limit={leg.speed_limit!r} trigger={trigger}\n")


def _cmd_seg_eval(ns, out):
    report = seg_eval(ns.truth_dir, ns.pred_dir, ns.label)
    text = coverage_csv([report])
    if ns.out is not None:
        ns.out.mkdir(parents=True, exist_ok=True)
        (ns.out / "coverage.csv").write_text(text, encoding="utf-8")
    out.write(text)


def _cmd_ablate(ns, out):
    scenario = resolve_scenario(ns.scenario)
    logs = run_ablation(scenario, [AblationSpec(m, ns.seeds) for m in ns.modes])
    if ns.out is not None:
        emit_reports(logs, ns.out)
    out.write(summary_csv(logs))


def main(argv=None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    try:
        ns = cli_parse(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        err.write(build_parser().format_usage())
        err.write(f"error: {exc}\n")
        return 2
    try:
        if ns.command == "run":
            _cmd_run(ns, out)
        elif ns.command == "parse":
            _cmd_parse(ns, out, err)
        elif ns.command == "seg-eval":
            _cmd_seg_eval(ns, out)
        else:
            _cmd_ablate(ns, out)
    except UsageError as exc:
        err.write(f"error: {exc}\n")
        return 2
    except (NavError, OSError) as exc:
        err.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
