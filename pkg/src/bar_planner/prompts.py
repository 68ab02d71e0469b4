"""Prompt templates for the remote backends and parsers for their replies.

Templates live as text assets under ``data/prompts``. Each prompt is a
system text plus a user text made of fenced ``========`` blocks: zero or
more worked exemplars followed by the query block.
"""

from __future__ import annotations

import functools
import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

from .domain import (
    DecompositionResult,
    Goal,
    RecipeDb,
    Step,
    StepRating,
    goal_phrase,
    parse_goal,
    parse_step,
    render_step,
    sub_goal_text,
)
from .errors import MalformedGoal, MalformedStep, RemoteParseError

PROMPT_VERSION = 1
FENCE = "========"


@dataclass(frozen=True)
class Prompt:
    system: str
    user: str

    @property
    def text(self) -> str:
        return f"System:\n{self.system}\n\nUser:\n{self.user}\n\nAssistant:\n"

    def messages(self) -> list[dict]:
        return [
            {"role": "system", "content": self.system},
            {"role": "user", "content": self.user},
        ]


@functools.lru_cache(maxsize=None)
def asset(name: str) -> str:
    """Template asset text with its single trailing newline removed."""
    raw = resources.files("bar_planner").joinpath("data", "prompts", name).read_text(encoding="utf-8")
    return raw[:-1] if raw.endswith("\n") else raw


@dataclass(frozen=True)
class Exemplar:
    goal: str
    thought: str
    step: str
    sub_goals: tuple[str, ...]


def default_exemplars() -> list[Exemplar]:
    doc = json.loads(asset("decompose.exemplars.json"))
    return [Exemplar(e["goal"], e["thought"], e["step"], tuple(e["sub_goals"])) for e in doc["exemplars"]]


def exemplar_from_result(goal: Goal, result: DecompositionResult, thought: str = "") -> Exemplar:
    return Exemplar(
        goal_phrase(goal),
        result.thought or thought,
        render_step(result.step),
        tuple(sub_goal_text(g) for g in result.sub_goals),
    )


def _numbered(lines: Sequence[str], start: int = 1) -> str:
    return "\n".join(f"{i}. {line}" for i, line in enumerate(lines, start=start))


def _fill(template: str, **values: str) -> str:
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", value)
    return out


def _render_exemplar(ex: Exemplar) -> str:
    block = _fill(asset("decompose.block.txt"), goal=ex.goal, thought=ex.thought,
                  step=ex.step, sub_goals=_numbered(ex.sub_goals))
    if not ex.sub_goals:
        block = block.replace("Decomposed Sub Goals:\n\n", "Decomposed Sub Goals:\n")
    return block


def _goal_text(goal: Goal | str) -> str:
    return goal if isinstance(goal, str) else goal_phrase(goal)


def format_decompose_prompt(goal: Goal | str, exemplars: Sequence[Exemplar] | None = None) -> Prompt:
    """Decomposition prompt; ``exemplars`` defaults to the bundled few-shot set."""
    if exemplars is None:
        exemplars = default_exemplars()
    blocks = [_render_exemplar(ex) for ex in exemplars]
    blocks.append(_fill(asset("decompose.query.txt"), **{"new goal": _goal_text(goal)}))
    return Prompt(asset("decompose.system.txt"), "\n\n".join(blocks))


def format_rating_prompt(goal: Goal | str, plan: Sequence[Step]) -> Prompt:
    query = _fill(asset("rating.query.txt"), **{
        "goal of new task": _goal_text(goal),
        "generated initial plan": _numbered([render_step(s) for s in plan]),
    })
    return Prompt(asset("rating.system.txt"), asset("rating.exemplar.txt") + "\n\n" + query)


def format_partial_plan_prompt(goal: Goal | str, start: Step, end: Step) -> Prompt:
    query = _fill(asset("partial.query.txt"), **{
        "goal of new task": _goal_text(goal),
        "given start anchor step": render_step(start),
        "given end anchor step": render_step(end),
    })
    return Prompt(asset("partial.system.txt"), asset("partial.exemplar.txt") + "\n\n" + query)


def format_integrate_prompt(goal: Goal | str, initial: Sequence[Step], partial: Sequence[Step],
                            partial_start: int = 1) -> Prompt:
    """Integration prompt; the partial plan is numbered from ``partial_start``
    so it lines up with the initial plan's indices."""
    query = _fill(asset("integrate.query.txt"), **{
        "goal of new task": _goal_text(goal),
        "generated initial plan": _numbered([render_step(s) for s in initial]),
        "complementary partial plan": _numbered([render_step(s) for s in partial], partial_start),
    })
    return Prompt(asset("integrate.system.txt"), asset("integrate.exemplar.txt") + "\n\n" + query)


# --------------------------------------------------------------------------- parsing

_NUMBERED = re.compile(r"^\s*\d+\s*[.)]\s*(.+?)\s*$")


def _section(text: str, header: str) -> list[str] | None:
    """Lines following ``header`` up to the next fence, or None if absent."""
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if line.strip().lower().startswith(header.lower()):
            rest = line.strip()[len(header):].strip()
            body = [rest] if rest else []
            for nxt in lines[i + 1:]:
                if nxt.strip().startswith(FENCE):
                    break
                body.append(nxt)
            return body
    return None


def _thought(text: str, stop: str) -> str | None:
    m = re.search(r"Thought:\s*(.*?)\s*" + re.escape(stop), text, re.DOTALL)
    return m.group(1).strip() if m else None


def parse_decompose_response(text: str, db: RecipeDb | None = None) -> DecompositionResult:
    step_lines = _section(text, "Decomposed Step:")
    if step_lines is None:
        raise RemoteParseError(text, "missing 'Decomposed Step:'")
    goal_lines = _section(text, "Decomposed Sub Goals:")
    if goal_lines is None:
        raise RemoteParseError(text, "missing 'Decomposed Sub Goals:'")
    candidates = [line for line in step_lines if line.strip()]
    if not candidates:
        raise RemoteParseError(text, "empty decomposed step")
    try:
        step = parse_step(candidates[0], db)
    except MalformedStep as exc:
        raise RemoteParseError(text, str(exc)) from None
    sub_goals = []
    for line in goal_lines:
        m = _NUMBERED.match(line)
        if not m:
            if sub_goals and line.strip():
                break
            continue
        try:
            sub_goals.append(parse_goal(m.group(1), db))
        except MalformedGoal as exc:
            raise RemoteParseError(text, str(exc)) from None
    return DecompositionResult(step, tuple(sub_goals), _thought(text, "Decomposed Step:"))


_RATING = re.compile(r"^\s*(\d+)\s*\.\s*(.+?)\s+[-–—]\s*(\d+)\s*$")


def parse_rating_response(text: str, db: RecipeDb | None = None) -> list[StepRating]:
    """Parse ``N. <step> - <score>`` lines (after ``Rating:`` when present)."""
    body = _section(text, "Rating:")
    lines = body if body is not None else text.splitlines()
    ratings = []
    for line in lines:
        m = _RATING.match(line)
        if not m:
            continue
        try:
            step = parse_step(m.group(2), db)
            ratings.append(StepRating(int(m.group(1)), int(m.group(3)), step))
        except (MalformedStep, ValueError) as exc:
            raise RemoteParseError(text, str(exc)) from None
    if not ratings:
        raise RemoteParseError(text, "no rating lines")
    return ratings


def _parse_step_block(text: str, header: str, db: RecipeDb | None) -> list[Step]:
    body = _section(text, header)
    if body is None:
        raise RemoteParseError(text, f"missing {header!r}")
    steps = []
    for line in body:
        if not line.strip():
            if steps:
                break
            continue
        try:
            steps.append(parse_step(line, db))
        except MalformedStep as exc:
            raise RemoteParseError(text, str(exc)) from None
    if not steps:
        raise RemoteParseError(text, f"no steps after {header!r}")
    return steps


def parse_partial_plan_response(text: str, db: RecipeDb | None = None) -> list[Step]:
    return _parse_step_block(text, "Partial Plan:", db)


def parse_corrected_plan_response(text: str, db: RecipeDb | None = None) -> list[Step]:
    return _parse_step_block(text, "Corrected Plan:", db)
