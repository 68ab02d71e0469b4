"""Items, recipes, goals, steps and plans, plus their text grammar.

Step text follows the numbered-line style used throughout the planner's prompts::

    1. Mine 3 log with barehand
    2. Craft 9 planks
    3. Dig down with wooden_pickaxe

``barehand`` is not an item: a Mine step without a tool renders as
``with barehand`` and parses back to ``tool=None``.
"""

from __future__ import annotations

import functools
import graphlib
import io
import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import IO, Iterable, Sequence, Union

from .errors import (
    DuplicateRecipe,
    MalformedGoal,
    MalformedStep,
    RecipeCycle,
    RecipeDbError,
    UnknownItem,
)

ITEM_RE = re.compile(r"^[a-z0-9_]+$")
BAREHAND = "barehand"


def is_item_id(name: str) -> bool:
    return bool(name) and ITEM_RE.match(name) is not None


class StepVerb(str, Enum):
    MINE = "Mine"
    CRAFT = "Craft"
    SMELT = "Smelt"
    EQUIP = "Equip"
    DIG_DOWN = "Dig down"


PRODUCING_VERBS = (StepVerb.MINE, StepVerb.CRAFT, StepVerb.SMELT)


@dataclass(frozen=True)
class Step:
    verb: StepVerb
    item: str | None = None
    qty: int | None = None
    tool: str | None = None

    def __post_init__(self) -> None:
        if self.verb is StepVerb.DIG_DOWN:
            if self.item is not None or self.qty is not None:
                raise ValueError("Dig down carries no item or quantity")
            if self.tool is None:
                raise ValueError("Dig down requires a tool")
        else:
            if self.item is None or not is_item_id(self.item):
                raise ValueError(f"invalid item {self.item!r}")
            if self.qty is None or self.qty < 1:
                raise ValueError(f"quantity must be >= 1, got {self.qty!r}")
            if self.tool is not None and self.verb is not StepVerb.MINE:
                raise ValueError(f"{self.verb.value} steps never carry a tool")
        if self.tool is not None and not is_item_id(self.tool):
            raise ValueError(f"invalid tool {self.tool!r}")

    @classmethod
    def mine(cls, item: str, qty: int, tool: str | None = None) -> Step:
        return cls(StepVerb.MINE, item, qty, tool)

    @classmethod
    def craft(cls, item: str, qty: int) -> Step:
        return cls(StepVerb.CRAFT, item, qty)

    @classmethod
    def smelt(cls, item: str, qty: int) -> Step:
        return cls(StepVerb.SMELT, item, qty)

    @classmethod
    def equip(cls, item: str, qty: int = 1) -> Step:
        return cls(StepVerb.EQUIP, item, qty)

    @classmethod
    def dig_down(cls, tool: str) -> Step:
        return cls(StepVerb.DIG_DOWN, tool=tool)

    @property
    def key(self) -> tuple[StepVerb, str | None, str | None]:
        """Identity used by fusion and anchor matching (quantity excluded)."""
        return (self.verb, self.item, self.tool)

    def with_qty(self, qty: int) -> Step:
        if self.verb is StepVerb.DIG_DOWN:
            return self
        return replace(self, qty=qty)

    def __str__(self) -> str:
        return render_step(self)


Plan = list  # list[Step]; kept as a plain list, 1-based only when rendered


_NUMBER_PREFIX = re.compile(r"^\s*\d+\s*\.\s*")
_DIG_RE = re.compile(r"^dig\s+down\s+with\s+(\S+)$", re.IGNORECASE)
_STEP_RE = re.compile(r"^(\w+)\s+(-?\d+)\s+(\S+)(?:\s+with\s+(\S+))?$", re.IGNORECASE)
_VERBS = {v.value.lower(): v for v in StepVerb if v is not StepVerb.DIG_DOWN}


def _clean_line(text: str) -> str:
    line = _NUMBER_PREFIX.sub("", text.strip(), count=1).strip()
    return line.rstrip(".").strip()


def parse_step(text: str, db: RecipeDb | None = None) -> Step:
    """Parse one step line, optionally prefixed ``N.``.

    When ``db`` is given every referenced item must be registered in it.
    """
    if "\n" in text.strip():
        raise MalformedStep(text, "expected a single line")
    line = _clean_line(text)
    m = _DIG_RE.match(line)
    if m:
        tool = m.group(1)
        if tool.lower() == BAREHAND:
            raise MalformedStep(text, "dig down requires a tool")
        step_args: dict = {"verb": StepVerb.DIG_DOWN, "tool": tool}
    else:
        m = _STEP_RE.match(line)
        if not m:
            raise MalformedStep(text, "does not match the step grammar")
        verb = _VERBS.get(m.group(1).lower())
        if verb is None:
            raise MalformedStep(text, f"unknown verb {m.group(1)!r}")
        qty = int(m.group(2))
        if qty < 1:
            raise MalformedStep(text, "quantity must be positive")
        tool = m.group(4)
        if tool is not None and tool.lower() == BAREHAND:
            tool = None
        if tool is not None and verb is not StepVerb.MINE:
            raise MalformedStep(text, f"{verb.value} steps never carry a tool")
        step_args = {"verb": verb, "item": m.group(3), "qty": qty, "tool": tool}
    try:
        step = Step(**step_args)
    except ValueError as exc:
        raise MalformedStep(text, str(exc)) from None
    if db is not None:
        for name in (step.item, step.tool):
            if name is not None and not db.has_item(name):
                raise MalformedStep(text, f"unregistered item {name!r}")
    return step


def render_step(step: Step) -> str:
    if step.verb is StepVerb.DIG_DOWN:
        return f"Dig down with {step.tool}"
    text = f"{step.verb.value} {step.qty} {step.item}"
    if step.verb is StepVerb.MINE:
        text += f" with {step.tool or BAREHAND}"
    return text


def render_plan(plan: Sequence[Step]) -> str:
    """Numbered, newline-separated plan text (no trailing newline)."""
    return "\n".join(f"{i}. {render_step(s)}" for i, s in enumerate(plan, start=1))


def parse_plan(text: str, db: RecipeDb | None = None) -> list[Step]:
    return [parse_step(line, db) for line in text.splitlines() if line.strip()]


class GoalKind(str, Enum):
    OBTAIN_ITEM = "obtain_item"
    REACH_BELOW_GROUND = "reach_below_ground"


@dataclass(frozen=True)
class Goal:
    """A task goal or sub-goal.

    ``verb`` only affects display ("obtain" vs "collect"); it is excluded from
    equality and hashing so both spellings name the same goal.
    """

    kind: GoalKind
    item: str | None = None
    qty: int | None = None
    tool: str | None = None
    verb: str = field(default="obtain", compare=False)

    def __post_init__(self) -> None:
        if self.kind is GoalKind.OBTAIN_ITEM:
            if self.item is None or not is_item_id(self.item):
                raise ValueError(f"invalid item {self.item!r}")
            if self.qty is None or self.qty < 1:
                raise ValueError("goal quantity must be >= 1")
            if self.tool is not None:
                raise ValueError("ObtainItem goals carry no tool")
        else:
            if self.item is not None or self.qty is not None:
                raise ValueError("ReachBelowGround goals carry no item")
            if self.tool is None or not is_item_id(self.tool):
                raise ValueError(f"invalid tool {self.tool!r}")

    @classmethod
    def obtain(cls, item: str, qty: int = 1, verb: str = "obtain") -> Goal:
        return cls(GoalKind.OBTAIN_ITEM, item=item, qty=qty, verb=verb)

    @classmethod
    def below_ground(cls, tool: str) -> Goal:
        return cls(GoalKind.REACH_BELOW_GROUND, tool=tool, verb="dig down")

    @property
    def is_obtain(self) -> bool:
        return self.kind is GoalKind.OBTAIN_ITEM

    def __str__(self) -> str:
        return render_goal(self)


_GOAL_RE = re.compile(r"^(obtain|collect)\s+(-?\d+)\s+(\S+)$", re.IGNORECASE)


def parse_goal(text: str, db: RecipeDb | None = None) -> Goal:
    line = _clean_line(text)
    if line.lower().startswith("goal:"):
        line = line[5:].strip().rstrip(".")
    m = _DIG_RE.match(line)
    if m:
        try:
            goal = Goal.below_ground(m.group(1))
        except ValueError as exc:
            raise MalformedGoal(text, str(exc)) from None
    else:
        m = _GOAL_RE.match(line)
        if not m:
            raise MalformedGoal(text, "expected 'obtain|collect <n> <item>' or 'dig down with <tool>'")
        qty = int(m.group(2))
        if qty < 1:
            raise MalformedGoal(text, "quantity must be positive")
        try:
            goal = Goal.obtain(m.group(3), qty, verb=m.group(1).lower())
        except ValueError as exc:
            raise MalformedGoal(text, str(exc)) from None
    if db is not None:
        name = goal.item if goal.is_obtain else goal.tool
        if not db.has_item(name):
            raise MalformedGoal(text, f"unregistered item {name!r}")
    return goal


def render_goal(goal: Goal) -> str:
    """Canonical, verb-normalized text: ``Obtain 3 stone`` / ``Dig down with t``."""
    if goal.is_obtain:
        return f"Obtain {goal.qty} {goal.item}"
    return f"Dig down with {goal.tool}"


def goal_phrase(goal: Goal) -> str:
    """Display text keeping the original verb, e.g. ``collect 3 stone``."""
    if goal.is_obtain:
        return f"{goal.verb} {goal.qty} {goal.item}"
    return f"dig down with {goal.tool}"


def sub_goal_text(goal: Goal) -> str:
    if goal.is_obtain:
        return f"{goal.verb.capitalize()} {goal.qty} {goal.item}"
    return render_goal(goal)


@dataclass(frozen=True)
class DecompositionResult:
    """One decomposition: the step that achieves a goal plus the sub-goals
    that must hold before it. ``thought`` is free text and never compared."""

    step: Step
    sub_goals: tuple[Goal, ...] = ()
    thought: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "sub_goals", tuple(self.sub_goals))


@dataclass(frozen=True)
class StepRating:
    index: int
    score: int
    step: Step | None = None

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError("rating index is 1-based")
        if not 1 <= self.score <= 10:
            raise ValueError(f"score must lie in 1..10, got {self.score}")


# --------------------------------------------------------------------------- recipes


class RecipeKind(str, Enum):
    CRAFT = "craft"
    SMELT = "smelt"
    MINE = "mine"


class Location(str, Enum):
    ABOVE_GROUND = "above_ground"
    BELOW_GROUND = "below_ground"
    ANY = "any"


@dataclass(frozen=True)
class Recipe:
    output: str
    count: int
    kind: RecipeKind
    inputs: tuple[tuple[str, int], ...] = ()
    station: str | None = None
    fuel: tuple[str, int] | None = None
    min_tool: str | None = None
    location: Location = Location.ANY
    reusable: bool = False

    def batches(self, qty: int) -> int:
        return -(-qty // self.count)


# Preference when an item has recipes of several kinds.
_KIND_PREFERENCE = (RecipeKind.MINE, RecipeKind.CRAFT, RecipeKind.SMELT)


@dataclass(frozen=True)
class RecipeDb:
    recipes: dict[tuple[str, RecipeKind], Recipe]
    tool_order: tuple[str, ...]
    items: frozenset[str]
    reusable: frozenset[str]

    def has_item(self, name: str | None) -> bool:
        return name in self.items

    def recipe(self, item: str, kind: RecipeKind | None = None) -> Recipe | None:
        if kind is not None:
            return self.recipes.get((item, kind))
        for k in _KIND_PREFERENCE:
            r = self.recipes.get((item, k))
            if r is not None:
                return r
        return None

    def recipe_for_verb(self, verb: StepVerb, item: str) -> Recipe | None:
        kind = {StepVerb.MINE: RecipeKind.MINE, StepVerb.CRAFT: RecipeKind.CRAFT,
                StepVerb.SMELT: RecipeKind.SMELT}.get(verb)
        return None if kind is None else self.recipes.get((item, kind))

    def tier(self, tool: str | None) -> int:
        """Position in the tool order; -1 for barehand or non-tools."""
        if tool is None or tool not in self.tool_order:
            return -1
        return self.tool_order.index(tool)

    def depth_of_tool(self, tool: str | None) -> int:
        """Depth reached by digging down with ``tool`` (1 for the lowest tier)."""
        return max(self.tier(tool), 0) + 1

    def required_depth(self, recipe: Recipe) -> int:
        """Depth a below-ground Mine recipe needs; 0 when none."""
        if recipe.location is not Location.BELOW_GROUND:
            return 0
        return self.depth_of_tool(recipe.min_tool)

    def tool_for_depth(self, depth: int) -> str:
        return self.tool_order[min(max(depth, 1), len(self.tool_order)) - 1]

    def is_reusable(self, item: str | None) -> bool:
        return item in self.reusable

    def dependencies(self, item: str) -> list[str]:
        deps: list[str] = []
        for kind in RecipeKind:
            r = self.recipes.get((item, kind))
            if r is None:
                continue
            deps.extend(name for name, _ in r.inputs)
            for extra in (r.station, r.fuel[0] if r.fuel else None, r.min_tool):
                if extra is not None:
                    deps.append(extra)
        return list(dict.fromkeys(deps))


Source = Union[bytes, str, Path, IO]


def _read_json(source: Source):
    if isinstance(source, Path):
        return json.loads(source.read_text(encoding="utf-8"))
    if isinstance(source, bytes):
        return json.loads(source.decode("utf-8"))
    if isinstance(source, str):
        return json.loads(source)
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(data)


def _pair(raw, what: str) -> tuple[str, int]:
    if isinstance(raw, dict):
        return str(raw["item"]), int(raw.get("count", 1))
    if isinstance(raw, (list, tuple)) and len(raw) == 2:
        return str(raw[0]), int(raw[1])
    raise RecipeDbError(f"bad {what} entry {raw!r}")


def load_recipe_db(source: Source) -> RecipeDb:
    """Load and validate a recipe document.

    The document has ``tool_order`` (tool names, weakest first) and
    ``recipes``; each recipe record carries ``output``, ``count``, ``kind``
    and, as applicable, ``inputs``, ``station``, ``fuel``, ``min_tool``,
    ``location`` and ``reusable``.
    """
    doc = _read_json(source)
    if not isinstance(doc, dict) or "recipes" not in doc:
        raise RecipeDbError("recipe document must be an object with a 'recipes' array")
    tool_order = tuple(doc.get("tool_order", ()))
    recipes: dict[tuple[str, RecipeKind], Recipe] = {}
    for rec in doc["recipes"]:
        try:
            kind = RecipeKind(rec["kind"])
            output = rec["output"]
            recipe = Recipe(
                output=output,
                count=int(rec.get("count", 1)),
                kind=kind,
                inputs=tuple(_pair(p, "input") for p in rec.get("inputs") or ()),
                station=rec.get("station"),
                fuel=_pair(rec["fuel"], "fuel") if rec.get("fuel") else None,
                min_tool=rec.get("min_tool"),
                location=Location(rec.get("location") or "any"),
                reusable=bool(rec.get("reusable", False)),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise RecipeDbError(f"bad recipe record {rec!r}: {exc}") from None
        if not is_item_id(output):
            raise RecipeDbError(f"invalid item name {output!r}")
        if recipe.count < 1:
            raise RecipeDbError(f"{output}: count must be >= 1")
        if (output, kind) in recipes:
            raise DuplicateRecipe(output, kind.value)
        if kind is RecipeKind.MINE and recipe.inputs:
            raise RecipeDbError(f"{output}: mine recipes take no inputs")
        if kind is not RecipeKind.MINE and not recipe.inputs:
            raise RecipeDbError(f"{output}: {kind.value} recipes need at least one input")
        if any(c < 1 for _, c in recipe.inputs):
            raise RecipeDbError(f"{output}: input counts must be >= 1")
        recipes[(output, kind)] = recipe

    items = frozenset(name for name, _ in recipes)
    for tool in tool_order:
        if tool not in items:
            raise UnknownItem(tool)
    for r in recipes.values():
        refs = [n for n, _ in r.inputs] + [x for x in (r.station, r.min_tool) if x]
        if r.fuel:
            refs.append(r.fuel[0])
        for name in refs:
            if name not in items:
                raise UnknownItem(name)
        if r.min_tool is not None and r.min_tool not in tool_order:
            raise RecipeDbError(f"{r.output}: min_tool {r.min_tool!r} is not in tool_order")
        if r.location is Location.BELOW_GROUND and not tool_order:
            raise RecipeDbError("below-ground recipes need a non-empty tool_order")
    reusable = frozenset(r.output for r in recipes.values() if r.reusable)
    for r in recipes.values():
        for name, _ in r.inputs:
            if name in reusable:
                raise RecipeDbError(f"{r.output}: reusable item {name!r} cannot be consumed")

    db = RecipeDb(recipes=recipes, tool_order=tool_order, items=items, reusable=reusable)
    sorter = graphlib.TopologicalSorter({item: db.dependencies(item) for item in sorted(items)})
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        raise RecipeCycle([str(n) for n in exc.args[1]]) from None
    return db


def _data_path(name: str):
    return resources.files("bar_planner").joinpath("data", name)


@functools.lru_cache(maxsize=1)
def default_recipe_db() -> RecipeDb:
    return load_recipe_db(io.BytesIO(_data_path("recipes.json").read_bytes()))


def load_recipe_db_path(path: str | Path | None) -> RecipeDb:
    if path is None:
        return default_recipe_db()
    with open(path, "rb") as fh:
        return load_recipe_db(fh)


# --------------------------------------------------------------------------- tasks

GROUPS = ("stone", "iron", "diamond", "redstone", "gold")


@dataclass(frozen=True)
class Task:
    id: str
    group: str
    goal: Goal
    ground_truth: tuple[Step, ...]

    def __post_init__(self) -> None:
        if self.group not in GROUPS:
            raise ValueError(f"unknown task group {self.group!r}")
        if not self.ground_truth:
            raise ValueError(f"task {self.id}: ground truth must be non-empty")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "group": self.group,
            "goal": goal_phrase(self.goal),
            "ground_truth": [render_step(s) for s in self.ground_truth],
        }


def load_tasks(source: Source, db: RecipeDb | None = None) -> list[Task]:
    records = _read_json(source)
    if not isinstance(records, list):
        raise ValueError("task file must hold a JSON array")
    tasks = []
    seen = set()
    for rec in records:
        if rec["id"] in seen:
            raise ValueError(f"duplicate task id {rec['id']!r}")
        seen.add(rec["id"])
        tasks.append(Task(
            id=rec["id"],
            group=rec["group"],
            goal=parse_goal(rec["goal"], db),
            ground_truth=tuple(parse_step(s, db) for s in rec["ground_truth"]),
        ))
    return tasks


def default_tasks_path() -> Path:
    return Path(str(_data_path("tasks.json")))


def load_tasks_path(path: str | Path | None, db: RecipeDb | None = None) -> list[Task]:
    path = default_tasks_path() if path is None else Path(path)
    with open(path, "rb") as fh:
        return load_tasks(fh, db)


def iter_items(steps: Iterable[Step]) -> Iterable[str]:
    for s in steps:
        if s.item is not None:
            yield s.item
        if s.tool is not None:
            yield s.tool
