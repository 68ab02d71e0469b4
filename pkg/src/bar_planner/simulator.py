"""Deterministic crafting-world state machine.

The world has an inventory, a vertical depth and an equipped tool. Depth 0
is above ground; digging down with a tool of tier ``i`` (0-based in the
recipe db's tool order) reaches at least depth ``i + 1``. A below-ground
resource whose minimum tool has tier ``i`` is reachable at depth ``i + 1`` or
deeper. There is no ascent: above-ground resources are only minable at
depth 0.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .domain import Goal, Location, RecipeDb, Step, StepVerb, render_step


@dataclass(frozen=True)
class WorldState:
    inventory: dict = field(default_factory=dict)
    depth: int = 0
    equipped: str | None = None

    def __post_init__(self) -> None:
        clean = {k: int(v) for k, v in self.inventory.items() if v}
        if any(v < 0 for v in clean.values()):
            raise ValueError("inventory counts cannot be negative")
        object.__setattr__(self, "inventory", dict(sorted(clean.items())))
        if self.depth < 0:
            raise ValueError("depth cannot be negative")

    @property
    def location(self) -> Location:
        return Location.ABOVE_GROUND if self.depth == 0 else Location.BELOW_GROUND

    def count(self, item: str) -> int:
        return self.inventory.get(item, 0)

    def has(self, item: str, n: int = 1) -> bool:
        return self.count(item) >= n

    def add(self, item: str, n: int) -> WorldState:
        inv = dict(self.inventory)
        inv[item] = inv.get(item, 0) + n
        return WorldState(inv, self.depth, self.equipped)

    def to_json(self) -> dict:
        return {
            "inventory": dict(self.inventory),
            "location": self.location.value,
            "depth": self.depth,
            "equipped": self.equipped,
        }


INITIAL_STATE = WorldState()


class FailureKind(str, Enum):
    MISSING_MATERIALS = "MissingMaterials"
    MISSING_STATION = "MissingStation"
    MISSING_TOOL = "MissingTool"
    WRONG_LOCATION = "WrongLocation"
    UNKNOWN_RECIPE = "UnknownRecipe"


@dataclass(frozen=True)
class Failure:
    kind: FailureKind
    missing: tuple[tuple[str, int], ...] = ()
    detail: str = ""

    def __str__(self) -> str:
        if self.missing:
            items = ", ".join(f"{n} {i}" for i, n in self.missing)
            return f"{self.kind.value}({items})"
        return f"{self.kind.value}({self.detail})" if self.detail else self.kind.value


@dataclass(frozen=True)
class StepOutcome:
    step: Step
    failure: Failure | None
    state_after: WorldState

    @property
    def completed(self) -> bool:
        return self.failure is None

    @property
    def status(self) -> str:
        return "Completed" if self.failure is None else "Failed"

    def to_json(self) -> dict:
        return {
            "step": render_step(self.step),
            "status": self.status,
            "reason": None if self.failure is None else str(self.failure),
            "state_after": self.state_after.to_json(),
        }


@dataclass(frozen=True)
class StochasticProfile:
    """Per-item probability that one mined unit actually drops."""

    mine_yield: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        for item, p in self.mine_yield.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"mine_yield[{item}] must lie in [0, 1]")

    def probability(self, item: str) -> float:
        return float(self.mine_yield.get(item, 1.0))

    @property
    def deterministic(self) -> bool:
        return all(p == 1.0 for p in self.mine_yield.values())


DETERMINISTIC = StochasticProfile()


class ExecutionMode(str, Enum):
    STRICT = "strict"
    SKIP_FAILURES = "skip"


def _held_tool(state: WorldState, db: RecipeDb, min_tier: int, preferred: str | None) -> str | None:
    """Weakest held tool at or above ``min_tier``; the preferred tool wins if held."""
    if preferred is not None and state.has(preferred) and db.tier(preferred) >= min_tier:
        return preferred
    for tool in db.tool_order[max(min_tier, 0):]:
        if state.has(tool):
            return tool
    return None


def _fail(step: Step, state: WorldState, kind: FailureKind, missing=(), detail: str = "") -> StepOutcome:
    return StepOutcome(step, Failure(kind, tuple(missing), detail), state)


def _shortfall(state: WorldState, needs: Iterable[tuple[str, int]]) -> list[tuple[str, int]]:
    total: dict[str, int] = {}
    for item, n in needs:
        total[item] = total.get(item, 0) + n
    return [(item, n - state.count(item)) for item, n in total.items() if state.count(item) < n]


def simulate_step(
    state: WorldState,
    step: Step,
    db: RecipeDb,
    profile: StochasticProfile = DETERMINISTIC,
    rng: random.Random | None = None,
) -> StepOutcome:
    """Apply one step. A failed step returns the input state unchanged."""
    verb = step.verb
    if verb is StepVerb.DIG_DOWN:
        tier = db.tier(step.tool)
        if tier < 0:
            return _fail(step, state, FailureKind.MISSING_TOOL, detail=f"{step.tool} cannot dig")
        tool = _held_tool(state, db, tier, step.tool)
        if tool is None:
            return _fail(step, state, FailureKind.MISSING_TOOL, detail=step.tool)
        depth = max(state.depth, db.depth_of_tool(step.tool))
        return StepOutcome(step, None, WorldState(state.inventory, depth, tool))

    if verb is StepVerb.EQUIP:
        if not state.has(step.item):
            return _fail(step, state, FailureKind.MISSING_MATERIALS, [(step.item, 1)])
        return StepOutcome(step, None, WorldState(state.inventory, state.depth, step.item))

    recipe = db.recipe_for_verb(verb, step.item)
    if recipe is None:
        return _fail(step, state, FailureKind.UNKNOWN_RECIPE, detail=f"{verb.value} {step.item}")

    if verb is StepVerb.MINE:
        if recipe.location is Location.ABOVE_GROUND and state.depth != 0:
            return _fail(step, state, FailureKind.WRONG_LOCATION, detail="needs above ground")
        need_depth = db.required_depth(recipe)
        if state.depth < need_depth:
            return _fail(step, state, FailureKind.WRONG_LOCATION, detail=f"needs depth {need_depth}")
        equipped = state.equipped
        if step.tool is not None and db.tier(step.tool) < 0:
            # a non-tier tool must be held as-is
            if not state.has(step.tool):
                return _fail(step, state, FailureKind.MISSING_TOOL, detail=step.tool)
            equipped = step.tool
        required = max(db.tier(step.tool), db.tier(recipe.min_tool))
        if required >= 0:
            tool = _held_tool(state, db, required, step.tool)
            if tool is None:
                return _fail(step, state, FailureKind.MISSING_TOOL,
                             detail=db.tool_order[required])
            equipped = tool
        p = profile.probability(step.item)
        if p >= 1.0:
            got = step.qty
        else:
            rng = rng if rng is not None else random.Random(profile.seed)
            got = sum(1 for _ in range(step.qty) if rng.random() < p)
        after = state.add(step.item, got) if got else state
        return StepOutcome(step, None, WorldState(after.inventory, state.depth, equipped))

    # Craft / Smelt
    if recipe.station is not None and not state.has(recipe.station):
        return _fail(step, state, FailureKind.MISSING_STATION, detail=recipe.station)
    batches = recipe.batches(step.qty)
    needs = [(item, n * batches) for item, n in recipe.inputs]
    if recipe.fuel is not None:
        needs.append((recipe.fuel[0], recipe.fuel[1] * batches))
    short = _shortfall(state, needs)
    if short:
        return _fail(step, state, FailureKind.MISSING_MATERIALS, short)
    inv = dict(state.inventory)
    for item, n in needs:
        inv[item] -= n
    inv[step.item] = inv.get(step.item, 0) + recipe.count * batches
    return StepOutcome(step, None, WorldState(inv, state.depth, state.equipped))


def goal_satisfied(state: WorldState, goal: Goal, db: RecipeDb) -> bool:
    if goal.is_obtain:
        return state.has(goal.item, goal.qty)
    return state.depth >= db.depth_of_tool(goal.tool)


@dataclass
class ExecutionReport:
    outcomes: list
    goal_achieved: bool
    failed_index: int | None
    elapsed_ms: float
    final_state: WorldState

    @property
    def first_failure(self) -> StepOutcome | None:
        if self.failed_index is None:
            return None
        return self.outcomes[self.failed_index - 1]

    def to_json(self) -> dict:
        return {
            "outcomes": [o.to_json() for o in self.outcomes],
            "goal_achieved": self.goal_achieved,
            "failed_index": self.failed_index,
            "elapsed_ms": round(self.elapsed_ms, 3),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def execute_plan(
    goal: Goal | None,
    plan: Sequence[Step],
    db: RecipeDb,
    profile: StochasticProfile = DETERMINISTIC,
    mode: ExecutionMode = ExecutionMode.STRICT,
    initial_state: WorldState = INITIAL_STATE,
    rng: random.Random | None = None,
) -> ExecutionReport:
    """Run ``plan`` step by step. ``failed_index`` is the 1-based first failure.

    STRICT stops at the first failure; SKIP_FAILURES keeps going with the
    failed step's effects dropped. A ``None`` goal counts as achieved when
    every step completes.
    """
    t0 = time.perf_counter()
    if rng is None and not profile.deterministic:
        rng = random.Random(profile.seed)
    state = initial_state
    outcomes: list[StepOutcome] = []
    failed_index = None
    for i, step in enumerate(plan, start=1):
        out = simulate_step(state, step, db, profile, rng)
        outcomes.append(out)
        if out.failure is not None:
            if failed_index is None:
                failed_index = i
            if mode is ExecutionMode.STRICT:
                break
        state = out.state_after
    if goal is None:
        achieved = failed_index is None
    else:
        achieved = goal_satisfied(state, goal, db)
    elapsed = (time.perf_counter() - t0) * 1000.0
    return ExecutionReport(outcomes, achieved, failed_index, elapsed, state)


def state_before(plan: Sequence[Step], index: int, db: RecipeDb,
                 initial_state: WorldState = INITIAL_STATE) -> WorldState:
    """World state right before the 1-based ``index``, skipping failed steps."""
    report = execute_plan(None, list(plan[: index - 1]), db, mode=ExecutionMode.SKIP_FAILURES,
                          initial_state=initial_state)
    return report.final_state


def success_rate(
    goal: Goal,
    plan: Sequence[Step],
    db: RecipeDb,
    profile: StochasticProfile = DETERMINISTIC,
    runs: int = 10,
    base_seed: int | None = None,
) -> float:
    """Fraction of ``runs`` strict executions achieving ``goal``.

    Run ``i`` draws from ``random.Random(base_seed + i)``; ``base_seed``
    defaults to the profile's seed.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if profile.deterministic:
        ok = execute_plan(goal, plan, db, profile).goal_achieved
        return 1.0 if ok else 0.0
    base = profile.seed if base_seed is None else base_seed
    wins = 0
    for i in range(runs):
        report = execute_plan(goal, plan, db, profile, rng=random.Random(base + i))
        wins += report.goal_achieved
    return wins / runs
