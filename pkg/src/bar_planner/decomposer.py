"""Single-step goal decomposition: one achieving step plus its sub-goals."""

from __future__ import annotations

import logging
from enum import Enum
from typing import Protocol, Sequence

from .domain import (
    DecompositionResult,
    Goal,
    Location,
    RecipeDb,
    RecipeKind,
    Step,
    StepVerb,
)
from .errors import NoRecipe
from .prompts import Exemplar, format_decompose_prompt, parse_decompose_response
from .remote import RemoteClient
from .simulator import WorldState, goal_satisfied, simulate_step

log = logging.getLogger(__name__)


class FaultProfile(str, Enum):
    OMIT_DIGDOWN = "omit-digdown"


class Decomposer(Protocol):
    def decompose(self, goal: Goal, hint: DecompositionResult | None = None) -> DecompositionResult:
        ...


def item_goal(db: RecipeDb, item: str, qty: int) -> Goal:
    """ObtainItem goal, phrased "collect" for raw minable items."""
    verb = "collect" if db.recipe(item, RecipeKind.MINE) is not None else "obtain"
    return Goal.obtain(item, qty, verb=verb)


def validate_decomposition(goal: Goal, result: DecompositionResult, db: RecipeDb) -> bool:
    """True when ``result.step``, run right after its sub-goals hold, achieves ``goal``.

    The pre-state holds exactly what the sub-goals ask for. A Dig down step
    may also assume its own tool, which the parent decomposition queues.
    """
    step = result.step
    for name in (step.item, step.tool):
        if name is not None and not db.has_item(name):
            return False
    inventory: dict[str, int] = {}
    depth = 0
    for sub in result.sub_goals:
        if sub.is_obtain:
            if not db.has_item(sub.item):
                return False
            inventory[sub.item] = inventory.get(sub.item, 0) + sub.qty
        else:
            if not db.has_item(sub.tool):
                return False
            depth = max(depth, db.depth_of_tool(sub.tool))
    if step.verb is StepVerb.DIG_DOWN and step.tool not in inventory:
        inventory[step.tool] = 1
    outcome = simulate_step(WorldState(inventory, depth), step, db)
    return outcome.completed and goal_satisfied(outcome.state_after, goal, db)


class RecipeOracle:
    """Deterministic decomposer reading the recipe db.

    ``fault`` injects a known defect for testing the repair machinery.
    """

    def __init__(self, db: RecipeDb, fault: FaultProfile | str | None = None) -> None:
        self.db = db
        self.fault = FaultProfile(fault) if fault is not None else None

    def fresh(self, goal: Goal) -> DecompositionResult:
        db = self.db
        if not goal.is_obtain:
            return DecompositionResult(Step.dig_down(goal.tool), ())
        recipe = db.recipe(goal.item)
        if recipe is None:
            raise NoRecipe(goal.item)
        subs: list[Goal] = []
        if recipe.kind is RecipeKind.MINE:
            step = Step.mine(goal.item, goal.qty, recipe.min_tool)
            if recipe.min_tool is not None:
                subs.append(Goal.obtain(recipe.min_tool, 1))
            if recipe.location is Location.BELOW_GROUND:
                dig_tool = recipe.min_tool or db.tool_order[0]
                if recipe.min_tool is None:
                    subs.append(Goal.obtain(dig_tool, 1))
                subs.append(Goal.below_ground(dig_tool))
        else:
            verb = StepVerb.CRAFT if recipe.kind is RecipeKind.CRAFT else StepVerb.SMELT
            step = Step(verb, goal.item, goal.qty)
            batches = recipe.batches(goal.qty)
            for item, n in recipe.inputs:
                subs.append(item_goal(db, item, n * batches))
            if recipe.station is not None:
                subs.append(item_goal(db, recipe.station, 1))
            if recipe.fuel is not None:
                subs.append(item_goal(db, recipe.fuel[0], recipe.fuel[1] * batches))
        if self.fault is FaultProfile.OMIT_DIGDOWN:
            subs = [g for g in subs if g.is_obtain]
        return DecompositionResult(step, tuple(subs))

    def decompose(self, goal: Goal, hint: DecompositionResult | None = None) -> DecompositionResult:
        if hint is not None:
            if validate_decomposition(goal, hint, self.db):
                return hint
            log.warning("discarding invalid hint for %s: %s", goal, hint.step)
        return self.fresh(goal)


class RemoteDecomposer:
    """Decomposer that asks a remote model using the few-shot prompt."""

    def __init__(self, client: RemoteClient, db: RecipeDb | None = None,
                 exemplars: Sequence[Exemplar] | None = None) -> None:
        self.client = client
        self.db = db
        self.exemplars = exemplars

    def decompose(self, goal: Goal, hint: DecompositionResult | None = None) -> DecompositionResult:
        if hint is not None:
            return hint
        prompt = format_decompose_prompt(goal, self.exemplars)
        return parse_decompose_response(self.client.complete(prompt), self.db)
