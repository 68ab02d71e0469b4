"""Backward planning from the goal: goal queue, step stack, fusion, ordering.

``plan_backward`` pops goals from a FIFO queue, decomposes each into one
step plus sub-goals, pushes the step on a LIFO stack and enqueues the
sub-goals. Popping the stack yields the raw plan, which is then fused,
put into canonical order and given consistent quantities.
"""

from __future__ import annotations

import logging
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .decomposer import Decomposer
from .domain import (
    PRODUCING_VERBS,
    DecompositionResult,
    Goal,
    Location,
    RecipeDb,
    RecipeKind,
    Step,
    StepVerb,
    render_step,
)
from .errors import DecompositionCycle, IterationBudgetExceeded

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 256


class HintSource(Protocol):
    def retrieve(self, goal: Goal, threshold: float = ...) -> DecompositionResult | None:
        ...


@dataclass(frozen=True)
class TraceEntry:
    goal: Goal
    result: DecompositionResult


@dataclass
class PlanningTrace:
    entries: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def steps(self) -> list[Step]:
        return [e.result.step for e in self.entries]


def _stack_produces(stack: Sequence[Step], item: str) -> bool:
    return any(s.item == item and s.verb in PRODUCING_VERBS for s in stack)


def plan_backward_raw(
    goal: Goal,
    decomposer: Decomposer,
    db: RecipeDb | None = None,
    memory: HintSource | None = None,
    threshold: float = 0.3,
    budget: int = DEFAULT_BUDGET,
    snapshots: bool = False,
) -> tuple[list[Step], PlanningTrace]:
    """The bare goal-queue / step-stack loop. Returns the popped stack, unfused."""
    queue: deque[tuple[Goal, tuple[Goal, ...]]] = deque([(goal, ())])
    stack: list[Step] = []
    trace = PlanningTrace()
    while queue:
        current, ancestors = queue.popleft()
        if current in ancestors:
            raise DecompositionCycle(f"goal {current} reappeared below itself")
        if (db is not None and current.is_obtain and db.is_reusable(current.item)
                and _stack_produces(stack, current.item)):
            continue
        if len(trace) >= budget:
            raise IterationBudgetExceeded(f"no convergence within {budget} decompositions")
        hint = memory.retrieve(current, threshold) if memory is not None else None
        result = decomposer.decompose(current, hint)
        trace.entries.append(TraceEntry(current, result))
        stack.append(result.step)
        for sub in result.sub_goals:
            queue.append((sub, ancestors + (current,)))
        if snapshots:
            trace.snapshots.append(([g for g, _ in queue], list(stack)))
    raw = []
    while stack:
        raw.append(stack.pop())
    return raw, trace


def plan_backward(
    goal: Goal,
    decomposer: Decomposer,
    db: RecipeDb,
    memory: HintSource | None = None,
    threshold: float = 0.3,
    budget: int = DEFAULT_BUDGET,
) -> tuple[list[Step], PlanningTrace]:
    raw, trace = plan_backward_raw(goal, decomposer, db, memory, threshold, budget)
    plan = normalize_plan(fuse_steps(raw, db), db)
    return reconcile_quantities(plan, goal, db), trace


def fuse_steps(plan: Sequence[Step], db: RecipeDb | None = None) -> list[Step]:
    """Merge steps sharing (verb, item, tool) at the earliest occurrence.

    Quantities add up; Dig down repeats collapse; items flagged reusable in
    ``db`` end up with quantity 1.
    """
    totals: dict = {}
    first: dict = {}
    for s in plan:
        if s.key not in first:
            first[s.key] = s
            totals[s.key] = s.qty
        elif s.verb is not StepVerb.DIG_DOWN:
            totals[s.key] += s.qty
    out = []
    for key, s in first.items():
        qty = totals[key]
        if qty is not None and db is not None and db.is_reusable(s.item):
            qty = 1
        out.append(s.with_qty(qty) if qty is not None else s)
    return out


def reconcile_quantities(plan: Sequence[Step], goal: Goal | None, db: RecipeDb) -> list[Step]:
    """Resize producer steps to the pooled demand of later consumers.

    Walks the plan backwards with a demand counter seeded by the goal. Each
    producer takes the outstanding demand for its item; a producer nobody
    consumes keeps its quantity (reusable items fall back to 1).
    """
    demand: Counter = Counter()
    if goal is not None and goal.is_obtain:
        demand[goal.item] += goal.qty
    out = list(plan)
    for i in range(len(plan) - 1, -1, -1):
        s = plan[i]
        if s.verb not in PRODUCING_VERBS:
            continue
        if demand[s.item] > 0:
            qty = demand[s.item]
        else:
            qty = 1 if db.is_reusable(s.item) else s.qty
        demand[s.item] = 0
        out[i] = s.with_qty(qty)
        recipe = db.recipe_for_verb(s.verb, s.item)
        if recipe is None or recipe.kind is RecipeKind.MINE:
            continue
        batches = recipe.batches(qty)
        for item, n in recipe.inputs:
            demand[item] += n * batches
        if recipe.fuel is not None:
            demand[recipe.fuel[0]] += recipe.fuel[1] * batches
    return out


# --------------------------------------------------------------------------- ordering


def step_dependencies(plan: Sequence[Step], db: RecipeDb) -> list[list[int]]:
    """For each step, indices of the steps it needs to come after.

    Craft/Smelt need every producer of each input, then the station, then
    fuel. Mine needs its tool's producer and, below ground, the shallowest
    Dig down deep enough. Dig down needs its tool's producer and every
    above-ground Mine. Equip needs the item's producer.
    """
    producers: dict[str, list[int]] = {}
    digs: list[int] = []
    surface: list[int] = []
    for i, s in enumerate(plan):
        if s.verb in PRODUCING_VERBS:
            producers.setdefault(s.item, []).append(i)
        if s.verb is StepVerb.DIG_DOWN:
            digs.append(i)
        if s.verb is StepVerb.MINE:
            r = db.recipe_for_verb(s.verb, s.item)
            if r is not None and r.location is Location.ABOVE_GROUND:
                surface.append(i)

    def tool_producers(tool: str | None, min_tier: int) -> list[int]:
        if tool is not None and producers.get(tool):
            return producers[tool]
        for t in db.tool_order[max(min_tier, 0):] if min_tier >= 0 else ():
            if producers.get(t):
                return producers[t]
        return []

    deps: list[list[int]] = []
    for i, s in enumerate(plan):
        d: list[int] = []
        if s.verb in (StepVerb.CRAFT, StepVerb.SMELT):
            r = db.recipe_for_verb(s.verb, s.item)
            if r is not None:
                names = [n for n, _ in r.inputs]
                if r.station:
                    names.append(r.station)
                if r.fuel:
                    names.append(r.fuel[0])
                for n in names:
                    d.extend(producers.get(n, ()))
        elif s.verb is StepVerb.MINE:
            r = db.recipe_for_verb(s.verb, s.item)
            min_tool = r.min_tool if r is not None else None
            tier = max(db.tier(s.tool), db.tier(min_tool))
            if s.tool is not None and db.tier(s.tool) < 0:
                d.extend(producers.get(s.tool, ()))
            preferred = s.tool if db.tier(s.tool) >= 0 else min_tool
            d.extend(tool_producers(preferred, tier))
            if r is not None and r.location is Location.BELOW_GROUND:
                need = db.required_depth(r)
                deep = [j for j in digs if db.depth_of_tool(plan[j].tool) >= need]
                if deep:
                    d.append(min(deep, key=lambda j: (db.depth_of_tool(plan[j].tool), j)))
        elif s.verb is StepVerb.DIG_DOWN:
            d.extend(tool_producers(s.tool, db.tier(s.tool)))
            d.extend(surface)
        elif s.verb is StepVerb.EQUIP:
            d.extend(producers.get(s.item, ()))
        deps.append([j for j in dict.fromkeys(d) if j != i])
    return deps


def normalize_plan(plan: Sequence[Step], db: RecipeDb) -> list[Step]:
    """Canonical order: depth-first post-order over step dependencies.

    Requirements are visited in recipe order, so materials come before the
    station and a step's helpers sit right before it. Independent sub-plans
    (steps nothing depends on) are emitted smallest first, ties broken by
    their text. The result respects every dependency, does not depend on
    the input order of a fused plan, and is a fixed point.
    """
    plan = list(plan)
    n = len(plan)
    deps = step_dependencies(plan, db)
    needed = [False] * n
    for d in deps:
        for j in d:
            needed[j] = True

    def closure(i: int) -> int:
        seen = {i}
        todo = [i]
        while todo:
            for j in deps[todo.pop()]:
                if j not in seen:
                    seen.add(j)
                    todo.append(j)
        return len(seen)

    roots = sorted((i for i in range(n) if not needed[i]),
                   key=lambda i: (closure(i), render_step(plan[i])))
    WHITE, GRAY, BLACK = 0, 1, 2
    color = [WHITE] * n
    order: list[int] = []

    def visit(i: int) -> None:
        if color[i] != WHITE:
            return
        color[i] = GRAY
        for j in deps[i]:
            visit(j)
        color[i] = BLACK
        order.append(i)

    for i in roots:
        visit(i)
    for i in range(n):
        visit(i)
    return [plan[i] for i in order]

