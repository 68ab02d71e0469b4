"""Plan repair between anchor steps.

Steps are scored, low-scoring steps open anchor pairs (or pairs are drawn
at random), the segment between each pair is re-planned forward from the
simulated state, and the result is spliced back into the plan.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .domain import (
    Goal,
    Location,
    RecipeDb,
    RecipeKind,
    Step,
    StepRating,
    StepVerb,
    render_step,
)
from .errors import AnchorMismatch, RepairDepthExceeded
from .prompts import (
    format_partial_plan_prompt,
    format_rating_prompt,
    parse_partial_plan_response,
    parse_rating_response,
)
from .remote import RemoteClient
from .simulator import INITIAL_STATE, ExecutionMode, WorldState, execute_plan, simulate_step

log = logging.getLogger(__name__)


class ConsistencyMethod(str, Enum):
    SCORING = "scoring"
    WINDOW = "window"


@dataclass(frozen=True)
class ConsistencyConfig:
    method: ConsistencyMethod = ConsistencyMethod.SCORING
    t: int = 5
    k: int = 3
    seed: int = 0
    rounds: int = 1
    pairs: int | None = None  # sliding-window pair count; None = ceil(len / (k + 1))

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", ConsistencyMethod(self.method))
        if not 1 <= self.t <= 10:
            raise ValueError("t must lie in 1..10")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")


@dataclass(frozen=True, order=True)
class AnchorPair:
    start: int
    end: int

    def __post_init__(self) -> None:
        if not 1 <= self.start < self.end:
            raise ValueError(f"invalid anchor pair ({self.start}, {self.end})")


# --------------------------------------------------------------------------- scoring


def score_steps(plan: Sequence[Step], db: RecipeDb, k: int = 3,
                initial_state: WorldState = INITIAL_STATE) -> list[StepRating]:
    """Simulation scorer: 1 if a step within the next ``k`` fails, else 10.

    The lookahead runs with failed steps skipped, so one failure does not
    poison everything after it.
    """
    report = execute_plan(None, plan, db, mode=ExecutionMode.SKIP_FAILURES, initial_state=initial_state)
    failed = [not o.completed for o in report.outcomes]
    ratings = []
    for i in range(len(plan)):
        bad = any(failed[i + 1: i + 1 + k])
        ratings.append(StepRating(i + 1, 1 if bad else 10, plan[i]))
    return ratings


def merge_pairs(pairs: Sequence[AnchorPair]) -> list[AnchorPair]:
    merged: list[AnchorPair] = []
    for p in sorted(pairs):
        if merged and p.start <= merged[-1].end:
            last = merged[-1]
            merged[-1] = AnchorPair(last.start, max(last.end, p.end))
        else:
            merged.append(p)
    return merged


def choose_anchors_scoring(ratings: Sequence[StepRating], t: int, k: int, plan_len: int) -> list[AnchorPair]:
    """Each step scoring below ``t`` starts a pair ending ``k`` steps later
    (clamped); degenerate pairs are dropped and overlapping ones merged."""
    raw = []
    for r in ratings:
        if r.score < t:
            end = min(r.index + k, plan_len)
            if end > r.index:
                raw.append(AnchorPair(r.index, end))
    return merge_pairs(raw)


def sliding_pair_count(plan_len: int, k: int) -> int:
    """Default number of windows, capped by how many disjoint ones fit."""
    fit = (plan_len - 2) // (k + 1) + 1
    return min(math.ceil(plan_len / (k + 1)), fit)


def choose_anchors_sliding(plan_len: int, k: int, seed: int, count: int | None = None) -> list[AnchorPair]:
    """Seeded, non-overlapping windows of ``k`` steps (clamped at the end).

    ``count`` sorted offsets are drawn without replacement and spread out
    by ``k`` each, which yields a uniform choice among all valid layouts.
    """
    if plan_len < 2:
        return []
    fit = (plan_len - 2) // (k + 1) + 1
    m = sliding_pair_count(plan_len, k) if count is None else min(count, fit)
    if m < 1:
        return []
    hi = plan_len - 1 - (m - 1) * k
    offsets = sorted(random.Random(seed).sample(range(1, hi + 1), m))
    pairs = []
    for i, t in enumerate(offsets):
        s = t + i * k
        pairs.append(AnchorPair(s, min(s + k, plan_len)))
    return pairs


# --------------------------------------------------------------------------- forward completion


@dataclass(frozen=True)
class Insertion:
    step: Step
    enabled: Step


def goal_of(step: Step, db: RecipeDb) -> Goal:
    """The sub-goal a step achieves."""
    if step.verb is StepVerb.DIG_DOWN:
        return Goal.below_ground(step.tool)
    verb = "collect" if db.recipe(step.item, RecipeKind.MINE) is not None else "obtain"
    return Goal.obtain(step.item, step.qty, verb=verb)


def _producer(db: RecipeDb, item: str, qty: int) -> Step:
    recipe = db.recipe(item)
    if recipe is None:
        raise RepairDepthExceeded(f"no recipe for {item}")
    if recipe.kind is RecipeKind.MINE:
        return Step.mine(item, qty, recipe.min_tool)
    verb = StepVerb.CRAFT if recipe.kind is RecipeKind.CRAFT else StepVerb.SMELT
    return Step(verb, item, qty)


def _next_enabler(state: WorldState, step: Step, db: RecipeDb) -> Step | None:
    """First unmet precondition of ``step`` as an enabling step, or None.

    Preconditions are checked in canonical order: a Mine step's tool, then
    its depth; a Craft/Smelt step's inputs, then station, then fuel.
    """
    if step.verb is StepVerb.DIG_DOWN:
        tier = db.tier(step.tool)
        if tier < 0:
            raise RepairDepthExceeded(f"{step.tool} cannot dig")
        if not any(state.has(t) for t in db.tool_order[tier:]):
            return _producer(db, step.tool, 1)
        return None
    if step.verb is StepVerb.EQUIP:
        return None if state.has(step.item) else _producer(db, step.item, 1)
    recipe = db.recipe_for_verb(step.verb, step.item)
    if recipe is None:
        raise RepairDepthExceeded(f"no recipe for {render_step(step)}")
    if step.verb is StepVerb.MINE:
        tier = max(db.tier(step.tool), db.tier(recipe.min_tool))
        if step.tool is not None and db.tier(step.tool) < 0 and not state.has(step.tool):
            return _producer(db, step.tool, 1)
        if tier >= 0 and not any(state.has(t) for t in db.tool_order[tier:]):
            return _producer(db, db.tool_order[tier], 1)
        if recipe.location is Location.ABOVE_GROUND and state.depth > 0:
            raise RepairDepthExceeded(f"{step.item} needs the surface; there is no way back up")
        need = db.required_depth(recipe)
        if state.depth < need:
            return Step.dig_down(db.tool_for_depth(need))
        return None
    batches = recipe.batches(step.qty)
    for item, n in recipe.inputs:
        if state.count(item) < n * batches:
            return _producer(db, item, n * batches - state.count(item))
    if recipe.station is not None and not state.has(recipe.station):
        return _producer(db, recipe.station, 1)
    if recipe.fuel is not None:
        item, n = recipe.fuel
        if state.count(item) < n * batches:
            return _producer(db, item, n * batches - state.count(item))
    return None


class _Completer:
    def __init__(self, db: RecipeDb, limit: int) -> None:
        self.db = db
        self.limit = limit
        self.steps: list[Step] = []
        self.insertions: list[Insertion] = []

    def enable(self, state: WorldState, target: Step, chain: tuple = ()) -> WorldState:
        """Insert enabling steps until ``target`` can run; return the state."""
        while True:
            helper = _next_enabler(state, target, self.db)
            if helper is None:
                return state
            if helper.key in chain or len(self.insertions) >= self.limit:
                raise RepairDepthExceeded(
                    f"cannot enable {render_step(target)} within {self.limit} insertions")
            state = self.enable(state, helper, chain + (target.key,))
            out = simulate_step(state, helper, self.db)
            if not out.completed:
                raise RepairDepthExceeded(f"enabling step {render_step(helper)} failed: {out.failure}")
            self.steps.append(helper)
            self.insertions.append(Insertion(helper, target))
            state = out.state_after

    def run(self, state: WorldState, step: Step, must_succeed: bool) -> WorldState:
        try:
            state = self.enable(state, step)
        except RepairDepthExceeded:
            if must_succeed:
                raise
            log.info("left %s unrepaired", render_step(step))
        out = simulate_step(state, step, self.db)
        if not out.completed and must_succeed:
            raise RepairDepthExceeded(f"{render_step(step)} still fails: {out.failure}")
        self.steps.append(step)
        return out.state_after


def forward_complete(
    goal: Goal | None,
    start: Step,
    end: Step,
    state_at_start: WorldState,
    db: RecipeDb,
    between: Sequence[Step] = (),
    k: int = 3,
    insertions: list | None = None,
) -> list[Step]:
    """Partial plan from ``start`` to ``end`` that makes ``end`` executable.

    The start anchor runs first. The original in-between steps (``between``)
    are then replayed in order; before each of them and before the end
    anchor, missing preconditions are satisfied by inserting enabling steps
    (at most ``2 * k`` in total). Inserted steps are appended to
    ``insertions`` when a list is given.
    """
    done = _Completer(db, 2 * k)
    state = simulate_step(state_at_start, start, db).state_after
    done.steps.append(start)
    for step in between:
        state = done.run(state, step, must_succeed=False)
    done.run(state, end, must_succeed=True)
    if insertions is not None:
        insertions.extend(done.insertions)
    return done.steps


# --------------------------------------------------------------------------- integration


def _integrate(initial: Sequence[Step], partial: Sequence[Step], pair: AnchorPair):
    """Splice and merge duplicates; also return where each initial index went."""
    n = len(initial)
    if pair.end > n:
        raise AnchorMismatch(f"pair {pair} exceeds plan length {n}")
    if not partial:
        raise AnchorMismatch("empty partial plan")
    if partial[0].key != initial[pair.start - 1].key or partial[-1].key != initial[pair.end - 1].key:
        raise AnchorMismatch(
            f"partial plan runs {render_step(partial[0])} .. {render_step(partial[-1])}, "
            f"expected {render_step(initial[pair.start - 1])} .. {render_step(initial[pair.end - 1])}")
    spliced: list[tuple[Step, int | None]] = []
    spliced += [(s, i + 1) for i, s in enumerate(initial[: pair.start - 1])]
    spliced += [(s, None) for s in partial]
    spliced += [(s, pair.end + 1 + i) for i, s in enumerate(initial[pair.end:])]
    # the anchors themselves come from the partial plan
    spliced[pair.start - 1] = (spliced[pair.start - 1][0], pair.start)
    spliced[pair.start - 2 + len(partial)] = (spliced[pair.start - 2 + len(partial)][0], pair.end)
    out: list[Step] = []
    where: dict = {}
    position: dict[int, int] = {}
    for step, origin in spliced:
        if step.key in where:
            j = where[step.key]
            if step.qty is not None and out[j].qty is not None and step.qty > out[j].qty:
                out[j] = step
        else:
            j = len(out)
            where[step.key] = j
            out.append(step)
        if origin is not None:
            position[origin] = j + 1
    return out, position


def integrate(initial: Sequence[Step], partial: Sequence[Step], pair: AnchorPair) -> list[Step]:
    """Replace ``initial[start..end]`` by ``partial``, then merge repeated
    steps at their first position keeping the larger quantity."""
    return _integrate(initial, partial, pair)[0]


# --------------------------------------------------------------------------- pipeline


class RemoteConsistencyBackend:
    """Scores steps and completes partial plans through a remote model."""

    def __init__(self, client: RemoteClient, db: RecipeDb | None = None) -> None:
        self.client = client
        self.db = db

    def rate(self, goal: Goal, plan: Sequence[Step]) -> list[StepRating]:
        return parse_rating_response(self.client.complete(format_rating_prompt(goal, plan)), self.db)

    def complete(self, goal: Goal, start: Step, end: Step) -> list[Step]:
        text = self.client.complete(format_partial_plan_prompt(goal, start, end))
        return parse_partial_plan_response(text, self.db)


@dataclass
class ConsistencyResult:
    plan: list
    pairs: list = field(default_factory=list)
    insertions: list = field(default_factory=list)
    skipped: list = field(default_factory=list)


def repair_plan(
    plan: Sequence[Step],
    goal: Goal | None,
    cfg: ConsistencyConfig,
    db: RecipeDb,
    remote: RemoteConsistencyBackend | None = None,
    initial_state: WorldState = INITIAL_STATE,
) -> ConsistencyResult:
    """Score, pick anchors and repair each pair left to right.

    Pair indices refer to the plan as scored; after every splice they are
    mapped to the current plan and the pre-anchor state is re-simulated. A
    pair whose end anchor cannot be enabled within the insertion limit is
    left as it was and listed in ``skipped``.
    """
    current = list(plan)
    result = ConsistencyResult(current)
    for rnd in range(cfg.rounds):
        if len(current) < 2:
            break
        if cfg.method is ConsistencyMethod.SCORING:
            if remote is not None:
                ratings = remote.rate(goal, current)
            else:
                ratings = score_steps(current, db, cfg.k, initial_state)
            pairs = choose_anchors_scoring(ratings, cfg.t, cfg.k, len(current))
        else:
            pairs = choose_anchors_sliding(len(current), cfg.k, cfg.seed + rnd, cfg.pairs)
        result.pairs.extend(pairs)
        position = {i: i for i in range(1, len(current) + 1)}
        for pair in pairs:
            s, e = position.get(pair.start), position.get(pair.end)
            if s is None or e is None or s >= e:
                continue
            before = execute_plan(None, current[: s - 1], db, mode=ExecutionMode.SKIP_FAILURES,
                                  initial_state=initial_state).final_state
            if remote is not None:
                partial = remote.complete(goal, current[s - 1], current[e - 1])
            else:
                added: list[Insertion] = []
                try:
                    partial = forward_complete(goal, current[s - 1], current[e - 1], before, db,
                                               between=current[s: e - 1], k=cfg.k, insertions=added)
                except RepairDepthExceeded as exc:
                    log.info("pair (%d, %d) left unrepaired: %s", s, e, exc)
                    result.skipped.append(pair)
                    continue
                result.insertions.extend(added)
            current, moved = _integrate(current, partial, AnchorPair(s, e))
            position = {orig: moved[p] for orig, p in position.items() if p in moved}
        result.plan = current
    return result


def maintain_consistency(
    plan: Sequence[Step],
    goal: Goal | None,
    cfg: ConsistencyConfig,
    db: RecipeDb,
    remote: RemoteConsistencyBackend | None = None,
    initial_state: WorldState = INITIAL_STATE,
) -> list[Step]:
    return repair_plan(plan, goal, cfg, db, remote, initial_state).plan
