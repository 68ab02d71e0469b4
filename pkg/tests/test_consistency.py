import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bar_planner.consistency import (
    AnchorPair,
    ConsistencyConfig,
    choose_anchors_scoring,
    choose_anchors_sliding,
    forward_complete,
    integrate,
    maintain_consistency,
    repair_plan,
    score_steps,
    sliding_pair_count,
)
from bar_planner.decomposer import FaultProfile, RecipeOracle
from bar_planner.domain import Goal, Step, StepRating, StepVerb, default_recipe_db, parse_plan
from bar_planner.errors import AnchorMismatch, RepairDepthExceeded
from bar_planner.metrics import edit_distance
from bar_planner.planner import plan_backward
from bar_planner.simulator import FailureKind, WorldState, execute_plan, state_before

from conftest import STONE_PLAN_TEXT

DB = default_recipe_db()
STONE = Goal.obtain("stone", 3, "collect")
FULL = parse_plan(STONE_PLAN_TEXT, DB)
BROKEN = [s for s in FULL if s.verb is not StepVerb.DIG_DOWN]
FAULTY = RecipeOracle(DB, FaultProfile.OMIT_DIGDOWN)


def ratings(scores):
    return [StepRating(i, s) for i, s in enumerate(scores, start=1)]


def brute_force_anchors(scores, t, k, n):
    """Maximal runs of unit gaps [x, x+1] covered by some raw window [s, min(s+k, n)]."""
    windows = [(i, min(i + k, n)) for i, s in enumerate(scores, start=1) if s < t and min(i + k, n) > i]

    def covered(x):
        return any(a <= x < b for a, b in windows)

    out = []
    for a in range(1, n + 1):
        for b in range(a + 1, n + 1):
            inside = all(covered(x) for x in range(a, b))
            if inside and not covered(a - 1) and not covered(b):
                out.append(AnchorPair(a, b))
    return out


# scoring


def test_score_broken_stone_plan():
    scores = [r.score for r in score_steps(BROKEN, DB, k=3)]
    assert scores[3] < 5  # Craft 1 crafting_table, two steps ahead of the failing mine
    assert scores == [10, 10, 1, 1, 1, 10]


def test_score_good_plan():
    assert all(r.score == 10 for r in score_steps(FULL, DB, k=3))


# anchor choice


def test_anchor_example():
    pairs = choose_anchors_scoring(ratings([10, 8, 5, 3, 3, 5]), t=5, k=3, plan_len=6)
    assert pairs == [AnchorPair(4, 6)]
    assert pairs == brute_force_anchors([10, 8, 5, 3, 3, 5], 5, 3, 6)


def test_anchor_none_when_all_good():
    assert choose_anchors_scoring(ratings([10] * 7), 5, 3, 7) == []


def test_anchor_degenerate_last_step():
    assert choose_anchors_scoring(ratings([10, 10, 10, 1]), 5, 3, 4) == []


@settings(max_examples=500)
@given(st.lists(st.integers(1, 10), min_size=1, max_size=20), st.integers(1, 10), st.integers(1, 6))
def test_anchor_matches_brute_force(scores, t, k):
    n = len(scores)
    pairs = choose_anchors_scoring(ratings(scores), t, k, n)
    assert pairs == brute_force_anchors(scores, t, k, n)
    for a, b in zip(pairs, pairs[1:]):
        assert a.end < b.start
    for p in pairs:
        assert 1 <= p.start < p.end <= n


def test_anchor_pair_validation():
    with pytest.raises(ValueError):
        AnchorPair(3, 3)
    with pytest.raises(ValueError):
        AnchorPair(0, 2)


def test_config_validation():
    for bad in ({"t": 0}, {"t": 11}, {"k": 0}, {"rounds": 0}, {"method": "magic"}):
        with pytest.raises(ValueError):
            ConsistencyConfig(**bad)


# sliding window


def test_sliding_fixed_seed_golden():
    # recorded at first run
    assert choose_anchors_sliding(7, 3, 0) == [AnchorPair(2, 5), AnchorPair(6, 7)]


def test_sliding_short_plan():
    assert choose_anchors_sliding(2, 3, 0) == [AnchorPair(1, 2)]
    assert choose_anchors_sliding(1, 3, 0) == []


@given(st.integers(2, 60), st.integers(1, 6), st.integers(0, 10_000))
def test_sliding_properties(n, k, seed):
    pairs = choose_anchors_sliding(n, k, seed)
    assert pairs == choose_anchors_sliding(n, k, seed)
    assert len(pairs) == sliding_pair_count(n, k)
    assert len(pairs) <= -(-n // (k + 1))
    for p in pairs:
        assert p.end == min(p.start + k, n)
    for a, b in zip(pairs, pairs[1:]):
        assert a.end < b.start


def test_sliding_covers_every_layout():
    seen = {tuple(choose_anchors_sliding(9, 2, s)) for s in range(400)}
    # 3 windows of span 2 with gaps among 9 steps: C(4, 3) = 4 layouts
    assert len(seen) == 4


# forward completion


def test_forward_complete_stone():
    before = state_before(BROKEN, 4, DB)
    partial = forward_complete(STONE, Step.craft("crafting_table", 1),
                               Step.mine("stone", 3, "wooden_pickaxe"), before, DB)
    assert partial == FULL[3:]


def test_forward_complete_adjacent_ready():
    state = WorldState({"wooden_pickaxe": 1}, depth=1)
    start, end = Step.mine("stone", 1, "wooden_pickaxe"), Step.mine("coal", 1, "wooden_pickaxe")
    assert forward_complete(None, start, end, state, DB) == [start, end]


def test_forward_complete_unreachable():
    with pytest.raises(RepairDepthExceeded):
        forward_complete(None, Step.mine("log", 1), Step.smelt("stick", 1), WorldState(), DB)
    with pytest.raises(RepairDepthExceeded):
        forward_complete(None, Step.mine("log", 1), Step.craft("iron_pickaxe", 1), WorldState(), DB, k=1)


# integration


def test_integrate_stone():
    assert integrate(BROKEN, FULL[3:], AnchorPair(4, 6)) == FULL


def test_integrate_identity():
    assert integrate(FULL, [FULL[2], FULL[3]], AnchorPair(3, 4)) == FULL


def test_integrate_seam_keeps_max():
    partial = [Step.craft("crafting_table", 1), Step.craft("planks", 12), Step.craft("wooden_pickaxe", 1)]
    out = integrate(FULL, partial, AnchorPair(4, 5))
    assert out[1] == Step.craft("planks", 12)
    assert len(out) == len(FULL)


def test_integrate_anchor_mismatch():
    with pytest.raises(AnchorMismatch):
        integrate(BROKEN, FULL[2:], AnchorPair(4, 6))
    with pytest.raises(AnchorMismatch):
        integrate(BROKEN, FULL[3:], AnchorPair(4, 9))


def _apply(plan, pair, goal):
    before = state_before(plan, pair.start, DB)
    partial = forward_complete(goal, plan[pair.start - 1], plan[pair.end - 1], before, DB,
                               between=plan[pair.start: pair.end - 1])
    return integrate(plan, partial, pair)


def test_overlapping_pairs_sequential_equals_covering(tasks):
    checked = 0
    for task in tasks:
        plan, _ = plan_backward(task.goal, FAULTY, DB)
        raw = [AnchorPair(r.index, min(r.index + 3, len(plan)))
               for r in score_steps(plan, DB, 3) if r.score < 5 and r.index < len(plan)]
        if len(raw) < 2 or raw[1].start > raw[0].end:
            continue
        first, second = raw[0], raw[1]
        covering = AnchorPair(first.start, max(first.end, second.end))
        try:
            one_shot = _apply(plan, covering, task.goal)
        except RepairDepthExceeded:
            continue
        step_a = _apply(plan, first, task.goal)
        s_key, e_key = plan[second.start - 1].key, plan[second.end - 1].key
        keys = [s.key for s in step_a]
        s = keys.index(s_key) + 1
        e = keys.index(e_key, s) + 1
        step_b = _apply(step_a, AnchorPair(s, e), task.goal)
        assert execute_plan(task.goal, step_b, DB).goal_achieved == \
            execute_plan(task.goal, one_shot, DB).goal_achieved, task.id
        assert step_b == one_shot, task.id
        checked += 1
    assert checked >= 5


# whole pipeline


def test_fault_stone_plan_repaired():
    plan, _ = plan_backward(STONE, FAULTY, DB)
    assert plan == BROKEN
    fixed = maintain_consistency(plan, STONE, ConsistencyConfig(t=5, k=3), DB)
    assert fixed == FULL
    assert execute_plan(STONE, fixed, DB).goal_achieved


def test_correct_plan_untouched(tasks):
    cfg = ConsistencyConfig(t=5, k=3)
    for task in tasks:
        gt = list(task.ground_truth)
        assert maintain_consistency(gt, task.goal, cfg, DB) == gt


def test_diamond_pickaxe_two_windows():
    goal = Goal.obtain("diamond_pickaxe", 1)
    plan, _ = plan_backward(goal, FAULTY, DB)
    report = execute_plan(goal, plan, DB)
    assert report.first_failure.failure.kind is FailureKind.WRONG_LOCATION
    result = repair_plan(plan, goal, ConsistencyConfig(t=5, k=3), DB)
    digs = [s for s in result.plan if s.verb is StepVerb.DIG_DOWN]
    assert len(digs) >= 2
    assert execute_plan(goal, result.plan, DB).goal_achieved
    assert result.skipped == []


def test_repair_on_every_fault_task(tasks):
    cfg = ConsistencyConfig(t=5, k=3)
    for task in tasks:
        plan, _ = plan_backward(task.goal, FAULTY, DB)
        fixed = maintain_consistency(plan, task.goal, cfg, DB)
        assert execute_plan(task.goal, fixed, DB).goal_achieved, task.id
        assert edit_distance(fixed, list(task.ground_truth)) == 0, task.id


def test_window_method_never_breaks_a_good_plan(tasks):
    for seed in range(3):
        cfg = ConsistencyConfig(method="window", k=3, seed=seed)
        for task in tasks:
            gt = list(task.ground_truth)
            out = maintain_consistency(gt, task.goal, cfg, DB)
            assert execute_plan(task.goal, out, DB).goal_achieved, task.id


def test_window_repair_is_seed_deterministic():
    goal = Goal.obtain("diamond_pickaxe", 1)
    plan, _ = plan_backward(goal, FAULTY, DB)
    cfg = ConsistencyConfig(method="window", k=3, seed=4)
    assert repair_plan(plan, goal, cfg, DB) == repair_plan(plan, goal, cfg, DB)


def test_rounds_draw_fresh_windows():
    goal = Goal.obtain("iron_pickaxe", 1)
    plan, _ = plan_backward(goal, FAULTY, DB)
    one = repair_plan(plan, goal, ConsistencyConfig(method="window", seed=1), DB)
    more = repair_plan(plan, goal, ConsistencyConfig(method="window", seed=1, rounds=4), DB)
    assert more.pairs[: len(one.pairs)] == one.pairs
    assert len(more.pairs) > len(one.pairs)
