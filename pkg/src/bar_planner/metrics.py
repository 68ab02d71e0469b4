"""Plan-versus-reference metrics: positional accuracy, bigram F1, edit distance."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from statistics import fmean
from typing import Hashable, Iterable, Sequence

START = object()


@dataclass(frozen=True)
class MetricResult:
    accuracy: float
    f1: float
    edit_distance: int

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "f1": self.f1, "edit_distance": self.edit_distance}


def accuracy(gen: Sequence[Hashable], gt: Sequence[Hashable]) -> float:
    """Percent of positions holding identical steps, over the longer plan."""
    n = max(len(gen), len(gt))
    if n == 0:
        return 100.0
    hits = sum(1 for a, b in zip(gen, gt) if a == b)
    return 100.0 * hits / n


def _bigrams(plan: Sequence[Hashable]) -> Counter:
    prev = [START, *plan[:-1]]
    return Counter(zip(prev, plan))


def f1(gen: Sequence[Hashable], gt: Sequence[Hashable]) -> float:
    """Bigram F1 in percent; the first step pairs with a start marker."""
    if not gen and not gt:
        return 100.0
    if not gen or not gt:
        return 0.0
    matched = sum((_bigrams(gen) & _bigrams(gt)).values())
    if matched == 0:
        return 0.0
    p = matched / len(gen)
    r = matched / len(gt)
    return 200.0 * p * r / (p + r)


def edit_distance(gen: Sequence[Hashable], gt: Sequence[Hashable]) -> int:
    """Unit-cost Levenshtein distance over whole steps."""
    prev = list(range(len(gt) + 1))
    for i, a in enumerate(gen, start=1):
        cur = [i]
        for j, b in enumerate(gt, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a != b)))
        prev = cur
    return prev[-1]


def score(gen: Sequence[Hashable], gt: Sequence[Hashable]) -> MetricResult:
    return MetricResult(accuracy(gen, gt), f1(gen, gt), edit_distance(gen, gt))


def worst_case(gt: Sequence[Hashable]) -> MetricResult:
    """Score charged for a run that produced no plan."""
    return MetricResult(0.0, 0.0, len(gt))


@dataclass(frozen=True)
class TaggedResult:
    task_id: str
    group: str
    plan_len: int
    result: MetricResult


def _means(rows: Iterable[MetricResult]) -> dict:
    rows = list(rows)
    return {
        "accuracy": fmean(r.accuracy for r in rows),
        "f1": fmean(r.f1 for r in rows),
        "edit_distance": fmean(r.edit_distance for r in rows),
        "n": len(rows),
    }


def aggregate(results: Sequence[TaggedResult], group_order: Sequence[str] = ()) -> dict:
    """Arithmetic means per group and per reference-plan length.

    Groups follow ``group_order`` first, then any others alphabetically;
    length buckets are sorted numerically.
    """
    by_group: dict[str, list] = defaultdict(list)
    by_len: dict[int, list] = defaultdict(list)
    for t in results:
        by_group[t.group].append(t.result)
        by_len[t.plan_len].append(t.result)
    names = [g for g in group_order if g in by_group]
    names += sorted(g for g in by_group if g not in names)
    return {
        "groups": {g: _means(by_group[g]) for g in names},
        "by_length": {str(n): _means(by_len[n]) for n in sorted(by_len)},
    }
