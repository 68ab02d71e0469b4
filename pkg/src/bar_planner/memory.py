"""Stage memory: per-goal decompositions stamped with plan success rates."""

from __future__ import annotations

import json
import logging
import os
import tempfile
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

from .domain import (
    DecompositionResult,
    Goal,
    RecipeDb,
    parse_goal,
    parse_step,
    render_goal,
    render_step,
    sub_goal_text,
)
from .errors import MalformedGoal, MalformedStep, PersistenceFailure, SchemaVersionMismatch

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_THRESHOLD = 0.3


def goal_key(goal: Goal, item_only: bool = False) -> str:
    """Canonical, verb-insensitive key: ``Obtain 1 iron_pickaxe`` / ``Dig down with t``."""
    if item_only and goal.is_obtain:
        return f"Obtain * {goal.item}"
    return render_goal(goal)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class StageMemoryEntry:
    goal: Goal
    decomposition: DecompositionResult
    success_rate: float
    source_task: str
    recorded_at: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.success_rate <= 1.0:
            raise ValueError(f"success rate {self.success_rate} outside [0, 1]")

    @property
    def key(self) -> str:
        return goal_key(self.goal)

    def to_json(self) -> dict:
        return {
            "goal": render_goal(self.goal),
            "step": render_step(self.decomposition.step),
            "sub_goals": [sub_goal_text(g) for g in self.decomposition.sub_goals],
            "success_rate": self.success_rate,
            "source_task": self.source_task,
            "recorded_at": self.recorded_at,
        }

    @classmethod
    def from_json(cls, doc: dict, db: RecipeDb | None = None) -> StageMemoryEntry:
        decomposition = DecompositionResult(
            parse_step(doc["step"], db),
            tuple(parse_goal(g, db) for g in doc["sub_goals"]),
        )
        return cls(parse_goal(doc["goal"], db), decomposition, float(doc["success_rate"]),
                   str(doc.get("source_task", "")), str(doc.get("recorded_at", "")))


class StageMemoryStore:
    """Multimap from goal key to entries.

    ``item_only`` loosens matching to the goal's item, ignoring quantity.
    """

    def __init__(self, entries: Iterable[StageMemoryEntry] = (), item_only: bool = False,
                 clock: Callable[[], str] = _utc_now) -> None:
        self.entries: list[StageMemoryEntry] = list(entries)
        self.item_only = item_only
        self.clock = clock
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StageMemoryStore):
            return NotImplemented
        return self.entries == other.entries

    def _same(self, a: StageMemoryEntry, goal: Goal, result: DecompositionResult) -> bool:
        return a.goal == goal and a.decomposition == result

    def add(self, goal: Goal, result: DecompositionResult, success_rate: float,
            source_task: str = "") -> None:
        """Insert one decomposition; an identical one keeps the larger rate."""
        with self._lock:
            for i, e in enumerate(self.entries):
                if self._same(e, goal, result):
                    if success_rate > e.success_rate:
                        self.entries[i] = StageMemoryEntry(goal, result, success_rate,
                                                           source_task, self.clock())
                    return
            self.entries.append(StageMemoryEntry(goal, result, success_rate, source_task, self.clock()))

    def record(self, trace: Iterable, success_rate: float, task_id: str = "") -> StageMemoryStore:
        """Stamp every (goal, decomposition) of a planning trace with the plan's rate."""
        for entry in trace:
            self.add(entry.goal, entry.result, success_rate, task_id)
        return self

    def retrieve(self, goal: Goal, threshold: float = DEFAULT_THRESHOLD) -> DecompositionResult | None:
        """Best decomposition for ``goal`` with rate >= threshold (latest wins ties)."""
        key = goal_key(goal, self.item_only)
        best = None
        best_rank = None
        for seq, e in enumerate(self.entries):
            if goal_key(e.goal, self.item_only) != key or e.success_rate < threshold:
                continue
            rank = (e.success_rate, e.recorded_at, seq)
            if best_rank is None or rank > best_rank:
                best, best_rank = e, rank
        return None if best is None else best.decomposition

    # persistence

    def dumps(self) -> str:
        doc = {"version": SCHEMA_VERSION, "entries": [e.to_json() for e in self.entries]}
        return json.dumps(doc, indent=2) + "\n"

    def save(self, path: str | Path) -> None:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(self.dumps())
            os.replace(tmp, path)
        except OSError as exc:
            raise PersistenceFailure(f"cannot write {path}: {exc}") from exc

    @classmethod
    def loads(cls, text: str, db: RecipeDb | None = None, item_only: bool = False) -> StageMemoryStore:
        if not text.strip():
            return cls(item_only=item_only)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise PersistenceFailure(f"memory file is not JSON: {exc}") from exc
        if not isinstance(doc, dict) or "entries" not in doc:
            raise PersistenceFailure("memory file lacks an 'entries' array")
        if doc.get("version") != SCHEMA_VERSION:
            raise SchemaVersionMismatch(
                f"memory schema version {doc.get('version')!r}, expected {SCHEMA_VERSION}")
        entries = []
        for raw in doc["entries"]:
            try:
                entries.append(StageMemoryEntry.from_json(raw, db))
            except (MalformedGoal, MalformedStep, KeyError, TypeError, ValueError) as exc:
                log.warning("dropping memory entry %r: %s", raw, exc)
        return cls(entries, item_only=item_only)

    @classmethod
    def load(cls, path: str | Path, db: RecipeDb | None = None, item_only: bool = False) -> StageMemoryStore:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise PersistenceFailure(f"cannot read {path}: {exc}") from exc
        return cls.loads(text, db, item_only)
