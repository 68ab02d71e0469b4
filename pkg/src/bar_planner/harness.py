"""Experiment driver: static and memory-assisted (dynamic) runs over a task set."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import fmean
from typing import Sequence

from .consistency import (
    ConsistencyConfig,
    Insertion,
    RemoteConsistencyBackend,
    goal_of,
    repair_plan,
)
from .decomposer import Decomposer, FaultProfile, RecipeOracle, RemoteDecomposer
from .domain import (
    GROUPS,
    DecompositionResult,
    Goal,
    RecipeDb,
    Task,
    load_recipe_db_path,
    load_tasks_path,
    render_plan,
)
from .errors import BarError
from .memory import DEFAULT_THRESHOLD, StageMemoryStore
from .metrics import MetricResult, TaggedResult, aggregate, score, worst_case
from .planner import PlanningTrace, TraceEntry, normalize_plan, plan_backward
from .remote import RemoteClient, RemoteConfig
from .simulator import DETERMINISTIC, StochasticProfile, success_rate

log = logging.getLogger(__name__)


class ConfigError(BarError):
    """Invalid experiment configuration or unreadable inputs."""


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "static"
    decomposer: str = "oracle"
    endpoint: str | None = None
    timeout: float = 60.0
    fault: str | None = None
    consistency: ConsistencyConfig | None = field(default_factory=ConsistencyConfig)
    scorer: str = "simulation"
    runs: int = 10
    seed: int = 0
    threshold: float = DEFAULT_THRESHOLD
    rounds: int = 1
    tasks_path: str | None = None
    recipes_path: str | None = None
    memory_path: str | None = None
    out_dir: str | None = None
    profile: StochasticProfile = DETERMINISTIC

    def validate(self) -> None:
        if self.mode not in ("static", "dynamic"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.decomposer not in ("oracle", "remote"):
            raise ConfigError(f"unknown decomposer {self.decomposer!r}")
        if (self.decomposer == "remote" or self.scorer == "remote") and not self.endpoint:
            raise ConfigError("the remote backend needs --endpoint")
        if self.fault is not None:
            if self.decomposer != "oracle":
                raise ConfigError("fault profiles apply to the oracle decomposer only")
            try:
                FaultProfile(self.fault)
            except ValueError:
                raise ConfigError(f"unknown fault profile {self.fault!r}") from None
        if self.scorer not in ("simulation", "remote"):
            raise ConfigError(f"unknown scorer {self.scorer!r}")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")

    def echo(self) -> dict:
        cons = None
        if self.consistency is not None:
            c = self.consistency
            cons = {"method": c.method.value, "t": c.t, "k": c.k, "rounds": c.rounds}
        return {
            "mode": self.mode,
            "decomposer": self.decomposer,
            "fault": self.fault,
            "consistency": cons,
            "scorer": self.scorer,
            "runs": self.runs,
            "seed": self.seed,
            "threshold": self.threshold,
            "rounds": self.rounds,
        }


# --------------------------------------------------------------------------- single plans


@dataclass
class PlanOutcome:
    plan: list
    trace: PlanningTrace
    insertions: list


def make_decomposer(cfg: ExperimentConfig, db: RecipeDb) -> Decomposer:
    if cfg.decomposer == "remote":
        return RemoteDecomposer(RemoteClient(RemoteConfig(cfg.endpoint, cfg.timeout)), db)
    return RecipeOracle(db, cfg.fault)


def make_remote_scorer(cfg: ExperimentConfig, db: RecipeDb) -> RemoteConsistencyBackend | None:
    if cfg.scorer != "remote":
        return None
    return RemoteConsistencyBackend(RemoteClient(RemoteConfig(cfg.endpoint, cfg.timeout)), db)


def plan_goal(
    goal: Goal,
    decomposer: Decomposer,
    db: RecipeDb,
    consistency: ConsistencyConfig | None = None,
    memory: StageMemoryStore | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    remote: RemoteConsistencyBackend | None = None,
) -> PlanOutcome:
    """Backward planning followed by consistency repair when configured."""
    plan, trace = plan_backward(goal, decomposer, db, memory, threshold)
    insertions: list = []
    if consistency is not None:
        repaired = repair_plan(plan, goal, consistency, db, remote)
        plan, insertions = repaired.plan, repaired.insertions
    return PlanOutcome(plan, trace, insertions)


def patch_trace(trace: PlanningTrace, insertions: Sequence[Insertion], db: RecipeDb) -> PlanningTrace:
    """Fold repair insertions back into the decompositions they fixed.

    A step inserted to enable step S becomes an extra sub-goal of every
    trace entry whose step is S, so memory holds the repaired decomposition.
    """
    extra: dict = {}
    for ins in insertions:
        extra.setdefault(ins.enabled.key, []).append(goal_of(ins.step, db))
    entries = []
    for e in trace.entries:
        subs = list(e.result.sub_goals)
        for g in extra.get(e.result.step.key, ()):
            if g not in subs:
                subs.append(g)
        result = DecompositionResult(e.result.step, tuple(subs), e.result.thought)
        entries.append(TraceEntry(e.goal, result))
    return PlanningTrace(entries)


# --------------------------------------------------------------------------- experiments


@dataclass
class RunRecord:
    task: Task
    plans: list          # one per run; None when planning failed
    traces: list
    metrics: list
    failures: int
    elapsed_ms: float
    rates: list = field(default_factory=list)      # mean success rate per phase
    run_rates: list = field(default_factory=list)  # latest phase, one per run

    def mean(self) -> MetricResult:
        return MetricResult(
            fmean(m.accuracy for m in self.metrics),
            fmean(m.f1 for m in self.metrics),
            fmean(m.edit_distance for m in self.metrics),
        )


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: list
    phase_rates: list = field(default_factory=list)

    def tagged(self) -> list[TaggedResult]:
        return [TaggedResult(r.task.id, r.task.group, len(r.task.ground_truth), r.mean())
                for r in self.records]

    @property
    def failures(self) -> int:
        return sum(r.failures for r in self.records)

    def group_means(self) -> dict:
        return aggregate(self.tagged(), GROUPS)["groups"]

    def to_json(self) -> dict:
        agg = aggregate(self.tagged(), GROUPS)
        doc = {
            "config": self.config.echo(),
            "seed": self.config.seed,
            "tasks": len(self.records),
            "failed_runs": self.failures,
            "groups": agg["groups"],
            "by_length": agg["by_length"],
        }
        if self.phase_rates:
            for g, vals in doc["groups"].items():
                for p, rates in enumerate(self.phase_rates, start=1):
                    vals[f"success_phase{p}"] = rates[g]
        return doc

    def csv_text(self) -> str:
        buf = io.StringIO()
        cols = ["task_id", "group", "plan_len", "accuracy", "f1", "edit_distance"]
        nphase = len(self.phase_rates)
        cols += [f"success_phase{p}" for p in range(1, nphase + 1)]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.records:
            m = r.mean()
            row = [r.task.id, r.task.group, len(r.task.ground_truth),
                   _num(m.accuracy), _num(m.f1), _num(m.edit_distance)]
            row += [_num(x) for x in r.rates]
            w.writerow(row)
        return buf.getvalue()

    def timing(self) -> dict:
        return {r.task.id: round(r.elapsed_ms, 3) for r in self.records}

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(self.csv_text(), encoding="utf-8")
        (out / "report.json").write_text(json.dumps(self.to_json(), indent=2, sort_keys=False) + "\n",
                                         encoding="utf-8")
        (out / "timing.json").write_text(json.dumps(self.timing(), indent=2) + "\n", encoding="utf-8")
        plans = out / "plans"
        plans.mkdir(exist_ok=True)
        for r in self.records:
            plan = next((p for p in r.plans if p is not None), [])
            (plans / f"{r.task.id}.txt").write_text(render_plan(plan) + "\n", encoding="utf-8")


def _num(x: float) -> str:
    return f"{round(x, 4):g}"


def _load(cfg: ExperimentConfig) -> tuple[RecipeDb, list[Task]]:
    cfg.validate()
    try:
        db = load_recipe_db_path(cfg.recipes_path)
        tasks = load_tasks_path(cfg.tasks_path, db)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load inputs: {exc}") from exc
    return db, tasks


def _run_seed(cfg: ExperimentConfig, r: int) -> ConsistencyConfig | None:
    if cfg.consistency is None:
        return None
    return replace(cfg.consistency, seed=cfg.seed + r)


def _plan_phase(cfg: ExperimentConfig, db: RecipeDb, tasks: Sequence[Task],
                memory: StageMemoryStore | None) -> list[RunRecord]:
    decomposer = make_decomposer(cfg, db)
    remote = make_remote_scorer(cfg, db)
    records = []
    for task in tasks:
        t0 = time.perf_counter()
        plans, traces, metrics, failures = [], [], [], 0
        gt = normalize_plan(task.ground_truth, db)
        for r in range(cfg.runs):
            try:
                outcome = plan_goal(task.goal, decomposer, db, _run_seed(cfg, r), memory,
                                    cfg.threshold, remote)
            except BarError as exc:
                log.warning("task %s run %d failed: %s", task.id, r, exc)
                failures += 1
                plans.append(None)
                traces.append(None)
                metrics.append(worst_case(gt))
                continue
            plans.append(outcome.plan)
            traces.append(patch_trace(outcome.trace, outcome.insertions, db))
            metrics.append(score(normalize_plan(outcome.plan, db), gt))
        elapsed = (time.perf_counter() - t0) * 1000.0
        records.append(RunRecord(task, plans, traces, metrics, failures, elapsed))
    return records


def run_static(cfg: ExperimentConfig) -> ExperimentReport:
    db, tasks = _load(cfg)
    return ExperimentReport(cfg, _plan_phase(cfg, db, tasks, None))


def _execute_phase(cfg: ExperimentConfig, db: RecipeDb, records: Sequence[RunRecord]) -> dict:
    """Per-run success rates (``runs`` executions per distinct plan); group means."""
    by_group: dict[str, list] = {}
    for rec in records:
        cache: dict = {}
        rates = []
        for plan in rec.plans:
            if plan is None:
                rates.append(0.0)
                continue
            key = tuple(plan)
            if key not in cache:
                cache[key] = success_rate(rec.task.goal, plan, db, cfg.profile, cfg.runs, cfg.seed)
            rates.append(cache[key])
        rec.run_rates = rates
        rec.rates = [fmean(rates)]
        by_group.setdefault(rec.task.group, []).append(rec.rates[0])
    return {g: fmean(v) for g, v in sorted(by_group.items(), key=lambda kv: GROUPS.index(kv[0])
                                               if kv[0] in GROUPS else len(GROUPS))}


def _record(memory: StageMemoryStore, records: Sequence[RunRecord]) -> None:
    for rec in records:
        for trace, rate in zip(rec.traces, rec.run_rates):
            if trace is not None:
                memory.record(trace, rate, rec.task.id)


def run_dynamic(cfg: ExperimentConfig, memory: StageMemoryStore | None = None) -> ExperimentReport:
    """Plan, execute, record into memory, then replan with memory hints.

    ``rounds`` repeats the record/replan cycle. The reported metrics are
    those of the last phase; success rates are reported for every phase.
    """
    db, tasks = _load(cfg)
    memory = memory if memory is not None else StageMemoryStore()
    records = _plan_phase(cfg, db, tasks, None)
    phase_rates = [_execute_phase(cfg, db, records)]
    all_rates = [[rec.rates[0]] for rec in records]
    for _ in range(cfg.rounds):
        _record(memory, records)
        records = _plan_phase(cfg, db, tasks, memory)
        phase_rates.append(_execute_phase(cfg, db, records))
        for acc, rec in zip(all_rates, records):
            acc.append(rec.rates[0])
    for rec, rates in zip(records, all_rates):
        rec.rates = rates
    if cfg.memory_path:
        memory.save(cfg.memory_path)
    return ExperimentReport(cfg, records, phase_rates=phase_rates)


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    if cfg.mode == "dynamic":
        return run_dynamic(cfg)
    return run_static(cfg)
