"""Command-line entry point: ``bar plan | run | eval | simulate``.

Exit codes: 0 success, 1 simulated goal not achieved, 2 configuration or
input errors, 3 planning failures (no recipe, unreachable remote, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .consistency import ConsistencyConfig
from .domain import load_recipe_db_path, parse_goal, parse_plan, render_plan
from .errors import BarError
from .harness import ConfigError, ExperimentConfig, make_decomposer, make_remote_scorer, plan_goal, run_experiment
from .metrics import score
from .planner import normalize_plan
from .simulator import ExecutionMode, StochasticProfile, execute_plan

log = logging.getLogger("bar_planner")

EXIT_OK, EXIT_NOT_ACHIEVED, EXIT_CONFIG, EXIT_PLANNING = 0, 1, 2, 3


def _consistency(args: argparse.Namespace, seed: int = 0) -> ConsistencyConfig | None:
    if args.consistency == "off":
        return None
    return ConsistencyConfig(method=args.consistency, t=args.t, k=args.k, seed=seed,
                             rounds=args.consistency_rounds)


def _add_planning_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--recipes", help="recipe database JSON (default: bundled)")
    p.add_argument("--consistency", choices=["scoring", "window", "off"], default="scoring")
    p.add_argument("-t", type=int, default=5, help="score threshold for anchor steps (default 5)")
    p.add_argument("-k", type=int, default=3, help="anchor window length (default 3)")
    p.add_argument("--consistency-rounds", type=int, default=1)
    p.add_argument("--decomposer", choices=["oracle", "remote"], default="oracle")
    p.add_argument("--endpoint", help="remote completion endpoint URL")
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--scorer", choices=["simulation", "remote"], default="simulation")
    p.add_argument("--fault", choices=["omit-digdown"], help="inject a decomposer defect")
    p.add_argument("--seed", type=int, default=0)


def _parse_yield(specs: list[str] | None) -> dict:
    out = {}
    for spec in specs or ():
        item, _, p = spec.partition("=")
        try:
            out[item] = float(p)
        except ValueError:
            raise ConfigError(f"bad --mine-yield {spec!r}, expected item=probability") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bar", description="Backward-reasoning crafting planner")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan one goal and print the numbered plan")
    p.add_argument("--goal", required=True, help='e.g. "collect 3 stone"')
    _add_planning_flags(p)

    r = sub.add_parser("run", help="run an experiment over a task set")
    r.add_argument("--mode", choices=["static", "dynamic"], default="static")
    r.add_argument("--tasks", help="task dataset JSON (default: bundled)")
    r.add_argument("--runs", type=int, default=10)
    r.add_argument("--memory", help="stage memory file (dynamic; default OUT/memory.json)")
    r.add_argument("--threshold", type=float, default=0.3)
    r.add_argument("--rounds", type=int, default=1, help="record/replan cycles (dynamic)")
    r.add_argument("--out", required=True, help="output directory")
    _add_planning_flags(r)

    e = sub.add_parser("eval", help="score a plan file against a reference plan file")
    e.add_argument("--gen", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--recipes")

    s = sub.add_parser("simulate", help="execute a plan file and print a JSON report")
    s.add_argument("--goal", required=True)
    s.add_argument("--plan", required=True)
    s.add_argument("--recipes")
    s.add_argument("--mode", choices=["strict", "skip"], default="strict")
    s.add_argument("--mine-yield", action="append", metavar="ITEM=P")
    s.add_argument("--seed", type=int, default=0)
    return ap


def _config(args: argparse.Namespace) -> ExperimentConfig:
    memory = args.memory
    if args.mode == "dynamic" and memory is None:
        memory = str(Path(args.out) / "memory.json")
    return ExperimentConfig(
        mode=args.mode,
        decomposer=args.decomposer,
        endpoint=args.endpoint,
        timeout=args.timeout,
        fault=args.fault,
        consistency=_consistency(args, args.seed),
        scorer=args.scorer,
        runs=args.runs,
        seed=args.seed,
        threshold=args.threshold,
        rounds=args.rounds,
        tasks_path=args.tasks,
        recipes_path=args.recipes,
        memory_path=memory,
        out_dir=args.out,
    )


def cmd_plan(args: argparse.Namespace) -> int:
    db = load_recipe_db_path(args.recipes)
    goal = parse_goal(args.goal, db)
    cfg = ExperimentConfig(decomposer=args.decomposer, endpoint=args.endpoint, timeout=args.timeout,
                           fault=args.fault, scorer=args.scorer)
    cfg.validate()
    outcome = plan_goal(goal, make_decomposer(cfg, db), db, _consistency(args, args.seed),
                        remote=make_remote_scorer(cfg, db))
    print(render_plan(outcome.plan))
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config(args)
    report = run_experiment(cfg)
    report.write(args.out)
    groups = report.group_means()
    for g, m in groups.items():
        line = f"{g:<9} n={m['n']:<3} acc={m['accuracy']:.2f} f1={m['f1']:.2f} ed={m['edit_distance']:.2f}"
        for p, rates in enumerate(report.phase_rates, start=1):
            line += f" success{p}={rates[g]:.3f}"
        print(line)
    print(f"wrote {Path(args.out) / 'report.csv'} and report.json")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    db = load_recipe_db_path(args.recipes)
    gen = normalize_plan(parse_plan(Path(args.gen).read_text(encoding="utf-8"), db), db)
    gt = normalize_plan(parse_plan(Path(args.gt).read_text(encoding="utf-8"), db), db)
    print(json.dumps(score(gen, gt).as_dict(), indent=2))
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    db = load_recipe_db_path(args.recipes)
    goal = parse_goal(args.goal, db)
    plan = parse_plan(Path(args.plan).read_text(encoding="utf-8"), db)
    profile = StochasticProfile(_parse_yield(args.mine_yield), args.seed)
    mode = ExecutionMode.STRICT if args.mode == "strict" else ExecutionMode.SKIP_FAILURES
    report = execute_plan(goal, plan, db, profile, mode)
    print(report.dumps())
    return EXIT_OK if report.goal_achieved else EXIT_NOT_ACHIEVED


COMMANDS = {"plan": cmd_plan, "run": cmd_run, "eval": cmd_eval, "simulate": cmd_simulate}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BarError as exc:
        print(f"planning failed: {exc}", file=sys.stderr)
        return EXIT_PLANNING


if __name__ == "__main__":
    sys.exit(main())
