from pathlib import Path

import pytest

from bar_planner.decomposer import RecipeOracle
from bar_planner.domain import default_recipe_db, load_tasks_path, parse_plan

GOLDEN = Path(__file__).parent / "golden"

STONE_PLAN_TEXT = """1. Mine 3 log with barehand
2. Craft 9 planks
3. Craft 2 stick
4. Craft 1 crafting_table
5. Craft 1 wooden_pickaxe
6. Dig down with wooden_pickaxe
7. Mine 3 stone with wooden_pickaxe"""


@pytest.fixture(scope="session")
def db():
    return default_recipe_db()


@pytest.fixture(scope="session")
def tasks(db):
    return load_tasks_path(None, db)


@pytest.fixture(scope="session")
def oracle(db):
    return RecipeOracle(db)


@pytest.fixture
def stone_plan(db):
    return parse_plan(STONE_PLAN_TEXT, db)


def pytest_terminal_summary(terminalreporter):
    rows = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            name = nodeid.split("::")[-1].removeprefix("test_criterion_")
            if status != "passed" or name not in rows:
                rows[name] = "PASS" if status == "passed" else "FAIL"
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(rows):
        num, _, label = name.partition("_")
        terminalreporter.write_line(f"criterion {int(num):>2} {rows[name]}  {label.replace('_', ' ')}")
