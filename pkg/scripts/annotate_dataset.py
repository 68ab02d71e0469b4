"""Write the bundled task dataset with reference plans.

Reference plans are derived straight from the recipe JSON by a recursive
depth-first walk over the item graph, independent of the package's planner:

* an item's requirements are visited in recipe order (inputs, station,
  fuel for crafted/smelted items; tool, then the dig-down that reaches its
  layer for mined items) and the item is emitted after them;
* a dig-down needs its tool and every surface resource of the task first;
* quantities pool all demand for an item into a single step.

Usage: python3 scripts/annotate_dataset.py [--recipes F] [--out F] [--check]
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "src" / "bar_planner" / "data"

TASKS = {
    "stone": ["collect 3 stone", "stone_pickaxe", "stone_axe", "stone_shovel", "stone_hoe",
              "stone_sword", "furnace", "lever", "smooth_stone", "charcoal", "smooth_stone_slab"],
    "iron": ["iron_ingot", "iron_pickaxe", "iron_axe", "iron_shovel", "iron_hoe", "iron_sword",
             "iron_helmet", "iron_chestplate", "iron_leggings", "iron_boots", "bucket", "shears",
             "iron_bars", "iron_door", "iron_trapdoor", "cauldron", "minecart", "rail",
             "lantern", "anvil", "hopper_minecart"],
    "diamond": ["collect 1 diamond", "diamond_pickaxe", "diamond_axe", "diamond_shovel",
                "diamond_hoe", "diamond_sword", "diamond_helmet"],
    "redstone": ["collect 1 redstone", "redstone_torch", "compass", "piston", "dropper",
                 "repeater", "activator_rail"],
    "gold": ["collect 1 gold_ingot", "golden_pickaxe", "golden_axe", "golden_shovel",
             "golden_hoe", "golden_sword", "golden_helmet"],
}


class Annotator:
    def __init__(self, doc: dict) -> None:
        self.tools = doc["tool_order"]
        self.recipes = {r["output"]: r for r in doc["recipes"]}

    def layer(self, item: str) -> int:
        r = self.recipes[item]
        if r["kind"] != "mine" or r["location"] != "below_ground":
            return 0
        return self.tools.index(r["min_tool"]) + 1

    def requirements(self, node: tuple, surface: list) -> list:
        kind, name = node
        if kind == "dig":
            return [("item", name)] + [("item", s) for s in surface]
        r = self.recipes[name]
        if r["kind"] == "mine":
            reqs = [("item", r["min_tool"])] if r["min_tool"] else []
            if self.layer(name):
                reqs.append(("dig", self.tools[self.layer(name) - 1]))
            return reqs
        reqs = [("item", i["item"]) for i in r["inputs"]]
        if r["station"]:
            reqs.append(("item", r["station"]))
        if r["fuel"]:
            reqs.append(("item", r["fuel"]["item"]))
        return reqs

    def order(self, item: str) -> list:
        # first pass: which surface resources does the task touch at all
        seen: set = set()

        def collect(node):
            if node in seen:
                return
            seen.add(node)
            for req in self.requirements(node, []):
                collect(req)

        collect(("item", item))
        surface = sorted(n for k, n in seen
                         if k == "item" and self.recipes[n]["kind"] == "mine"
                         and self.recipes[n]["location"] == "above_ground")
        emitted: list = []
        done: set = set()

        def visit(node):
            if node in done:
                return
            done.add(node)
            for req in self.requirements(node, surface):
                visit(req)
            emitted.append(node)

        visit(("item", item))
        return emitted

    def annotate(self, item: str, qty: int) -> list[str]:
        nodes = self.order(item)
        need = {item: qty}
        amount = {}
        for kind, name in reversed(nodes):
            if kind == "dig":
                continue
            r = self.recipes[name]
            n = need.get(name, 0) or 1
            amount[name] = n
            if r["kind"] == "mine":
                continue
            batches = math.ceil(n / r["count"])
            for i in r["inputs"]:
                need[i["item"]] = need.get(i["item"], 0) + batches * i["count"]
            if r["fuel"]:
                f = r["fuel"]["item"]
                need[f] = need.get(f, 0) + batches * r["fuel"]["count"]
        lines = []
        for kind, name in nodes:
            if kind == "dig":
                lines.append(f"Dig down with {name}")
                continue
            r = self.recipes[name]
            if r["kind"] == "mine":
                lines.append(f"Mine {amount[name]} {name} with {r['min_tool'] or 'barehand'}")
            else:
                verb = "Craft" if r["kind"] == "craft" else "Smelt"
                lines.append(f"{verb} {amount[name]} {name}")
        return lines


def build(doc: dict) -> list[dict]:
    ann = Annotator(doc)
    records = []
    for group, specs in TASKS.items():
        for n, spec in enumerate(specs, start=1):
            if spec.startswith("collect "):
                _, qty, item = spec.split()
                goal = spec
            else:
                qty, item = "1", spec
                goal = f"obtain 1 {item}"
            records.append({
                "id": f"{group}-{n:02d}-{item}",
                "group": group,
                "goal": goal,
                "ground_truth": ann.annotate(item, int(qty)),
            })
    return records


def render(records: list[dict]) -> str:
    return json.dumps(records, indent=2) + "\n"


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--recipes", type=Path, default=DATA / "recipes.json")
    ap.add_argument("--out", type=Path, default=DATA / "tasks.json")
    ap.add_argument("--check", action="store_true", help="compare with --out instead of writing")
    args = ap.parse_args(argv)
    text = render(build(json.loads(args.recipes.read_text())))
    if args.check:
        same = args.out.exists() and args.out.read_text() == text
        print("up to date" if same else "out of date")
        return 0 if same else 1
    args.out.write_text(text)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
