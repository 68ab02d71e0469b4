"""Exception hierarchy shared across the package."""

from __future__ import annotations


class BarError(Exception):
    """Base class for every error raised by bar_planner."""


class MalformedStep(BarError, ValueError):
    def __init__(self, text: str, reason: str) -> None:
        super().__init__(f"malformed step {text!r}: {reason}")
        self.text = text
        self.reason = reason


class MalformedGoal(BarError, ValueError):
    def __init__(self, text: str, reason: str) -> None:
        super().__init__(f"malformed goal {text!r}: {reason}")
        self.text = text
        self.reason = reason


class RecipeDbError(BarError, ValueError):
    pass


class RecipeCycle(RecipeDbError):
    def __init__(self, path: list[str]) -> None:
        super().__init__("recipe cycle: " + " -> ".join(path))
        self.path = path


class UnknownItem(RecipeDbError):
    def __init__(self, name: str) -> None:
        super().__init__(f"unknown item {name!r}")
        self.name = name


class DuplicateRecipe(RecipeDbError):
    def __init__(self, item: str, kind: str) -> None:
        super().__init__(f"duplicate {kind} recipe for {item!r}")
        self.item = item
        self.kind = kind


class NoRecipe(BarError):
    def __init__(self, item: str) -> None:
        super().__init__(f"no recipe produces {item!r}")
        self.item = item


class RemoteUnavailable(BarError):
    pass


class RemoteParseError(BarError):
    def __init__(self, raw_text: str, reason: str = "") -> None:
        super().__init__(f"could not parse remote response ({reason})" if reason else "could not parse remote response")
        self.raw_text = raw_text
        self.reason = reason


class IterationBudgetExceeded(BarError):
    pass


class DecompositionCycle(IterationBudgetExceeded):
    """A goal reappeared among its own ancestors."""


class RepairDepthExceeded(BarError):
    pass


class AnchorMismatch(BarError):
    pass


class PersistenceFailure(BarError):
    pass


class SchemaVersionMismatch(PersistenceFailure):
    pass
