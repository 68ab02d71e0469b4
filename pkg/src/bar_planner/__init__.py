"""Backward-reasoning planner for crafting task domains."""
