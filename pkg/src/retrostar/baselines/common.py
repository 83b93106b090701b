"""Helpers shared by the baseline searchers."""

from __future__ import annotations

import sys
from contextlib import contextmanager

from ..instance import ExpansionResult, PlanningInstance


class BudgetExhausted(Exception):
    pass


class MemoExpander:
    """Expansion model wrapper that charges one call per distinct molecule."""

    def __init__(self, instance: PlanningInstance, limit: int):
        self.instance = instance
        self.limit = limit
        self.calls = 0
        self.cache: dict[str, ExpansionResult] = {}
        self.history: list[tuple[int, str, float]] = []

    def __call__(self, molecule: str) -> ExpansionResult:
        if molecule in self.cache:
            return self.cache[molecule]
        if self.calls >= self.limit:
            raise BudgetExhausted
        result = self.instance.expand(molecule)
        self.calls += 1
        self.history.append((self.calls, molecule, 0.0))
        self.cache[molecule] = result
        return result


@contextmanager
def recursion_limit(limit: int):
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, limit))
    try:
        yield
    finally:
        sys.setrecursionlimit(old)
