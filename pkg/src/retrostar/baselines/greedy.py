"""Greedy depth-first search: always try the cheapest reaction first."""

from __future__ import annotations

from ..instance import PlanningInstance, Route, RouteStep
from ..search import SearchConfig, SearchOutcome, Status
from .common import BudgetExhausted, MemoExpander, recursion_limit


def greedy_dfs(instance: PlanningInstance, config: SearchConfig = SearchConfig()) -> SearchOutcome:
    """Depth-first descent taking reactions in order of increasing cost.

    Backtracks out of dead ends and (with the cycle filter) out of reactions
    that would re-derive a molecule already on the current path.
    """
    expander = MemoExpander(instance, config.call_limit)

    def solve(mol: str, path: frozenset) -> list[RouteStep] | None:
        if instance.is_available(mol):
            return []
        if mol in path:
            return None
        props = sorted(expander(mol).proposals, key=lambda p: p.cost)
        sub_path = path | {mol}
        for p in props:
            if config.cycle_filter and any(r in sub_path for r in p.reactants):
                continue
            steps = [RouteStep(mol, p.reaction_id, p.cost, p.reactants)]
            for r in p.reactants:
                sub = solve(r, sub_path)
                if sub is None:
                    break
                steps.extend(sub)
            else:
                return steps
        return None

    try:
        with recursion_limit(4 * config.call_limit + 1000):
            steps = solve(instance.target, frozenset())
    except BudgetExhausted:
        return SearchOutcome(Status.LIMIT_REACHED, None, expander.calls, float("nan"), expander.history)
    if steps is None:
        return SearchOutcome(Status.EXHAUSTED, None, expander.calls, float("inf"), expander.history)
    route = Route(instance.target, tuple(steps))
    return SearchOutcome(Status.SOLVED, route, expander.calls, route.total_cost, expander.history)
