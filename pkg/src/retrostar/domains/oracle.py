"""Exhaustive optimal-plan oracle used to check the searchers."""

from __future__ import annotations

import math

from ..instance import PlanningInstance, Route, RouteStep

INF = math.inf


def brute_force_optimal(instance: PlanningInstance, depth_limit: int) -> tuple[float, Route | None]:
    """Minimum total cost of any route for ``instance.target``.

    ``opt(m, d) = 0`` for available ``m``; otherwise the minimum over proposals
    of ``cost + sum(opt(r, d - 1))``, with ``+inf`` once ``d`` reaches 0. With
    nonnegative costs a cyclic route never beats the route obtained by cutting
    its cycle out, so memoising on ``(molecule, depth)`` alone is exact; the
    reconstructed route is still checked for cycles along each path, matching
    the searchers' ancestor filter.
    """
    if depth_limit < 1:
        raise ValueError("depth_limit must be >= 1")
    memo: dict[tuple[str, int], float] = {}
    expansions: dict[str, tuple] = {}

    def proposals(m: str):
        if m not in expansions:
            expansions[m] = instance.expand(m).proposals
        return expansions[m]

    def opt(m: str, d: int) -> float:
        if instance.is_available(m):
            return 0.0
        if d <= 0:
            return INF
        key = (m, d)
        if key in memo:
            return memo[key]
        memo[key] = INF  # guards self-recursion at equal depth (cannot happen, d shrinks)
        best = INF
        for p in proposals(m):
            v = p.cost
            for r in p.reactants:
                v += opt(r, d - 1)
                if v >= best:
                    break
            if v < best:
                best = v
        memo[key] = best
        return best

    cost = opt(instance.target, depth_limit)
    if cost == INF:
        return INF, None

    steps: list[RouteStep] = []

    def build(m: str, d: int, path: frozenset) -> bool:
        if instance.is_available(m):
            return True
        target = opt(m, d)
        sub = path | {m}
        for p in proposals(m):
            if any(r in sub for r in p.reactants):
                continue
            v = p.cost
            for r in p.reactants:
                v += opt(r, d - 1)
            if v != target:
                continue
            mark = len(steps)
            steps.append(RouteStep(m, p.reaction_id, p.cost, p.reactants))
            if all(build(r, d - 1, sub) for r in p.reactants):
                return True
            del steps[mark:]
        return False

    if not build(instance.target, depth_limit, frozenset()):
        raise RuntimeError("failed to reconstruct an optimal acyclic route")
    return cost, Route(instance.target, tuple(steps))
