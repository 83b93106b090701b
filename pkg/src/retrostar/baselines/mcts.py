"""Monte Carlo tree search over sets of open molecules, with PUCT selection.

A state is the set of molecules still to be made. A move picks the smallest
open molecule ``m`` and one of its reactions ``(R, S)``; the next state is
``(open | S) - {m} - available``. Priors are ``exp(-cost)`` normalised over a
node's reactions. Leaves are scored by a value oracle (``exp(-sum vm)``) or,
without one, by a random rollout that earns 1 on reaching the empty state.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable

from ..instance import PlanningInstance, Proposal, Route, route_from_choices
from ..search import SearchConfig, SearchOutcome, Status
from .common import BudgetExhausted, MemoExpander


@dataclass(eq=False)
class MctsNode:
    open: frozenset[str]
    parent: "MctsNode | None" = None
    move: tuple[str, Proposal] | None = None
    prior: float = 1.0
    visits: int = 0
    value_sum: float = 0.0
    children: list["MctsNode"] = field(default_factory=list)
    expanded: bool = False
    dead: bool = False

    @property
    def terminal(self) -> bool:
        return not self.open

    @property
    def mean_value(self) -> float:
        return self.value_sum / self.visits if self.visits else 0.0

    def assigned(self) -> dict[str, Proposal]:
        """Reactions chosen on the path from the root to this node."""
        out = {}
        node = self
        while node.move is not None:
            out[node.move[0]] = node.move[1]
            node = node.parent
        return out


def priors(proposals) -> list[float]:
    if not proposals:
        return []
    lo = min(p.cost for p in proposals)
    w = [math.exp(-(p.cost - lo)) for p in proposals]
    total = sum(w)
    return [x / total for x in w]


def puct_select(node: MctsNode, c: float) -> MctsNode:
    """Child maximising ``Q + c * P * sqrt(N) / (1 + n)``; ties go to the first child."""
    sqrt_n = math.sqrt(max(node.visits, 1))
    best, best_score = None, -math.inf
    for child in node.children:
        if child.dead:
            continue
        score = child.mean_value + c * child.prior * sqrt_n / (1 + child.visits)
        if score > best_score:
            best, best_score = child, score
    return best


class MctsSearch:
    def __init__(self, instance: PlanningInstance, vm: Callable[[str], float] | None,
                 config: SearchConfig, puct_c: float, rollout_depth: int, seed: int):
        self.instance = instance
        self.vm = vm
        self.config = config
        self.puct_c = puct_c
        self.rollout_depth = rollout_depth
        self.rng = random.Random(seed)
        self.expand_fn = MemoExpander(instance, config.call_limit)
        target = instance.target
        self.root = MctsNode(frozenset() if instance.is_available(target) else frozenset([target]))

    def _moves(self, open_set: frozenset[str], assigned: dict[str, Proposal]):
        """Molecule to work on next and its admissible reactions.

        Reactions consuming an already-assigned molecule are always dropped:
        with set-valued states that is what keeps the chosen reactions acyclic.
        """
        m = min(open_set)
        blocked = set(assigned) | {m}
        props = [p for p in self.expand_fn(m).proposals if not any(r in blocked for r in p.reactants)]
        return m, props

    def _next_state(self, open_set: frozenset[str], m: str, p: Proposal) -> frozenset[str]:
        avail = self.instance.is_available
        return (open_set - {m}) | frozenset(r for r in p.reactants if not avail(r))

    def _expand(self, node: MctsNode) -> None:
        m, props = self._moves(node.open, node.assigned())
        node.expanded = True
        for p, prior in zip(props, priors(props)):
            node.children.append(MctsNode(self._next_state(node.open, m, p), node, (m, p), prior))
        if not node.children:
            self._mark_dead(node)

    def _mark_dead(self, node: MctsNode) -> None:
        node.dead = True
        parent = node.parent
        while parent is not None and parent.expanded and all(c.dead for c in parent.children):
            parent.dead = True
            parent = parent.parent

    def _route(self, assigned: dict[str, Proposal]) -> Route:
        return route_from_choices(self.instance.target, assigned.get, self.instance.is_available)

    def _evaluate(self, node: MctsNode) -> tuple[float, dict[str, Proposal] | None]:
        """Leaf value, plus the full assignment if a rollout happened to solve it."""
        if self.vm is not None:
            return math.exp(-sum(self.vm(m) for m in node.open)), None
        open_set, assigned = node.open, node.assigned()
        for _ in range(self.rollout_depth):
            m, props = self._moves(open_set, assigned)
            if not props:
                return 0.0, None
            p = self.rng.choices(props, weights=priors(props))[0]
            assigned = {**assigned, m: p}
            open_set = self._next_state(open_set, m, p)
            if not open_set:
                return 1.0, assigned
        return 0.0, None

    def _backup(self, node: MctsNode, value: float) -> None:
        while node is not None:
            node.visits += 1
            node.value_sum += value
            node = node.parent

    def run(self) -> SearchOutcome:
        root = self.root
        history = self.expand_fn.history

        def done(status, assigned=None) -> SearchOutcome:
            route = self._route(assigned) if assigned is not None else None
            return SearchOutcome(status, route, self.expand_fn.calls,
                                 route.total_cost if route else math.nan, history)

        if root.terminal:
            return done(Status.SOLVED, {})
        try:
            while not root.dead:
                node = root
                while node.expanded and not node.dead:
                    node = puct_select(node, self.puct_c)
                self._expand(node)
                for child in node.children:
                    if child.terminal:
                        return done(Status.SOLVED, child.assigned())
                if node.dead:
                    self._backup(node, 0.0)
                    continue
                value, solved = self._evaluate(node)
                if solved is not None:
                    return done(Status.SOLVED, solved)
                self._backup(node, value)
        except BudgetExhausted:
            return done(Status.LIMIT_REACHED)
        return done(Status.EXHAUSTED)


def mcts_search(instance: PlanningInstance, vm: Callable[[str], float] | None = None,
                config: SearchConfig = SearchConfig(), puct_c: float = 1.0,
                rollout_depth: int = 5, seed: int = 0) -> SearchOutcome:
    """PUCT search returning the first route found (from the tree or a rollout).

    Expansion results are memoised per molecule, so only the first query of
    each molecule counts against the call limit.
    """
    return MctsSearch(instance, vm, config, puct_c, rollout_depth, seed).run()
