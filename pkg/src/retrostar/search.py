"""Best-first AND-OR search loop: select, expand, update, halt."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

from .instance import PlanningInstance, Route
from .tree import INF, EmptyFrontier, SearchTree

log = logging.getLogger(__name__)


class HaltMode(str, enum.Enum):
    FIRST_SOLUTION = "first"
    OPTIMAL = "optimal"


class Status(str, enum.Enum):
    SOLVED = "solved"
    EXHAUSTED = "exhausted"
    LIMIT_REACHED = "limit"


@dataclass(frozen=True)
class SearchConfig:
    call_limit: int = 500
    halt_mode: HaltMode = HaltMode.FIRST_SOLUTION
    cycle_filter: bool = True

    def __post_init__(self):
        if self.call_limit < 1:
            raise ValueError("call_limit must be >= 1")
        object.__setattr__(self, "halt_mode", HaltMode(self.halt_mode))


@dataclass
class SearchOutcome:
    status: Status
    route: Route | None
    calls_used: int
    best_root_rn: float
    iterations_log: list[tuple[int, str, float]] = field(default_factory=list)
    # only meaningful under optimal halting: True when the halting test passed
    # before the budget ran out
    optimal_proven: bool = False

    @property
    def solved(self) -> bool:
        return self.status is Status.SOLVED


def zero_oracle(_molecule: str) -> float:
    return 0.0


def select_next(tree: SearchTree) -> int:
    """Frontier node with the smallest V_t; ties go to the lowest node id."""
    top = tree.frontier_peek()
    if top is None:
        raise EmptyFrontier("no unexpanded, unavailable molecule left")
    return top[0]


def _optimal_halt(tree: SearchTree) -> bool:
    root = tree.root_node
    if not root.is_solved:
        return False
    top = tree.frontier_peek()
    bound = INF if top is None else top[1]
    found = root.solved_cost
    return found <= bound or math.isclose(found, bound, rel_tol=1e-12, abs_tol=1e-12)


def run_search(instance: PlanningInstance, vm: Callable[[str], float] = zero_oracle,
               config: SearchConfig = SearchConfig()) -> SearchOutcome:
    """Plan for ``instance.target``, calling the expansion model once per iteration.

    First-solution mode stops as soon as the root is solved. Optimal mode keeps
    going until the cheapest found route costs no more than the smallest V_t
    on the frontier, which with a lower-bounding ``vm`` proves optimality.
    """
    tree = SearchTree(instance.target, instance.is_available, vm, config.cycle_filter)
    root = tree.root_node
    calls = 0
    history: list[tuple[int, str, float]] = []

    def outcome(status: Status, proven: bool = False) -> SearchOutcome:
        route = tree.extract_best_route() if status is Status.SOLVED else None
        return SearchOutcome(status, route, calls, root.rn, history, proven)

    while True:
        if root.is_solved:
            if config.halt_mode is HaltMode.FIRST_SOLUTION:
                return outcome(Status.SOLVED)
            if _optimal_halt(tree):
                return outcome(Status.SOLVED, proven=True)
        top = tree.frontier_peek()
        # an infinite minimum means every open plan runs into a dead end
        if top is None or top[1] == INF:
            if root.is_solved:
                return outcome(Status.SOLVED, proven=True)
            return outcome(Status.EXHAUSTED)
        if calls >= config.call_limit:
            if root.is_solved:
                return outcome(Status.SOLVED)
            return outcome(Status.LIMIT_REACHED)
        m, vt = top
        molecule = tree[m].molecule
        result = instance.expand(molecule)
        calls += 1
        history.append((calls, molecule, vt))
        log.debug("iter %d: expand %s (V_t=%.6g, %d proposals)", calls, molecule, vt, len(result))
        tree.expand(m, result)
        tree.update(m)


def verify_admissible_halt(outcome: SearchOutcome, optimal_cost: float, tol: float = 1e-9) -> bool:
    """True iff the outcome's route cost matches the known optimum."""
    if outcome.route is None:
        return False
    return abs(outcome.route.total_cost - optimal_cost) <= tol
