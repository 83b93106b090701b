"""Planning-instance primitives shared by every searcher.

An instance is a target molecule (or task), a membership test for the set of
available building blocks, and a one-step expansion function returning at most
``k`` candidate reactions, each with a nonnegative cost and a reactant list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

DEFAULT_TOP_K = 50


@dataclass(frozen=True)
class Proposal:
    reaction_id: str
    cost: float
    reactants: tuple[str, ...]

    def __post_init__(self):
        if not self.reactants:
            raise ValueError(f"reaction {self.reaction_id!r} has no reactants")
        if not (self.cost >= 0.0) or math.isinf(self.cost):
            raise ValueError(f"reaction {self.reaction_id!r} has invalid cost {self.cost!r}")


@dataclass(frozen=True)
class ExpansionResult:
    proposals: tuple[Proposal, ...] = ()

    def __len__(self) -> int:
        return len(self.proposals)

    def __iter__(self):
        return iter(self.proposals)

    def top(self, k: int) -> "ExpansionResult":
        if len(self.proposals) <= k:
            return self
        return ExpansionResult(self.proposals[:k])


EMPTY_RESULT = ExpansionResult()


class ExpansionTable:
    """Picklable expansion function backed by a ``molecule -> proposals`` dict.

    Unknown molecules expand to the empty result (a dead end).
    """

    def __init__(self, table: Mapping[str, Sequence[Proposal]]):
        self._table = {m: ExpansionResult(tuple(ps)) for m, ps in table.items()}

    def __call__(self, molecule: str) -> ExpansionResult:
        return self._table.get(molecule, EMPTY_RESULT)

    def __contains__(self, molecule: str) -> bool:
        return molecule in self._table

    def molecules(self) -> list[str]:
        return list(self._table)

    def reactions(self) -> Iterable[tuple[str, Proposal]]:
        for mol, result in self._table.items():
            for p in result.proposals:
                yield mol, p


class AvailableSet:
    """Membership predicate over a frozen set of building blocks."""

    def __init__(self, molecules: Iterable[str]):
        self.molecules = frozenset(molecules)

    def __call__(self, molecule: str) -> bool:
        return molecule in self.molecules

    def __len__(self) -> int:
        return len(self.molecules)


@dataclass
class PlanningInstance:
    """A single planning problem.

    ``available`` and ``expand_fn`` must be pure; searchers call them freely
    and may share one instance across threads or processes.
    """

    target: str
    available: Callable[[str], bool]
    expand_fn: Callable[[str], ExpansionResult]
    name: str = ""
    k: int = DEFAULT_TOP_K
    optimal_cost: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.target:
            raise ValueError("target must be a nonempty identifier")
        if not self.name:
            self.name = self.target

    def expand(self, molecule: str) -> ExpansionResult:
        return self.expand_fn(molecule).top(self.k)

    def is_available(self, molecule: str) -> bool:
        return bool(self.available(molecule))


@dataclass(frozen=True)
class RouteStep:
    molecule: str
    reaction_id: str
    cost: float
    reactants: tuple[str, ...]


@dataclass(frozen=True)
class Route:
    """A solved plan in tree form.

    ``steps`` lists one reaction per non-available molecule occurrence, in
    pre-order: a step is followed by the sub-routes of its reactants, left to
    right. Available reactants have no step.
    """

    target: str
    steps: tuple[RouteStep, ...] = ()

    @property
    def total_cost(self) -> float:
        return sum(s.cost for s in self.steps)

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def reactions(self) -> list[str]:
        return [s.reaction_id for s in self.steps]

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "total_cost": self.total_cost,
            "length": self.length,
            "steps": [
                {"mol": s.molecule, "rxn": s.reaction_id, "cost": s.cost, "reactants": list(s.reactants)}
                for s in self.steps
            ],
        }

    def format(self) -> str:
        lines = [f"route for {self.target}: cost={self.total_cost:.6g} length={self.length}"]
        # depth is recovered from pre-order; unmatched pending entries are available leaves
        pending: list[tuple[str, int]] = [(self.target, 0)]
        for step in self.steps:
            while pending and pending[-1][0] != step.molecule:
                pending.pop()
            depth = pending.pop()[1] if pending else 0
            lines.append(f"{'  ' * depth}{step.molecule} <= {step.reaction_id} "
                         f"(cost {step.cost:.6g}) <= {', '.join(step.reactants)}")
            for r in reversed(step.reactants):
                pending.append((r, depth + 1))
        return "\n".join(lines)


class InvalidRoute(ValueError):
    pass


def route_from_choices(target: str, choice: Callable[[str], Proposal | None],
                       available: Callable[[str], bool]) -> Route:
    """Unfold a ``molecule -> proposal`` choice function into a tree-form route."""
    steps: list[RouteStep] = []
    stack = [(target, frozenset())]
    while stack:
        mol, path = stack.pop()
        if available(mol):
            continue
        if mol in path:
            raise InvalidRoute(f"cyclic choice at {mol!r}")
        p = choice(mol)
        if p is None:
            raise InvalidRoute(f"no reaction chosen for {mol!r}")
        steps.append(RouteStep(mol, p.reaction_id, p.cost, p.reactants))
        sub = path | {mol}
        for r in reversed(p.reactants):
            stack.append((r, sub))
    return Route(target, tuple(steps))


def check_route(route: Route, instance: PlanningInstance) -> None:
    """Raise :class:`InvalidRoute` unless ``route`` solves ``instance``.

    Every step must be a real proposal of the instance's expansion function and
    every leaf must be available.
    """
    if route.target != instance.target:
        raise InvalidRoute(f"route target {route.target!r} != {instance.target!r}")
    steps = iter(route.steps)
    pending = [instance.target]
    while pending:
        mol = pending.pop()
        if instance.is_available(mol):
            continue
        step = next(steps, None)
        if step is None:
            raise InvalidRoute(f"molecule {mol!r} is not available and has no reaction")
        if step.molecule != mol:
            raise InvalidRoute(f"expected a step for {mol!r}, found {step.molecule!r}")
        match = [p for p in instance.expand(mol).proposals
                 if p.reaction_id == step.reaction_id and p.reactants == step.reactants]
        if not match:
            raise InvalidRoute(f"{step.reaction_id!r} is not a proposal for {mol!r}")
        if abs(match[0].cost - step.cost) > 1e-12:
            raise InvalidRoute(f"cost mismatch on {step.reaction_id!r}")
        pending.extend(reversed(step.reactants))
    if next(steps, None) is not None:
        raise InvalidRoute("route has unused trailing steps")


def is_valid_route(route: Route, instance: PlanningInstance) -> bool:
    try:
        check_route(route, instance)
    except InvalidRoute:
        return False
    return True
