"""Synthetic hierarchical task-planning instances.

A task is completed by any one of its methods; a method has a cost and a list
of subtasks that must all be completed. Subtasks are primitive (directly
executable, i.e. available) with probability ``primitive_prob``, otherwise they
are compound tasks one level further down. Tasks at the last level only get
primitive subtasks, so every generated instance is solvable and acyclic.

Task ids look like ``h7/T12@r3``: instance seed, task index and remaining
decomposition depth. Primitives look like ``h7/P40``.
"""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass

from ..instance import AvailableSet, ExpansionTable, PlanningInstance, Proposal
from .oracle import brute_force_optimal
from .routes import RouteDataset, extract_route_dataset

# Committed seed sets: benchmarks run on TEST_SEEDS, value models are fit on
# TRAIN_SEEDS. Instance ids embed the seed, so the two never share a task.
TEST_SEEDS = tuple(range(200))
TRAIN_SEEDS = tuple(range(1000, 1020))


@dataclass(frozen=True)
class HtnParams:
    rng_seed: int = 0
    depth: int = 5
    or_branch: tuple[int, int] = (2, 3)
    and_branch: tuple[int, int] = (2, 3)
    primitive_prob: float = 0.3
    cost_range: tuple[float, float] = (1.0, 10.0)

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        for name in ("or_branch", "and_branch"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ValueError(f"{name} must be a positive range, got {(lo, hi)}")
        lo, hi = self.cost_range
        if lo < 0 or hi < lo:
            raise ValueError(f"cost_range must be a nonnegative range, got {(lo, hi)}")
        if not 0.0 <= self.primitive_prob <= 1.0:
            raise ValueError("primitive_prob must lie in [0, 1]")

    def with_seed(self, seed: int) -> "HtnParams":
        return HtnParams(seed, self.depth, self.or_branch, self.and_branch,
                         self.primitive_prob, self.cost_range)


def generate_htn_table(params: HtnParams) -> tuple[str, dict[str, list[Proposal]], set[str]]:
    """Build the method table; returns ``(root task, table, primitives)``."""
    rng = random.Random(params.rng_seed)
    prefix = f"h{params.rng_seed}"
    table: dict[str, list[Proposal]] = {}
    primitives: set[str] = set()
    counter = {"task": 0, "prim": 0, "method": 0}

    def new_task(level: int) -> str:
        tid = f"{prefix}/T{counter['task']}@r{level}"
        counter["task"] += 1
        return tid

    def new_prim() -> str:
        pid = f"{prefix}/P{counter['prim']}"
        counter["prim"] += 1
        primitives.add(pid)
        return pid

    root = new_task(params.depth)
    queue = [(root, params.depth)]
    lo_c, hi_c = params.cost_range
    while queue:
        task, level = queue.pop(0)
        methods = []
        for _ in range(rng.randint(*params.or_branch)):
            cost = round(rng.uniform(lo_c, hi_c), 3)
            subtasks = []
            for _ in range(rng.randint(*params.and_branch)):
                if level <= 1 or rng.random() < params.primitive_prob:
                    subtasks.append(new_prim())
                else:
                    sub = new_task(level - 1)
                    subtasks.append(sub)
                    queue.append((sub, level - 1))
            methods.append(Proposal(f"{prefix}/M{counter['method']}", cost, tuple(subtasks)))
            counter["method"] += 1
        table[task] = methods
    return root, table, primitives


def generate_htn(params: HtnParams) -> PlanningInstance:
    """Deterministic instance for ``params.rng_seed`` with its optimum attached."""
    root, table, primitives = generate_htn_table(params)
    instance = PlanningInstance(
        root, AvailableSet(primitives), ExpansionTable(table),
        name=f"htn-{params.rng_seed}",
        metadata={"params": asdict(params), "n_tasks": len(table), "n_primitives": len(primitives)},
    )
    cost, route = brute_force_optimal(instance, params.depth + 1)
    instance.optimal_cost = cost
    instance.metadata["optimal_length"] = route.length if route else None
    return instance


def htn_reactions(instance: PlanningInstance) -> list[tuple[str, tuple[str, ...], float, str]]:
    """``(product, reactants, cost, reaction id)`` for every method of an HTN instance."""
    table: ExpansionTable = instance.expand_fn
    return [(task, p.reactants, p.cost, p.reaction_id) for task, p in table.reactions()]


def htn_route_dataset(params: HtnParams, seeds, feature_dim: int = 256, mode: str = "cost") -> RouteDataset:
    """Route dataset over every task of the instances generated from ``seeds``."""
    reactions, blocks = [], set()
    for seed in seeds:
        inst = generate_htn(params.with_seed(seed))
        reactions.extend(htn_reactions(inst))
        blocks |= inst.available.molecules
    return extract_route_dataset(reactions, blocks, mode=mode, feature_dim=feature_dim)
