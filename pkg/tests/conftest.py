import random
from pathlib import Path

import pytest

from retrostar.instance import AvailableSet, ExpansionTable, PlanningInstance, Proposal

DATA = Path(__file__).resolve().parent.parent / "data"


def make_instance(target, table, available, optimal_cost=None) -> PlanningInstance:
    """``table`` maps molecule -> [(reaction id, cost, reactants), ...]."""
    props = {m: [Proposal(rid, float(c), tuple(rs)) for rid, c, rs in entries]
             for m, entries in table.items()}
    return PlanningInstance(target, AvailableSet(available), ExpansionTable(props),
                            optimal_cost=optimal_cost)


def two_route_instance() -> PlanningInstance:
    """t <- R1 (cost 1) <- a ; t <- R2 (cost 2) <- b, c ; a, b, c available."""
    return make_instance("t", {"t": [("R1", 1.0, ["a"]), ("R2", 2.0, ["b", "c"])]},
                         {"a", "b", "c"}, optimal_cost=1.0)


def random_instance(seed: int, n_mols: int = 8, max_props: int = 3, max_reactants: int = 3,
                    p_block: float = 0.35, integer_costs: bool = False, cyclic: bool = True):
    """Small random reaction graph; molecules are m0..m{n-1}, target m0.

    Cyclic graphs let reactants point at any molecule (the cycle filter has to
    cope); acyclic ones only point at higher-numbered molecules.
    """
    rng = random.Random(seed)
    mols = [f"m{i}" for i in range(n_mols)]
    blocks = {m for m in mols[1:] if rng.random() < p_block}
    table = {}
    rxn = 0
    for i, m in enumerate(mols):
        if m in blocks:
            continue
        pool = mols if cyclic else mols[i + 1:]
        if not pool:
            continue
        entries = []
        for _ in range(rng.randint(0, max_props)):
            k = rng.randint(1, min(max_reactants, len(pool)))
            reactants = rng.sample(pool, k)
            cost = float(rng.randint(0, 5)) if integer_costs else round(rng.uniform(0.0, 5.0), 3)
            entries.append((f"r{rxn}", cost, reactants))
            rxn += 1
        table[m] = entries
    return make_instance("m0", table, blocks)


@pytest.fixture
def two_route():
    return two_route_instance()


@pytest.fixture
def demo_paths():
    return DATA / "demo.cache.jsonl", DATA / "demo.blocks.txt"


# acceptance criteria record their verdict here; the lines are echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
