"""File-backed expansion caches and building-block lists.

Cache format (UTF-8 JSON Lines), one molecule per line::

    {"mol": "t", "proposals": [{"rxn": "R1", "prob": 0.9, "reactants": ["a"]},
                               {"rxn": "R2", "cost": 2.0, "reactants": ["b", "c"]}]}

Each proposal carries exactly one of ``cost`` (>= 0) or ``prob`` in (0, 1];
probabilities are converted to cost ``-ln(prob)``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable

from ..instance import (AvailableSet, ExpansionTable, PlanningInstance, Proposal,
                        DEFAULT_TOP_K)


class CacheError(ValueError):
    pass


class ParseError(CacheError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class NegativeCost(ParseError):
    pass


class EmptyReactants(ParseError):
    pass


def _parse_proposal(raw, path, lineno: int) -> Proposal:
    if not isinstance(raw, dict):
        raise ParseError(path, lineno, "proposal must be an object")
    rxn = raw.get("rxn")
    if not isinstance(rxn, str) or not rxn:
        raise ParseError(path, lineno, "proposal is missing 'rxn'")
    if "reactants" not in raw:
        raise ParseError(path, lineno, f"proposal {rxn!r} is missing 'reactants'")
    reactants = raw["reactants"]
    if not isinstance(reactants, list) or not all(isinstance(r, str) and r for r in reactants):
        raise ParseError(path, lineno, f"proposal {rxn!r}: 'reactants' must be a list of ids")
    if not reactants:
        raise EmptyReactants(path, lineno, f"proposal {rxn!r} has no reactants")
    has_cost, has_prob = "cost" in raw, "prob" in raw
    if has_cost == has_prob:
        raise ParseError(path, lineno, f"proposal {rxn!r} needs exactly one of 'cost' or 'prob'")
    if has_cost:
        cost = raw["cost"]
        if not isinstance(cost, (int, float)) or isinstance(cost, bool) or math.isnan(cost) \
                or math.isinf(cost):
            raise ParseError(path, lineno, f"proposal {rxn!r}: bad cost {cost!r}")
        if cost < 0:
            raise NegativeCost(path, lineno, f"proposal {rxn!r} has negative cost {cost}")
    else:
        prob = raw["prob"]
        if not isinstance(prob, (int, float)) or isinstance(prob, bool) or not (0.0 < prob <= 1.0):
            raise ParseError(path, lineno, f"proposal {rxn!r}: prob must be in (0, 1], got {prob!r}")
        cost = -math.log(prob) if prob < 1.0 else 0.0
    return Proposal(rxn, float(cost), tuple(reactants))


def parse_cache_lines(lines: Iterable[str], path="<cache>") -> dict[str, list[Proposal]]:
    table: dict[str, list[Proposal]] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(path, lineno, f"invalid JSON: {exc.msg}") from None
        if not isinstance(record, dict):
            raise ParseError(path, lineno, "line must be a JSON object")
        mol = record.get("mol")
        if not isinstance(mol, str) or not mol:
            raise ParseError(path, lineno, "missing 'mol'")
        props = record.get("proposals")
        if not isinstance(props, list):
            raise ParseError(path, lineno, "missing 'proposals' list")
        if mol in table:
            raise ParseError(path, lineno, f"duplicate entry for {mol!r}")
        table[mol] = [_parse_proposal(p, path, lineno) for p in props]
    return table


class ExpansionCache:
    """Expansion model answering from a precomputed table.

    Calling :meth:`instance` builds a :class:`PlanningInstance` for one target.
    """

    def __init__(self, table: dict[str, list[Proposal]], available: Iterable[str] = (),
                 k: int = DEFAULT_TOP_K):
        self.expand = ExpansionTable(table)
        self.available = AvailableSet(available)
        self.k = k

    def __len__(self) -> int:
        return len(self.expand.molecules())

    def instance(self, target: str, optimal_cost: float | None = None) -> PlanningInstance:
        return PlanningInstance(target, self.available, self.expand, k=self.k,
                                optimal_cost=optimal_cost)

    __call__ = instance


def load_cache(path, blocks: Iterable[str] | str | Path | None = None,
               k: int = DEFAULT_TOP_K) -> ExpansionCache:
    """Load a JSONL expansion cache; ``blocks`` is a set of ids or a block-list path."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        table = parse_cache_lines(fh, path)
    if isinstance(blocks, (str, Path)):
        blocks = load_blocks(blocks)
    return ExpansionCache(table, blocks or (), k=k)


def load_blocks(path) -> set[str]:
    """One building-block id per line; blank lines and ``#`` comments ignored."""
    out = set()
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                out.add(line)
    return out


def write_cache(path, table: dict[str, list[Proposal]]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for mol, props in table.items():
            record = {"mol": mol, "proposals": [
                {"rxn": p.reaction_id, "cost": p.cost, "reactants": list(p.reactants)} for p in props]}
            fh.write(json.dumps(record) + "\n")


def write_blocks(path, blocks: Iterable[str]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for b in sorted(blocks):
            fh.write(b + "\n")
