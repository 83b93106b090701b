"""Proof-number search over AND-OR trees and its DFPN-E variant.

Molecules are OR nodes and reactions are AND nodes. Proof numbers follow::

    AND:  pn = sum(pn(c)),           dn = min(dn(c))
    OR:   pn = min(pn(c)),           dn = sum(dn(c))        (plain)
    OR:   pn = min(h(c) + pn(c)),    dn = sum(dn(c))        (DFPN-E, h = reaction cost)

with proven nodes at (0, inf) and disproven nodes at (inf, 0). The DFPN-E
search is depth-first with the usual +1 slack thresholds and keeps the
explicit tree in memory, so no node is ever expanded twice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from ..instance import PlanningInstance, Route, RouteStep
from ..search import SearchConfig, SearchOutcome, Status
from .common import BudgetExhausted, recursion_limit

INF = math.inf
# unexpanded leaves must keep pn > 0, otherwise they would read as proven
PN_FLOOR = 1e-6


@dataclass(eq=False)
class PnsNode:
    kind: str                      # "or" | "and"
    label: str                     # molecule id (OR) or reaction id (AND)
    parent: "PnsNode | None" = None
    h: float = 0.0                 # reaction cost, the edge cost from the parent OR node
    reactants: tuple[str, ...] = ()
    children: list["PnsNode"] = field(default_factory=list)
    pn: float = 1.0
    dn: float = 1.0
    expanded: bool = False
    available: bool = False

    @property
    def proven(self) -> bool:
        return self.pn == 0.0

    @property
    def disproven(self) -> bool:
        return self.dn == 0.0


def pns_recompute(node: PnsNode, edge_cost: bool = True) -> tuple[float, float]:
    """Proof and disproof numbers of ``node`` from its children's current numbers.

    Leaves (available, unexpanded or dead-end molecules) return their own
    fixed numbers.
    """
    if node.kind == "or":
        if node.available:
            return 0.0, INF
        if not node.expanded:
            return node.pn, node.dn
        if not node.children:
            return INF, 0.0
        if any(c.pn == 0.0 for c in node.children):
            return 0.0, INF
        if edge_cost:
            pn = min(c.h + c.pn for c in node.children)
        else:
            pn = min(c.pn for c in node.children)
        return pn, sum(c.dn for c in node.children)
    pn = sum(c.pn for c in node.children)
    dn = min(c.dn for c in node.children)
    if pn == 0.0:
        dn = INF
    elif dn == 0.0:
        pn = INF
    return pn, dn


def _set(node: PnsNode, edge_cost: bool) -> None:
    node.pn, node.dn = pns_recompute(node, edge_cost)


class DfpnSearch:
    """One DFPN(-E) search episode; see :func:`dfpn_e_search`."""

    def __init__(self, instance: PlanningInstance, vm: Callable[[str], float] | None,
                 config: SearchConfig, edge_cost: bool = True):
        self.instance = instance
        self.vm = vm
        self.config = config
        self.edge_cost = edge_cost
        self.calls = 0
        self.history: list[tuple[int, str, float]] = []
        self.root = self._leaf(instance.target, None)

    def _leaf(self, molecule: str, parent: PnsNode | None) -> PnsNode:
        node = PnsNode("or", molecule, parent)
        if self.instance.is_available(molecule):
            node.available = True
            node.pn, node.dn = 0.0, INF
        else:
            node.pn = max(float(self.vm(molecule)), PN_FLOOR) if self.vm is not None else 1.0
            node.dn = 1.0
        return node

    def _path(self, node: PnsNode) -> set[str]:
        out = set()
        while node is not None:
            if node.kind == "or":
                out.add(node.label)
            node = node.parent
        return out

    def _expand(self, node: PnsNode) -> None:
        if self.calls >= self.config.call_limit:
            raise BudgetExhausted
        result = self.instance.expand(node.label)
        self.calls += 1
        self.history.append((self.calls, node.label, node.pn))
        blocked = self._path(node) if self.config.cycle_filter else set()
        node.expanded = True
        for p in result.proposals:
            if blocked and any(r in blocked for r in p.reactants):
                continue
            rxn = PnsNode("and", p.reaction_id, node, h=p.cost, reactants=p.reactants)
            rxn.children = [self._leaf(r, rxn) for r in p.reactants]
            _set(rxn, self.edge_cost)
            node.children.append(rxn)

    def mid(self, node: PnsNode, th_pn: float, th_dn: float) -> None:
        try:
            if node.kind == "or" and not node.expanded and not node.available:
                self._expand(node)
            while True:
                _set(node, self.edge_cost)
                if node.pn >= th_pn or node.dn >= th_dn:
                    return
                child, th_pn_c, th_dn_c = self._select(node, th_pn, th_dn)
                self.mid(child, th_pn_c, th_dn_c)
        finally:
            # keep numbers consistent even when unwinding on budget exhaustion
            _set(node, self.edge_cost)

    def _select(self, node: PnsNode, th_pn: float, th_dn: float):
        kids = node.children
        if node.kind == "or":
            keys = [(c.h + c.pn) if self.edge_cost else c.pn for c in kids]
            best = min(range(len(kids)), key=keys.__getitem__)
            second = min((k for i, k in enumerate(keys) if i != best), default=INF)
            c = kids[best]
            h = c.h if self.edge_cost else 0.0
            return c, min(th_pn, second + 1.0) - h, th_dn - node.dn + c.dn
        dns = [c.dn for c in kids]
        best = min(range(len(kids)), key=dns.__getitem__)
        second = min((d for i, d in enumerate(dns) if i != best), default=INF)
        c = kids[best]
        return c, th_pn - node.pn + c.pn, min(th_dn, second + 1.0)

    def run(self) -> SearchOutcome:
        if not self.root.available:
            with recursion_limit(4 * self.config.call_limit + 1000):
                try:
                    self.mid(self.root, INF, INF)
                except BudgetExhausted:
                    pass
        root = self.root
        if root.proven:
            status, route = Status.SOLVED, proven_route(root)
        elif root.disproven:
            status, route = Status.EXHAUSTED, None
        else:
            status, route = Status.LIMIT_REACHED, None
        return SearchOutcome(status, route, self.calls, root.pn, self.history)


def _solved_cost(node: PnsNode, memo: dict) -> float:
    if id(node) in memo:
        return memo[id(node)]
    if node.kind == "or":
        if node.available:
            val = 0.0
        else:
            val = min((_solved_cost(c, memo) for c in node.children if c.proven), default=INF)
    else:
        val = node.h + sum(_solved_cost(c, memo) for c in node.children)
    memo[id(node)] = val
    return val


def proven_route(root: PnsNode) -> Route:
    """Cheapest route inside the proven part of the tree."""
    memo: dict = {}
    steps = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.available:
            continue
        best = min((c for c in node.children if c.proven), key=lambda c: _solved_cost(c, memo))
        steps.append(RouteStep(node.label, best.label, best.h, best.reactants))
        stack.extend(reversed(best.children))
    return Route(root.label, tuple(steps))


def iter_nodes(root: PnsNode):
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(node.children)


def dfpn_e_search(instance: PlanningInstance, vm: Callable[[str], float] | None = None,
                  config: SearchConfig = SearchConfig(), edge_cost: bool = True) -> SearchOutcome:
    """Depth-first proof-number search with additive reaction costs.

    With ``vm`` given, unexpanded molecules start at ``pn = vm(m)`` (floored
    just above zero) instead of 1; disproof numbers always start at 1.
    """
    return DfpnSearch(instance, vm, config, edge_cost).run()
