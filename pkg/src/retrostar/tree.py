"""AND-OR search tree with cached reaction numbers and V_t values.

OR nodes hold molecules, AND nodes hold reactions. Every node caches its
reaction number ``rn``; every AND node additionally caches ``vt``, the value
shared by all of its OR children (siblings always agree, so storing it once on
the parent reaction is enough). The root's V_t is its own ``rn``.

For an OR node ``m`` the cached quantities satisfy::

    rn(m) = 0                       if m is available
          = vm(m)                   if m is on the frontier
          = min_R rn(R)             otherwise (+inf for a dead end)
    rn(R) = cost(R) + sum_{c in ch(R)} rn(c)
    vt(m) = rn(m) + sum over AND ancestors R of m of
              cost(R) + sum of rn over the children of R that are not on the path

``update`` maintains them incrementally after each expansion; the
``rn_reference``/``vt_reference`` functions recompute them from scratch.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

from .instance import ExpansionResult, Route, RouteStep

INF = math.inf


class TreeError(Exception):
    pass


class ExpandOnExpandedNode(TreeError):
    pass


class ExpandOnAvailable(TreeError):
    pass


class NoRouteFound(TreeError):
    pass


class EmptyFrontier(TreeError):
    pass


@dataclass(slots=True)
class OrNode:
    id: int
    molecule: str
    parent: int | None
    vm_estimate: float
    is_available: bool
    children: list[int] = field(default_factory=list)
    rn: float = 0.0
    is_expanded: bool = False
    is_solved: bool = False
    # cost of the cheapest fully solved route below this node (+inf if unsolved)
    solved_cost: float = INF
    depth: int = 0

    kind = "or"

    @property
    def is_dead_end(self) -> bool:
        return self.is_expanded and not self.children


@dataclass(slots=True)
class AndNode:
    id: int
    reaction: str
    cost: float
    parent: int
    children: list[int] = field(default_factory=list)
    rn: float = 0.0
    vt: float = 0.0
    is_solved: bool = False
    solved_cost: float = INF

    kind = "and"


def _diff(new: float, old: float) -> float:
    # inf - inf would be nan; an unchanged infinity is a zero delta
    return 0.0 if new == old else new - old


class SearchTree:
    """Mutable AND-OR tree for one search episode (single writer)."""

    def __init__(self, target: str, available: Callable[[str], bool],
                 vm: Callable[[str], float], cycle_filter: bool = True):
        if not target:
            raise ValueError("target must be a nonempty identifier")
        self.available = available
        self.vm = vm
        self.cycle_filter = cycle_filter
        self.nodes: list[OrNode | AndNode] = []
        self.frontier: set[int] = set()
        self._heap: list[tuple[float, int]] = []
        self.expansion_count = 0
        # when not None, update() records every node id it touches
        self.trace: set[int] | None = None
        self.root = self._new_or(target, None, 0)
        root = self.nodes[self.root]
        if not root.is_available:
            self._push(self.root)

    # -- construction helpers -------------------------------------------

    def _new_or(self, molecule: str, parent: int | None, depth: int) -> int:
        nid = len(self.nodes)
        if self.available(molecule):
            node = OrNode(nid, molecule, parent, 0.0, True, rn=0.0, is_expanded=False,
                          is_solved=True, solved_cost=0.0, depth=depth)
        else:
            est = float(self.vm(molecule))
            if not (est >= 0.0) or math.isinf(est):
                raise ValueError(f"value oracle returned {est!r} for {molecule!r}")
            node = OrNode(nid, molecule, parent, est, False, rn=est, depth=depth)
            self.frontier.add(nid)
        self.nodes.append(node)
        return nid

    def _push(self, or_id: int) -> None:
        heapq.heappush(self._heap, (self.vt(or_id), or_id))

    def _touch(self, nid: int) -> None:
        if self.trace is not None:
            self.trace.add(nid)

    # -- accessors ------------------------------------------------------

    def __len__(self) -> int:
        return len(self.nodes)

    def __getitem__(self, nid: int) -> OrNode | AndNode:
        return self.nodes[nid]

    @property
    def root_node(self) -> OrNode:
        return self.nodes[self.root]

    def or_nodes(self) -> Iterator[OrNode]:
        return (n for n in self.nodes if isinstance(n, OrNode))

    def and_nodes(self) -> Iterator[AndNode]:
        return (n for n in self.nodes if isinstance(n, AndNode))

    def vt(self, or_id: int) -> float:
        """Cached V_t of an OR node."""
        node = self.nodes[or_id]
        if node.parent is None:
            return node.rn
        return self.nodes[node.parent].vt

    def path_molecules(self, or_id: int) -> set[str]:
        """Molecules of ``or_id`` and all of its OR ancestors."""
        out = set()
        nid: int | None = or_id
        while nid is not None:
            node = self.nodes[nid]
            if isinstance(node, OrNode):
                out.add(node.molecule)
            nid = node.parent
        return out

    def frontier_peek(self) -> tuple[int, float] | None:
        """Frontier node with minimal V_t (ties: lowest id), or None if empty.

        Stale heap entries are discarded here; the tree is otherwise unchanged.
        """
        heap = self._heap
        while heap:
            key, nid = heap[0]
            if nid in self.frontier and key == self.vt(nid):
                return nid, key
            heapq.heappop(heap)
        return None

    # -- expansion and update -------------------------------------------

    def expand(self, m: int, result: ExpansionResult) -> list[int]:
        """Attach the AND-OR stump for ``result`` under frontier node ``m``.

        Reaction numbers and V_t are left for :meth:`update`. With the cycle
        filter on, proposals consuming a molecule already on the path from the
        root to ``m`` are dropped.
        """
        node = self.nodes[m]
        if not isinstance(node, OrNode):
            raise TypeError(f"node {m} is not an OR node")
        if node.is_available:
            raise ExpandOnAvailable(f"node {m} ({node.molecule!r}) is available")
        if node.is_expanded:
            raise ExpandOnExpandedNode(f"node {m} ({node.molecule!r}) already expanded")
        blocked = self.path_molecules(m) if self.cycle_filter else set()
        node.is_expanded = True
        self.frontier.discard(m)
        self.expansion_count += 1
        created = []
        for p in result.proposals:
            if blocked and any(r in blocked for r in p.reactants):
                continue
            rid = len(self.nodes)
            self.nodes.append(AndNode(rid, p.reaction_id, float(p.cost), m))
            node.children.append(rid)
            created.append(rid)
            for r in p.reactants:
                cid = self._new_or(r, rid, node.depth + 1)
                self.nodes[rid].children.append(cid)
                created.append(cid)
        return created

    def update(self, m: int) -> None:
        """Refresh rn, V_t, solved flags and frontier keys after expanding ``m``.

        The reaction-number change at ``m`` travels up the ancestor path and
        stops as soon as it vanishes; each reaction on the way passes the same
        change to the V_t caches of its off-path sibling subtrees.
        """
        nodes = self.nodes
        node = nodes[m]
        self._touch(m)
        old = node.rn
        off_path = _diff(self.vt(m), old)  # V_t(m) without m's own term
        new = INF
        for rid in node.children:
            r = nodes[rid]
            self._touch(rid)
            r.rn = r.cost + sum(nodes[c].rn for c in r.children)
            r.vt = off_path + r.rn
            r.is_solved = all(nodes[c].is_solved for c in r.children)
            if r.is_solved:
                r.solved_cost = r.cost
            if r.rn < new:
                new = r.rn
            for c in r.children:
                self._touch(c)
                if c in self.frontier:
                    self._push(c)
        node.rn = new
        delta = _diff(new, old)

        cur = m
        while delta != 0.0 and cur != self.root:
            rid = nodes[cur].parent
            r = nodes[rid]
            self._touch(rid)
            r.rn += delta
            r.vt += delta
            for c in r.children:
                if c in self.frontier:
                    self._push(c)
                elif c != cur:
                    self._shift_subtree(c, delta)
            cur = r.parent
            parent = nodes[cur]
            self._touch(cur)
            # full min, not just the decrease case: the changed reaction may have been the argmin
            new_rn = min(nodes[c].rn for c in parent.children)
            delta = _diff(new_rn, parent.rn)
            parent.rn = new_rn

        self._propagate_solved(m)

    def _shift_subtree(self, or_id: int, delta: float) -> None:
        """Add ``delta`` to the V_t cache of every reaction below ``or_id``."""
        nodes = self.nodes
        stack = [or_id]
        while stack:
            oid = stack.pop()
            self._touch(oid)
            for rid in nodes[oid].children:
                r = nodes[rid]
                self._touch(rid)
                r.vt += delta
                for c in r.children:
                    if c in self.frontier:
                        self._push(c)
                    stack.append(c)

    def _propagate_solved(self, m: int) -> None:
        nodes = self.nodes
        node = nodes[m]
        best = min((nodes[r].solved_cost for r in node.children if nodes[r].is_solved), default=INF)
        if best == INF:
            return
        node.is_solved = True
        node.solved_cost = best
        cur = m
        while cur != self.root:
            r = nodes[nodes[cur].parent]
            if not all(nodes[c].is_solved for c in r.children):
                return
            cost = r.cost + sum(nodes[c].solved_cost for c in r.children)
            if r.is_solved and cost >= r.solved_cost:
                return
            r.is_solved = True
            r.solved_cost = cost
            parent = nodes[r.parent]
            if parent.is_solved and parent.solved_cost <= cost:
                return
            parent.is_solved = True
            parent.solved_cost = cost
            cur = r.parent

    # -- route extraction -----------------------------------------------

    def extract_best_route(self) -> Route:
        """Cheapest fully solved route in the tree (ties: lowest node id)."""
        root = self.root_node
        if not root.is_solved:
            raise NoRouteFound(f"target {root.molecule!r} is not solved")
        steps = []
        stack = [self.root]
        while stack:
            node = self.nodes[stack.pop()]
            if node.is_available:
                continue
            best = None
            for rid in node.children:
                r = self.nodes[rid]
                if r.is_solved and (best is None or r.solved_cost < best.solved_cost):
                    best = r
            steps.append(RouteStep(node.molecule, best.reaction, best.cost,
                                   tuple(self.nodes[c].molecule for c in best.children)))
            stack.extend(reversed(best.children))
        return Route(root.molecule, tuple(steps))

    # -- reference recomputation ---------------------------------------

    def rn_reference(self, nid: int) -> float:
        """Reaction number of ``nid`` evaluated from scratch, ignoring caches."""
        node = self.nodes[nid]
        if isinstance(node, AndNode):
            return node.cost + sum(self.rn_reference(c) for c in node.children)
        if node.is_available:
            return 0.0
        if not node.is_expanded:
            return node.vm_estimate
        return min((self.rn_reference(c) for c in node.children), default=INF)

    def vt_reference(self, m: int) -> float:
        """V_t of OR node ``m`` evaluated from scratch along its root path."""
        node = self.nodes[m]
        if not isinstance(node, OrNode):
            raise TypeError(f"node {m} is not an OR node")
        total = self.rn_reference(m)
        child = m
        rid = node.parent
        while rid is not None:
            r = self.nodes[rid]
            total += r.cost
            for c in r.children:
                if c != child:
                    total += self.rn_reference(c)
            child = r.parent
            rid = self.nodes[child].parent
        return total

    def reference_values(self) -> tuple[list[float], list[float]]:
        """All reaction numbers and OR-node V_t values, recomputed in bulk.

        Children always have larger ids than their parents, so one descending
        pass settles ``rn`` and one ascending pass settles the path sums.
        Entries of the V_t list at AND-node ids are ``nan``.
        """
        n = len(self.nodes)
        rn = [0.0] * n
        for nid in range(n - 1, -1, -1):
            node = self.nodes[nid]
            if isinstance(node, AndNode):
                rn[nid] = node.cost + sum(rn[c] for c in node.children)
            elif node.is_available:
                rn[nid] = 0.0
            elif not node.is_expanded:
                rn[nid] = node.vm_estimate
            else:
                rn[nid] = min((rn[c] for c in node.children), default=INF)
        off = [0.0] * n
        vt = [math.nan] * n
        for nid in range(n):
            node = self.nodes[nid]
            if isinstance(node, OrNode):
                vt[nid] = off[nid] + rn[nid]
                continue
            base = off[node.parent] + node.cost
            for c in node.children:
                off[c] = base + sum(rn[s] for s in node.children if s != c)
        return rn, vt

    def check_consistency(self, tol: float = 1e-9) -> list[str]:
        """Compare every cache against the reference; return mismatch messages."""
        rn_ref, vt_ref = self.reference_values()
        problems = []

        def close(a: float, b: float) -> bool:
            if math.isinf(a) or math.isinf(b):
                return a == b
            return abs(a - b) <= tol

        for node in self.nodes:
            if not close(node.rn, rn_ref[node.id]):
                problems.append(f"rn[{node.id}] cached={node.rn} ref={rn_ref[node.id]}")
            if isinstance(node, OrNode) and not close(self.vt(node.id), vt_ref[node.id]):
                problems.append(f"vt[{node.id}] cached={self.vt(node.id)} ref={vt_ref[node.id]}")
        return problems

    # -- debugging ------------------------------------------------------

    def snapshot(self) -> dict:
        """JSON-serialisable dump of nodes and edges."""
        out_nodes = []
        edges = []
        for node in self.nodes:
            entry = {"id": node.id, "kind": node.kind, "rn": _json_num(node.rn),
                     "solved": node.is_solved}
            if isinstance(node, OrNode):
                entry.update(molecule=node.molecule, vt=_json_num(self.vt(node.id)),
                             expanded=node.is_expanded, available=node.is_available)
            else:
                entry.update(reaction=node.reaction, cost=node.cost, vt=_json_num(node.vt))
            out_nodes.append(entry)
            edges.extend([node.id, c] for c in node.children)
        return {"root": self.root, "nodes": out_nodes, "edges": edges}

    def dump(self) -> str:
        return json.dumps(self.snapshot(), indent=1)


def _json_num(x: float) -> float | str:
    return "inf" if math.isinf(x) else x


def new_tree(target: str, available: Callable[[str], bool], vm: Callable[[str], float],
             cycle_filter: bool = True) -> SearchTree:
    return SearchTree(target, available, vm, cycle_filter)
