"""Best-route extraction over a reaction hypergraph, for value-model training.

``v(m)`` is the minimum total cost of synthesising ``m`` from building blocks
using the given reactions. It is the least fixpoint of::

    v(b) = 0                                  for building blocks b
    v(m) = min over reactions R producing m of cost(R) + sum(v(reactants))

computed Bellman-Ford style by sweeping all reactions until nothing changes.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

INF = math.inf
_TOKEN = re.compile(r"[A-Za-z0-9]+")


class NonConvergence(RuntimeError):
    pass


def hash_features(mol_id: str, dim: int = 2048) -> np.ndarray:
    """Deterministic 0/1 fingerprint of an id.

    The id and each of its alphanumeric tokens set one bit chosen by SHA-256,
    so ids sharing tokens share bits, much like hashed substructure keys.
    """
    vec = np.zeros(dim, dtype=np.float64)
    for tok in {mol_id, *_TOKEN.findall(mol_id)}:
        h = int.from_bytes(hashlib.sha256(tok.encode("utf-8")).digest()[:8], "little")
        vec[h % dim] = 1.0
    return vec


@dataclass(frozen=True)
class Reaction:
    product: str
    reactants: tuple[str, ...]
    cost: float
    reaction_id: str


@dataclass
class RouteRecord:
    target: str
    v: float
    best_reaction: int
    candidates: list[Reaction]


@dataclass
class RouteDataset:
    records: list[RouteRecord]
    features: dict[str, np.ndarray]
    mode: str
    feature_dim: int
    values: dict[str, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def to_tuples(self):
        """Records as :class:`retrostar.value.RouteTuple` objects."""
        from ..value import RouteTuple

        feats = self.features
        return [
            RouteTuple(feats[r.target], r.v, r.best_reaction,
                       [(c.cost, [feats[m] for m in c.reactants]) for c in r.candidates])
            for r in self.records
        ]

    def save(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"kind": "header", "mode": self.mode,
                                 "feature_dim": self.feature_dim}) + "\n")
            for mol in sorted(self.features):
                bits = np.flatnonzero(self.features[mol]).tolist()
                fh.write(json.dumps({"kind": "features", "mol": mol, "on_bits": bits}) + "\n")
            for r in self.records:
                fh.write(json.dumps({
                    "kind": "route", "target": r.target, "v": r.v, "best": r.best_reaction,
                    "candidates": [{"rxn": c.reaction_id, "cost": c.cost, "reactants": list(c.reactants)}
                                   for c in r.candidates],
                }) + "\n")

    @classmethod
    def load(cls, path) -> "RouteDataset":
        path = Path(path)
        with path.open(encoding="utf-8") as fh:
            lines = [ln for ln in fh if ln.strip()]
        if not lines:
            raise ValueError(f"{path}: empty route dataset")
        header = json.loads(lines[0])
        if header.get("kind") != "header":
            raise ValueError(f"{path}:1: first line must be the header")
        dim = int(header["feature_dim"])
        features: dict[str, np.ndarray] = {}
        records = []
        for lineno, line in enumerate(lines[1:], start=2):
            obj = json.loads(line)
            kind = obj.get("kind")
            if kind == "features":
                vec = np.zeros(dim)
                if "on_bits" in obj:
                    vec[obj["on_bits"]] = 1.0
                else:
                    vec = np.asarray(obj["vec"], dtype=np.float64)
                    if vec.shape != (dim,):
                        raise ValueError(f"{path}:{lineno}: feature width {vec.shape} != {dim}")
                features[obj["mol"]] = vec
            elif kind == "route":
                cands = [Reaction(obj["target"], tuple(c["reactants"]), float(c["cost"]), c["rxn"])
                         for c in obj["candidates"]]
                records.append(RouteRecord(obj["target"], float(obj["v"]), int(obj["best"]), cands))
            else:
                raise ValueError(f"{path}:{lineno}: unknown record kind {kind!r}")
        for r in records:
            missing = [m for m in (r.target, *(x for c in r.candidates for x in c.reactants))
                       if m not in features]
            if missing:
                raise ValueError(f"{path}: no features for {missing[0]!r}")
        return cls(records, features, header["mode"], dim)


def _as_reactions(reactions: Iterable) -> list[Reaction]:
    out = []
    for i, r in enumerate(reactions):
        if isinstance(r, Reaction):
            out.append(r)
            continue
        product, reactants, cost, *rest = r
        rid = rest[0] if rest else f"r{i}"
        if cost < 0:
            raise ValueError(f"reaction {rid!r} has negative cost")
        out.append(Reaction(product, tuple(reactants), float(cost), rid))
    return out


def best_route_values(reactions: Sequence[Reaction], building_blocks: Iterable[str],
                      mode: str = "cost") -> dict[str, float]:
    """Fixpoint ``v`` for every molecule mentioned; ``inf`` if unsynthesisable."""
    if mode not in ("cost", "length"):
        raise ValueError(f"mode must be 'cost' or 'length', got {mode!r}")
    blocks = set(building_blocks)
    v: dict[str, float] = {}
    for r in reactions:
        for m in (r.product, *r.reactants):
            v.setdefault(m, 0.0 if m in blocks else INF)
    limit = len(v) + 1
    for _ in range(limit):
        changed = False
        for r in reactions:
            if r.product in blocks:
                continue
            val = 1.0 if mode == "length" else r.cost
            for m in r.reactants:
                val += v[m]
            if val < v[r.product]:
                v[r.product] = val
                changed = True
        if not changed:
            return v
    raise NonConvergence(f"values still changing after {limit} sweeps")


def extract_route_dataset(reactions: Iterable, building_blocks: Iterable[str],
                          features: Mapping[str, np.ndarray] | Callable[[str], np.ndarray] | None = None,
                          mode: str = "cost", feature_dim: int = 2048) -> RouteDataset:
    """One training record per synthesisable, non-block product.

    ``reactions`` holds ``(product, reactants, cost[, reaction id])`` tuples.
    ``best_reaction`` indexes the cheapest producing reaction (ties: lowest
    reaction id); ``candidates`` lists every reaction producing the target. In
    ``length`` mode each reaction costs 1.
    """
    rxns = _as_reactions(reactions)
    blocks = set(building_blocks)
    v = best_route_values(rxns, blocks, mode)
    if features is None:
        featurize = lambda m: hash_features(m, feature_dim)  # noqa: E731
    elif callable(features):
        featurize = features
    else:
        featurize = features.__getitem__

    by_product: dict[str, list[Reaction]] = {}
    for r in rxns:
        by_product.setdefault(r.product, []).append(r)

    records = []
    for product, cands in by_product.items():
        if product in blocks or v[product] == INF:
            continue
        if mode == "length":
            cands = [Reaction(c.product, c.reactants, 1.0, c.reaction_id) for c in cands]
        best, best_val = 0, INF
        for j, c in enumerate(cands):
            val = c.cost
            for m in c.reactants:
                val += v[m]
            if val < best_val or (val == best_val and c.reaction_id < cands[best].reaction_id):
                best, best_val = j, val
        records.append(RouteRecord(product, v[product], best, cands))

    needed = {r.target for r in records} | {m for r in records for c in r.candidates for m in c.reactants}
    feats = {}
    for m in sorted(needed):
        vec = np.asarray(featurize(m), dtype=np.float64)
        if vec.shape != (feature_dim,):
            raise ValueError(f"feature vector for {m!r} has shape {vec.shape}, expected ({feature_dim},)")
        feats[m] = vec
    return RouteDataset(records, feats, mode, feature_dim, values=v)


def changed_targets(base: RouteDataset, extended: RouteDataset, tol: float = 1e-12) -> RouteDataset:
    """Records of ``extended`` whose target is new or got a strictly better value.

    Mirrors building a held-out split by re-extracting on a larger reaction set
    and keeping only targets the extra reactions actually improved.
    """
    old = {r.target: r.v for r in base.records}
    keep = [r for r in extended.records if r.target not in old or r.v < old[r.target] - tol]
    used = {r.target for r in keep} | {m for r in keep for c in r.candidates for m in c.reactants}
    return RouteDataset(keep, {m: extended.features[m] for m in used}, extended.mode,
                        extended.feature_dim, values=dict(extended.values))
