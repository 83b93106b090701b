"""Algorithm x instance x budget benchmark grids with CSV output and summaries.

Time is counted only in expansion-model calls. Wall-clock time is logged for
information and never written to the CSV, which keeps the CSV byte-identical
across runs with the same configuration.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .baselines import dfpn_e_search, greedy_dfs, mcts_search
from .domains.cache import load_cache
from .domains.htn import HtnParams, generate_htn
from .instance import PlanningInstance, check_route
from .search import HaltMode, SearchConfig, SearchOutcome, run_search
from .value import ValueOracle, load_oracle

log = logging.getLogger(__name__)

ALGORITHMS = ("retrostar", "retrostar0", "dfpn_e", "dfpn_e_plus", "mcts", "mcts_plus", "greedy")
# algorithms that consult the value oracle
ORACLE_ALGORITHMS = frozenset({"retrostar", "dfpn_e_plus", "mcts_plus"})
TIE_TOL = 1e-9


class UsageError(ValueError):
    """Invalid benchmark configuration (maps to exit code 2)."""


class MissingReference(LookupError):
    pass


@dataclass(frozen=True)
class BenchmarkConfig:
    algorithms: tuple[str, ...]
    call_limits: tuple[int, ...] = (500,)
    halt_mode: HaltMode = HaltMode.FIRST_SOLUTION
    oracle: str = "zero"
    # instance source: HTN seeds, or an expansion cache plus target list
    htn: HtnParams | None = None
    seeds: tuple[int, ...] = ()
    cache: str | None = None
    blocks: str | None = None
    targets: tuple[str, ...] = ()
    out: str | None = None
    rng_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not self.algorithms:
            raise UsageError("at least one algorithm is required")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise UsageError(f"unknown algorithm(s) {unknown}; choose from {', '.join(ALGORITHMS)}")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise UsageError("algorithms must not repeat")
        if not self.call_limits:
            raise UsageError("at least one call budget is required")
        if any(b < 1 for b in self.call_limits):
            raise UsageError("call budgets must be >= 1")
        if self.workers < 1:
            raise UsageError("workers must be >= 1")
        object.__setattr__(self, "halt_mode", HaltMode(self.halt_mode))
        object.__setattr__(self, "call_limits", tuple(sorted(set(self.call_limits))))
        if self.cache is None and self.htn is None:
            raise UsageError("need an instance source: HTN parameters or an expansion cache")
        if self.cache is not None and not self.targets:
            raise UsageError("a cache source needs at least one target")


@dataclass
class BenchmarkRow:
    algorithm: str
    instance: str
    budget: int
    status: str
    calls_used: int
    route_cost: float | None
    route_length: int | None
    optimal_cost: float | None
    approx_ratio: float | None

    @property
    def solved(self) -> bool:
        return self.status == "solved"


CSV_HEADER = [f.name for f in fields(BenchmarkRow)]


def load_instances(config: BenchmarkConfig) -> list[tuple[str, PlanningInstance]]:
    """Instances in benchmark order, each with a stable string id."""
    if config.cache is not None:
        cache = load_cache(config.cache, config.blocks)
        return [(t, cache.instance(t)) for t in config.targets]
    return [(f"htn-{s}", generate_htn(config.htn.with_seed(s))) for s in config.seeds]


def run_algorithm(algorithm: str, instance: PlanningInstance, budget: int, halt: HaltMode,
                  oracle: ValueOracle, rng_seed: int) -> SearchOutcome:
    """Run one named algorithm; oracle-free variants ignore ``oracle``."""
    cfg = SearchConfig(call_limit=budget, halt_mode=halt)
    if algorithm == "retrostar":
        return run_search(instance, oracle, cfg)
    if algorithm == "retrostar0":
        return run_search(instance, config=cfg)
    if algorithm == "dfpn_e":
        return dfpn_e_search(instance, None, cfg)
    if algorithm == "dfpn_e_plus":
        return dfpn_e_search(instance, oracle, cfg)
    if algorithm == "mcts":
        return mcts_search(instance, None, cfg, seed=rng_seed)
    if algorithm == "mcts_plus":
        return mcts_search(instance, oracle, cfg, seed=rng_seed)
    if algorithm == "greedy":
        return greedy_dfs(instance, cfg)
    raise UsageError(f"unknown algorithm {algorithm!r}")


def run_one(algorithm: str, instance_id: str, instance: PlanningInstance, budget: int,
            halt: HaltMode = HaltMode.FIRST_SOLUTION, oracle: ValueOracle | None = None,
            rng_seed: int = 0) -> BenchmarkRow:
    """One search, reduced to a row. Search errors become ``error`` rows."""
    oracle = oracle if oracle is not None else ValueOracle.zero()
    opt = instance.optimal_cost
    try:
        out = run_algorithm(algorithm, instance, budget, halt, oracle, rng_seed)
        if out.route is not None:
            check_route(out.route, instance)
    except Exception as exc:  # keep the grid running; the row records the failure
        log.warning("%s on %s (budget %d) failed: %s", algorithm, instance_id, budget, exc)
        return BenchmarkRow(algorithm, instance_id, budget, "error", 0, None, None, opt, None)
    cost = length = ratio = None
    if out.route is not None:
        cost, length = out.route.total_cost, out.route.length
        if opt is not None and opt > 0:
            ratio = cost / opt
        elif opt == 0:
            ratio = 1.0 if cost == 0 else math.inf
    return BenchmarkRow(algorithm, instance_id, budget, out.status.value, out.calls_used,
                        cost, length, opt, ratio)


def _run_cell(args) -> list[BenchmarkRow]:
    algorithm, instance_id, instance, budgets, halt, oracle, rng_seed = args
    return [run_one(algorithm, instance_id, instance, b, halt, oracle, rng_seed) for b in budgets]


def run_grid(config: BenchmarkConfig, instances: Sequence[tuple[str, PlanningInstance]] | None = None,
             oracle: ValueOracle | None = None) -> list[BenchmarkRow]:
    """All rows, ordered by (algorithm order, instance order, budget)."""
    if instances is None:
        instances = load_instances(config)
    if oracle is None:
        oracle = load_oracle(config.oracle)
    cells = [(a, iid, inst, config.call_limits, config.halt_mode, oracle, config.rng_seed)
             for a in config.algorithms for iid, inst in instances]
    start = time.perf_counter()
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            # map preserves submission order, so completion order never leaks into the CSV
            chunks = list(pool.map(_run_cell, cells, chunksize=max(1, len(cells) // (4 * config.workers))))
    else:
        chunks = [_run_cell(c) for c in cells]
    log.info("benchmark: %d searches in %.2fs wall-clock", sum(map(len, chunks)), time.perf_counter() - start)
    return [row for chunk in chunks for row in chunk]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_to_csv(rows: Iterable[BenchmarkRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow([_fmt(v) for v in asdict(row).values()])
    return buf.getvalue()


def read_csv(path) -> list[BenchmarkRow]:
    def num(s, cast):
        return None if s == "" else cast(s)

    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [
            BenchmarkRow(r["algorithm"], r["instance"], int(r["budget"]), r["status"], int(r["calls_used"]),
                         num(r["route_cost"], float), num(r["route_length"], int),
                         num(r["optimal_cost"], float), num(r["approx_ratio"], float))
            for r in csv.DictReader(fh)
        ]


@dataclass
class AlgorithmSummary:
    algorithm: str
    success_rate: dict[int, float]
    mean_calls: float
    best_cost_count: int
    best_length_count: int
    avg_ar: float | None
    max_ar: float | None
    errors: int = 0


def _at_budget(rows: Sequence[BenchmarkRow], budget: int) -> list[BenchmarkRow]:
    return [r for r in rows if r.budget == budget]


def summarize(rows: Sequence[BenchmarkRow]) -> list[AlgorithmSummary]:
    """Per-algorithm success rates per budget, plus route quality at the largest budget.

    Best-cost and best-length counts tally instances where the algorithm's
    route ties the best among all algorithms (within 1e-9), so several
    algorithms can be credited for one instance.
    """
    if not rows:
        return []
    algorithms = list(dict.fromkeys(r.algorithm for r in rows))
    budgets = sorted({r.budget for r in rows})
    top = budgets[-1]
    final = _at_budget(rows, top)
    best_cost: dict[str, float] = {}
    best_len: dict[str, int] = {}
    for r in final:
        if r.solved:
            best_cost[r.instance] = min(best_cost.get(r.instance, math.inf), r.route_cost)
            best_len[r.instance] = min(best_len.get(r.instance, 1 << 62), r.route_length)
    out = []
    for a in algorithms:
        mine = [r for r in rows if r.algorithm == a]
        rates = {}
        for b in budgets:
            at_b = _at_budget(mine, b)
            rates[b] = sum(r.solved for r in at_b) / len(at_b) if at_b else 0.0
        fin = [r for r in _at_budget(mine, top)]
        solved = [r for r in fin if r.solved]
        ratios = [r.approx_ratio for r in solved if r.approx_ratio is not None]
        out.append(AlgorithmSummary(
            algorithm=a,
            success_rate=rates,
            mean_calls=sum(r.calls_used for r in fin) / len(fin) if fin else 0.0,
            best_cost_count=sum(abs(r.route_cost - best_cost[r.instance]) <= TIE_TOL for r in solved),
            best_length_count=sum(r.route_length == best_len[r.instance] for r in solved),
            avg_ar=sum(ratios) / len(ratios) if ratios else None,
            max_ar=max(ratios) if ratios else None,
            errors=sum(r.status == "error" for r in mine),
        ))
    return out


def format_summary(summaries: Sequence[AlgorithmSummary]) -> str:
    if not summaries:
        return "(no rows)"
    budgets = list(summaries[0].success_rate)
    head = ["algorithm", *[f"succ@{b}" for b in budgets], "mean_calls", "best_cost", "best_len",
            "avg_ar", "max_ar"]
    lines = ["  ".join(f"{h:>11}" for h in head)]
    for s in summaries:
        cells = [s.algorithm, *[f"{s.success_rate[b]:.3f}" for b in budgets], f"{s.mean_calls:.2f}",
                 str(s.best_cost_count), str(s.best_length_count),
                 "-" if s.avg_ar is None else f"{s.avg_ar:.4f}",
                 "-" if s.max_ar is None else f"{s.max_ar:.4f}"]
        lines.append("  ".join(f"{c:>11}" for c in cells))
    return "\n".join(lines)


def check_monotone(rows: Sequence[BenchmarkRow]) -> list[tuple[str, str, int]]:
    """(algorithm, instance, budget) triples solved at ``budget`` but not at a larger one."""
    by_key: dict[tuple[str, str], list[BenchmarkRow]] = defaultdict(list)
    for r in rows:
        by_key[(r.algorithm, r.instance)].append(r)
    bad = []
    for (a, i), rs in by_key.items():
        rs = sorted(rs, key=lambda r: r.budget)
        for lo, hi in zip(rs, rs[1:]):
            if lo.solved and not hi.solved:
                bad.append((a, i, lo.budget))
    return bad


@dataclass
class RouteComparison:
    shorter: int = 0
    better: int = 0
    unsolved: int = 0


def compare_routes(rows: Sequence[BenchmarkRow],
                   reference: Mapping[str, tuple[float, int]] | None) -> dict[str, RouteComparison]:
    """Per algorithm, count routes strictly shorter / strictly cheaper than a reference route.

    ``reference`` maps instance id to ``(cost, length)``. Only rows at each
    algorithm's largest budget count. Unsolved rows go to ``unsolved`` and are
    never counted as shorter or better.
    """
    if not reference:
        raise MissingReference("route comparison needs reference costs and lengths")
    out: dict[str, RouteComparison] = {}
    top: dict[str, int] = {}
    for r in rows:
        top[r.algorithm] = max(top.get(r.algorithm, 0), r.budget)
    for r in rows:
        if r.budget != top[r.algorithm]:
            continue
        if r.instance not in reference:
            raise MissingReference(f"no reference route for instance {r.instance!r}")
        tally = out.setdefault(r.algorithm, RouteComparison())
        if not r.solved:
            tally.unsolved += 1
            continue
        ref_cost, ref_len = reference[r.instance]
        if r.route_length < ref_len:
            tally.shorter += 1
        if r.route_cost < ref_cost - TIE_TOL:
            tally.better += 1
    return out


def run_benchmark(config: BenchmarkConfig, oracle: ValueOracle | None = None,
                  echo: Callable[[str], None] | None = print) -> tuple[list[BenchmarkRow], str]:
    """Run the grid, write the CSV (if ``config.out``), print the summary."""
    rows = run_grid(config, oracle=oracle)
    text = rows_to_csv(rows)
    if config.out:
        Path(config.out).write_text(text, encoding="utf-8")
    if echo is not None:
        echo(format_summary(summarize(rows)))
    return rows, text
