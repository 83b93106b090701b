"""Acceptance criteria for the planner, one test per criterion.

Each test appends a ``PASS <name>`` or ``FAIL <name>`` line (with the measured
numbers) to the acceptance section printed at the end of the pytest run.
"""

import math
import random
import time

import numpy as np

from retrostar.baselines.pns import DfpnSearch
from retrostar.bench import BenchmarkConfig, run_benchmark, run_grid, summarize
from retrostar.domains import (TEST_SEEDS, TRAIN_SEEDS, HtnParams, brute_force_optimal, extract_route_dataset,
                               generate_htn, htn_route_dataset)
from retrostar.search import HaltMode, SearchConfig, run_search, select_next
from retrostar.tree import INF, new_tree
from retrostar.value import LearnedModel, TrainConfig, ValueOracle, objective, pack, train

import conftest
from conftest import random_instance
from test_baselines import assert_pns_invariants, random_pns_tree
from test_domains import instance_for, random_hypergraph
from test_value import hinge_args, random_tuples

BUDGETS = (15, 20, 25, 30, 35)


def verdict(name, ok, detail=""):
    conftest.ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else ""))
    return ok


def test_optimality_on_htn_instances():
    start = time.perf_counter()
    ratios = []
    params = HtnParams()
    for seed in TEST_SEEDS:
        inst = generate_htn(params.with_seed(seed))
        assert params.depth <= 5 and max(params.or_branch + params.and_branch) <= 3
        opt, _ = brute_force_optimal(inst, params.depth + 1)
        out = run_search(inst, config=SearchConfig(call_limit=100_000, halt_mode=HaltMode.OPTIMAL))
        ratios.append(out.route.total_cost / opt if out.route else math.inf)
    elapsed = time.perf_counter() - start
    avg, worst = sum(ratios) / len(ratios), max(ratios)
    ok = len(ratios) >= 200 and abs(avg - 1) <= 1e-9 and abs(worst - 1) <= 1e-9 and elapsed < 30
    assert verdict("optimality", ok,
                   f"{len(ratios)} instances, avg AR {avg:.12f}, max AR {worst:.12f}, {elapsed:.1f}s")


def test_incremental_update_soundness():
    start = time.perf_counter()
    steps = worst = 0
    for seed in range(100):
        inst = random_instance(seed, n_mols=10)
        rng = random.Random(seed)
        table = {f"m{i}": round(rng.uniform(0, 3), 3) for i in range(10)}
        tree = new_tree(inst.target, inst.is_available, lambda m: table.get(m, 0.0))
        for _ in range(60):
            top = tree.frontier_peek()
            if top is None or top[1] == INF:
                break
            m = select_next(tree)
            tree.expand(m, inst.expand(tree[m].molecule))
            tree.update(m)
            steps += 1
            worst = max(worst, len(tree.check_consistency(tol=1e-9)))
    elapsed = time.perf_counter() - start
    ok = worst == 0 and elapsed < 60
    assert verdict("incremental-update soundness", ok,
                   f"100 searches, {steps} expansion steps, mismatching nodes {worst}, {elapsed:.1f}s")


def test_efficiency_ordering():
    params = HtnParams()
    dataset = htn_route_dataset(params, TRAIN_SEEDS, feature_dim=256)
    model = train(dataset.to_tuples(), TrainConfig(epochs=20, hidden_dim=32, learning_rate=0.01,
                                                   batch_size=128))
    oracle = ValueOracle.learned(model)
    config = BenchmarkConfig(algorithms=("retrostar", "retrostar0", "dfpn_e"), call_limits=BUDGETS,
                             halt_mode="optimal", htn=params, seeds=TEST_SEEDS)
    rates = {s.algorithm: s.success_rate for s in summarize(run_grid(config, oracle=oracle))}
    learned, zero, dfpn = rates["retrostar"], rates["retrostar0"], rates["dfpn_e"]
    ordered = all(learned[b] >= zero[b] >= dfpn[b] for b in BUDGETS)
    tight = BUDGETS[0]
    strict = learned[tight] > zero[tight] > dfpn[tight]
    detail = "; ".join(f"@{b} retrostar {learned[b]:.3f} retrostar0 {zero[b]:.3f} dfpn_e {dfpn[b]:.3f}"
                       for b in BUDGETS)
    assert verdict("efficiency ordering", ordered and strict, detail), detail


def test_route_dataset_fixpoint():
    mismatches = checked = 0
    for seed in range(100):
        reactions, blocks = random_hypergraph(seed)
        ds = extract_route_dataset(reactions, blocks, feature_dim=8)
        for mol, v in ds.values.items():
            opt, _ = brute_force_optimal(instance_for(reactions, blocks, mol), len(ds.values) + 1)
            checked += 1
            mismatches += v != opt
    assert verdict("route-dataset fixpoint", mismatches == 0,
                   f"100 hypergraphs, {checked} molecules, {mismatches} mismatches")


def test_trainer_gradients():
    worst, checked = 0.0, 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        tuples = random_tuples(rng, 8, 10)
        model = LearnedModel.init(10, 6, seed=seed, output_bias=0.5)
        eps, lam = 0.1, 1.0
        args = hinge_args(model, tuples, eps)
        if len(args) and np.min(np.abs(args)) < 1e-3:
            continue  # too close to a hinge kink for finite differences
        packed = pack(tuples)
        _, grad = objective(model, packed, eps, lam)
        theta = model.get_params()
        h = 1e-6
        for i in range(len(theta)):
            plus, minus = theta.copy(), theta.copy()
            plus[i] += h
            minus[i] -= h
            model.set_params(plus)
            fp = objective(model, packed, eps, lam, with_grad=False)[0]
            model.set_params(minus)
            fm = objective(model, packed, eps, lam, with_grad=False)[0]
            fd = (fp - fm) / (2 * h)
            worst = max(worst, abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-6))
        checked += 1
    ok = checked >= 10 and worst < 1e-4
    assert verdict("trainer gradients", ok, f"{checked} models, max relative error {worst:.2e}")


def test_pns_invariants():
    failures = []
    for seed in range(100):
        search = DfpnSearch(random_instance(seed, n_mols=10), None, SearchConfig(call_limit=1 + seed % 40))
        search.run()
        for label, root in (("random", random_pns_tree(random.Random(seed))), ("search", search.root)):
            try:
                assert_pns_invariants(root)
            except AssertionError:
                failures.append(f"{label} tree {seed}")
    assert verdict("PNS fixpoint and exclusivity", not failures,
                   f"100 random trees and 100 search trees, {len(failures)} violating"), failures


def test_benchmark_csv_determinism(tmp_path):
    cfg = dict(algorithms=("retrostar0", "dfpn_e", "mcts", "greedy"), call_limits=(15, 35),
               htn=HtnParams(), seeds=TEST_SEEDS[:50], rng_seed=3)
    a_path, b_path = tmp_path / "a.csv", tmp_path / "b.csv"
    run_benchmark(BenchmarkConfig(out=str(a_path), **cfg), echo=None)
    run_benchmark(BenchmarkConfig(out=str(b_path), **cfg), echo=None)
    a, b = a_path.read_bytes(), b_path.read_bytes()
    rows = len(a.splitlines()) - 1
    assert verdict("benchmark CSV determinism", a == b, f"{len(a)} bytes, {rows} rows")
