import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retrostar.domains import TEST_SEEDS, HtnParams, brute_force_optimal, generate_htn
from retrostar.instance import ExpansionResult, Proposal, check_route
from retrostar.search import (HaltMode, SearchConfig, Status, run_search, select_next,
                              verify_admissible_halt)
from retrostar.tree import EmptyFrontier, new_tree

from conftest import make_instance, random_instance


def result(*props):
    return ExpansionResult(tuple(Proposal(rid, c, tuple(rs)) for rid, c, rs in props))


OPTIMAL = SearchConfig(call_limit=500, halt_mode=HaltMode.OPTIMAL)


# -- select_next -------------------------------------------------------------

def test_select_next_picks_smallest_vt():
    vm = {"x": 3.2, "y": 2.7}
    tree = new_tree("t", lambda m: False, lambda m: vm.get(m, 0.0))
    tree.expand(tree.root, result(("Rx", 0.0, ["x"]), ("Ry", 0.0, ["y"])))
    tree.update(tree.root)
    assert tree[select_next(tree)].molecule == "y"


def test_select_next_breaks_ties_by_lowest_id():
    tree = new_tree("t", lambda m: False, lambda m: 1.0)
    tree.expand(tree.root, result(("R", 0.0, ["x", "y"])))
    tree.update(tree.root)
    x, y = tree[tree.root_node.children[0]].children
    assert select_next(tree) == min(x, y)


def test_select_next_skips_stale_heap_entries():
    vm = {"x": 1.0, "y": 2.0, "z": 50.0}
    tree = new_tree("t", lambda m: m == "a", lambda m: vm.get(m, 0.0))
    tree.expand(tree.root, result(("Rx", 0.0, ["x"]), ("Ry", 0.0, ["y"])))
    tree.update(tree.root)
    x = tree[tree.root_node.children[0]].children[0]
    assert select_next(tree) == x
    # x turns out expensive: its old V_t of 1.0 is now stale
    tree.expand(x, result(("Rz", 10.0, ["z"])))
    tree.update(x)
    assert tree[select_next(tree)].molecule == "y"


def test_select_next_on_empty_frontier():
    tree = new_tree("t", lambda m: True, lambda m: 0.0)
    with pytest.raises(EmptyFrontier):
        select_next(tree)


# -- run_search examples --------------------------------------------------------

def test_two_route_optimal(two_route):
    out = run_search(two_route, config=OPTIMAL)
    assert out.status is Status.SOLVED and out.optimal_proven
    assert out.route.reactions == ["R1"]
    assert out.route.total_cost == 1.0
    assert out.calls_used == 1


def test_target_available_needs_no_calls():
    inst = make_instance("t", {}, {"t"})
    out = run_search(inst)
    assert out.status is Status.SOLVED and out.calls_used == 0 and out.route.length == 0


def test_budget_stops_long_chain():
    inst = make_instance("m0", {"m0": [("r0", 1, ["m1"])], "m1": [("r1", 1, ["m2"])],
                                "m2": [("r2", 1, ["m3"])]}, {"m3"})
    out = run_search(inst, config=SearchConfig(call_limit=1))
    assert out.status is Status.LIMIT_REACHED and out.calls_used == 1 and out.route is None
    assert run_search(inst, config=SearchConfig(call_limit=3)).status is Status.SOLVED


def test_unsolvable_is_exhausted():
    inst = make_instance("t", {"t": [("R", 1, ["a"])], "a": []}, set())
    out = run_search(inst)
    assert out.status is Status.EXHAUSTED and out.calls_used == 2 and out.best_root_rn == math.inf


def test_first_solution_can_be_suboptimal_but_optimal_mode_is_not():
    # R2 looks cheap until its reactant is expanded
    inst = make_instance("t", {"t": [("R1", 3.0, ["a"]), ("R2", 1.0, ["b"])],
                               "b": [("Rb", 5.0, ["c"])]}, {"a", "c"}, optimal_cost=3.0)
    first = run_search(inst)
    opt = run_search(inst, config=OPTIMAL)
    assert first.route.total_cost >= 3.0
    assert opt.route.total_cost == 3.0 and opt.optimal_proven


def test_verify_admissible_halt(two_route):
    out = run_search(two_route, config=OPTIMAL)
    assert verify_admissible_halt(out, 1.0)
    assert not verify_admissible_halt(out, 0.5)


def test_inadmissible_oracle_can_miss_the_optimum():
    # negative control: an oracle that overestimates everything by a lot
    inst = make_instance("t", {"t": [("R1", 1.0, ["x"]), ("R2", 4.0, ["a"])],
                               "x": [("Rx", 1.0, ["a"])]}, {"a"}, optimal_cost=2.0)
    assert verify_admissible_halt(run_search(inst, config=OPTIMAL), 2.0)
    bad = run_search(inst, vm=lambda m: 10.0, config=OPTIMAL)
    assert bad.solved and not verify_admissible_halt(bad, 2.0)


def test_history_matches_calls(two_route):
    out = run_search(two_route)
    assert out.calls_used == len(out.iterations_log)
    assert [c for c, _, _ in out.iterations_log] == list(range(1, out.calls_used + 1))


def test_zero_budget_rejected():
    with pytest.raises(ValueError):
        SearchConfig(call_limit=0)


# -- against the exhaustive oracle ------------------------------------------------

@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6), st.booleans())
def test_optimal_mode_matches_brute_force(seed, cyclic):
    inst = random_instance(seed, n_mols=8, cyclic=cyclic)
    opt, _ = brute_force_optimal(inst, 9)
    out = run_search(inst, config=SearchConfig(call_limit=1000, halt_mode=HaltMode.OPTIMAL))
    if math.isinf(opt):
        assert out.status is Status.EXHAUSTED
    else:
        assert out.status is Status.SOLVED and out.optimal_proven
        assert out.route.total_cost == pytest.approx(opt, abs=1e-9)
        check_route(out.route, inst)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_first_solution_routes_are_valid_and_not_below_optimum(seed):
    inst = random_instance(seed, n_mols=8)
    opt, _ = brute_force_optimal(inst, 9)
    out = run_search(inst)
    assert out.calls_used == len(out.iterations_log) <= 500
    if out.solved:
        check_route(out.route, inst)
        assert out.route.total_cost >= opt - 1e-9
    else:
        assert math.isinf(opt)


def test_optimal_mode_on_htn_seeds():
    params = HtnParams()
    for seed in TEST_SEEDS[:40]:
        inst = generate_htn(params.with_seed(seed))
        out = run_search(inst, config=SearchConfig(call_limit=10_000, halt_mode=HaltMode.OPTIMAL))
        assert verify_admissible_halt(out, inst.optimal_cost, 1e-9), inst.name


def test_search_is_deterministic():
    inst = random_instance(7, n_mols=10)
    a, b = run_search(inst, config=OPTIMAL), run_search(inst, config=OPTIMAL)
    assert a.iterations_log == b.iterations_log
    assert (a.route.to_dict() if a.route else None) == (b.route.to_dict() if b.route else None)
