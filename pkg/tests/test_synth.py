import itertools

import pytest
from hypothesis import given, settings, strategies as st

from groupmv.circuit import CX, CondX, DynamicCircuit, Measure, Reset, depth
from groupmv.partition import GroupPlan, partition_groups, plan_links
from groupmv.sim.dense import enumerate_branches, ghz_overlap
from groupmv.synth import (Method, SynthError, SynthRequest, boundary_clbits, chain_plan, ghz_tree_layers,
                           randomized_search, synth_ghz_tree, synth_group_mv, synth_line_dynamic, synth_unitary)
from groupmv.topology import (CouplingGraph, bfs_select, center_of, graph_center, make_grid, make_heavy_hex,
                              make_ring, make_topology)


def all_branches_exact(c, flips=()):
    return all(abs(ghz_overlap(b.vector) - 1) < 1e-10 for b in enumerate_branches(c, flips=flips))


def test_ghz_tree_path_two_layers():
    g = make_grid(1, 3)
    c = synth_ghz_tree(g, [0, 1, 2], 1)
    assert depth(c).two_qubit_depth == 2
    assert ghz_tree_layers(g, [0, 1, 2], 1) == [[(1, 0)], [(1, 2)]]


def test_ghz_tree_single_node():
    c = synth_ghz_tree(make_grid(1, 3), [2], 2)
    assert len(c.ops) == 1 and c.ops[0].name == "H"


def test_ghz_tree_star_bottleneck():
    g = CouplingGraph.custom(5, [(0, 1), (0, 2), (0, 3), (0, 4)])
    assert depth(synth_ghz_tree(g, range(5), 0)).two_qubit_depth == 4


def test_ghz_tree_complete_graph_log_depth():
    n = 9
    g = CouplingGraph.custom(n, list(itertools.combinations(range(n), 2)))
    assert len(ghz_tree_layers(g, range(n), 0)) == 4


def test_ghz_tree_disconnected():
    with pytest.raises(SynthError):
        synth_ghz_tree(make_grid(1, 4), [0, 2], 0)


def test_unitary_two_qubits():
    c = synth_unitary(make_grid(1, 2), [0, 1])
    assert [type(op).__name__ for op in c.ops] == ["Gate", "CX"]


def test_unitary_grid_40_has_no_measurements():
    g = make_grid(5, 8)
    c = synth_unitary(g, bfs_select(g, graph_center(g), 40))
    assert c.count(Measure) == 0 and c.num_qubits == 40


@pytest.mark.parametrize("n", [4, 5, 6, 7, 8])
def test_line_dynamic_structure(n):
    g = make_grid(1, n)
    c = synth_line_dynamic(g, list(range(n)))
    # one junction between consecutive chunks; odd N ends in a triple
    assert c.count(Measure) == n // 2 - 1
    assert depth(c).two_qubit_depth <= 4
    assert c.metadata["construction"] == "pair_chain"
    assert all_branches_exact(c)


def test_line_dynamic_constant_depth():
    depths = {depth(synth_line_dynamic(make_grid(1, n), list(range(n)))).two_qubit_depth for n in (8, 20, 40)}
    assert len(depths) == 1


def test_line_dynamic_no_path():
    g = CouplingGraph.custom(4, [(0, 1), (0, 2), (0, 3)])
    with pytest.raises(SynthError, match="linear embedding unavailable"):
        synth_line_dynamic(g, [0, 1, 2, 3])


def test_group_mv_four_path():
    g = make_grid(1, 4)
    plan = plan_links([{0, 1}, {2, 3}], g, 0, 1, seed=0)
    c = synth_group_mv(g, [0, 1, 2, 3], plan)
    assert c.count(Measure) == 1
    assert all_branches_exact(c)


def ladder_plan():
    g = make_grid(2, 4)
    groups = [frozenset({0, 1, 4, 5}), frozenset({2, 3, 6, 7})]
    plan = plan_links(groups, g, 0, 3, seed=0)
    return g, plan


def test_group_mv_three_links_shape():
    g = make_grid(3, 4)
    groups = [frozenset({0, 1, 4, 5, 8, 9}), frozenset({2, 3, 6, 7, 10, 11})]
    plan = plan_links(groups, g, 0, 3, seed=0)
    assert plan.min_l_eff == 3
    c = synth_group_mv(g, list(range(12)), plan)
    measured = {op.qubit for op in c.ops if isinstance(op, Measure)}
    assert c.count(Measure) == 3 and c.count(Reset) == 3
    crossing = [op for op in c.ops if isinstance(op, CX)
                and (op.control in plan.groups[0]) != (op.target in plan.groups[0])]
    assert len(crossing) == 6  # 3 fusion CX + 3 re-entangling CX
    assert {op.target for op in crossing} == measured
    cond = {op.qubit for op in c.ops if isinstance(op, CondX)}
    assert cond == {q for q in range(12) if q in plan.groups[1] and q not in measured}


def test_group_mv_single_group_equals_unitary():
    g = make_grid(2, 3)
    nodes = list(range(6))
    plan = GroupPlan([frozenset(nodes)], [], 0, {}, {}, 1)
    assert synth_group_mv(g, nodes, plan).ops == synth_unitary(g, nodes).ops


def test_group_mv_plan_mismatch():
    g, plan = ladder_plan()
    with pytest.raises(SynthError, match="mismatch"):
        synth_group_mv(g, list(range(7)), plan)


def test_locality_all_methods():
    g = make_topology("heavy_hex", n=40)
    for m, l in [(Method.UNITARY, 1), (Method.LINE_DYNAMIC, 1), (Method.GROUP_MV, 3)]:
        graph = make_topology("heavy_hex", n=80) if m is Method.LINE_DYNAMIC else g
        c, plan, _ = randomized_search(SynthRequest(graph, 40, 20, l, m, 2, seed=0))
        for op in c.ops:
            if isinstance(op, CX):
                assert graph.has_edge(c.physical[op.control], c.physical[op.target])


def test_parallel_prep_depth_independent_of_group_count():
    g = make_grid(4, 12)
    sel = bfs_select(g, graph_center(g), 48)
    for k in (12, 24):
        groups = partition_groups(sel, k, seed=1)
        plan = plan_links(groups, g, center_of(g, sel.nodes), 1, seed=1)
        c = synth_group_mv(g, sel, plan)
        local = [len(ghz_tree_layers(g, sorted(x), center_of(g, sorted(x)))) for x in plan.groups]
        n_prep = sum(len(x) - 1 for x in plan.groups)
        prep = DynamicCircuit(c.num_qubits, 0, tuple(op for op in c.ops[:len(plan.groups) + n_prep]))
        assert depth(prep).two_qubit_depth <= max(local)


def test_restarts_one_matches_pipeline():
    from groupmv.synth import run_pipeline
    g = make_grid(4, 5)
    req = SynthRequest(g, 20, 5, 3, Method.GROUP_MV, 1, seed=9)
    c1, _, stats = randomized_search(req)
    c2, _ = run_pipeline(req, [9, 0])
    assert c1.ops == c2.ops and stats.chosen == 0


def test_ring_degraded_search():
    c, plan, stats = randomized_search(SynthRequest(make_ring(40), 40, 20, 3, Method.GROUP_MV, 4, seed=0))
    assert plan.degraded and plan.min_l_eff == 1
    assert c.metadata["degraded"] == "True"


def test_search_prefers_non_degraded():
    g = make_grid(5, 8)
    c, plan, stats = randomized_search(SynthRequest(g, 40, 20, 3, Method.GROUP_MV, 4, seed=0))
    assert not plan.degraded


def test_fault_tolerance_single_and_double():
    g = make_grid(3, 4)
    groups = [frozenset({0, 1, 4, 5, 8, 9}), frozenset({2, 3, 6, 7, 10, 11})]
    plan = plan_links(groups, g, 0, 3, seed=0)
    c = synth_group_mv(g, list(range(12)), plan)
    bits = boundary_clbits(c)[plan.group_tree[0]]
    for b in bits:
        assert all_branches_exact(c, flips={b})
    for pair in itertools.combinations(bits, 2):
        for br in enumerate_branches(c, flips=set(pair)):
            assert ghz_overlap(br.vector) < 1e-10


@settings(max_examples=30)
@given(kind=st.sampled_from(["grid", "ring", "heavy_hex"]), n=st.integers(2, 8), k=st.integers(2, 5),
       l=st.sampled_from([1, 3]), method=st.sampled_from(list(Method)), seed=st.integers(0, 1000))
def test_exact_ghz_every_branch(kind, n, k, l, method, seed):
    g = {"grid": make_grid(2, 4), "ring": make_ring(8), "heavy_hex": make_heavy_hex(1, 1)}[kind]
    c, plan, _ = randomized_search(SynthRequest(g, n, k, l, method, 2, seed))
    assert c.num_qubits == n
    assert all_branches_exact(c)


@settings(max_examples=20)
@given(seed=st.integers(0, 10_000))
def test_measured_parent_reuse_is_exact(seed):
    # pairs on a ladder force some boundaries through already-measured qubits
    g = make_grid(2, 5)
    sel = bfs_select(g, graph_center(g), 10)
    groups = partition_groups(sel, 2, seed=seed)
    plan = plan_links(groups, g, center_of(g, sel.nodes), 1, seed=seed)
    c = synth_group_mv(g, sel, plan)
    assert all_branches_exact(c)


def test_chain_plan_odd():
    plan = chain_plan(make_grid(1, 5), [0, 1, 2, 3, 4])
    assert [len(x) for x in plan.groups] == [2, 3]
