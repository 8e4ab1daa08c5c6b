import itertools
import random

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from bddbenders import smwds
from bddbenders.diagram import (
    DiagramError,
    RecourseInfeasibleError,
    ResourceError,
    build_bdd,
    build_cap_bdd,
    build_cost_bdd,
    dump_bdd,
    enumerate_paths,
    reduce,
    shortest_path,
)
from bddbenders.model import IndicatorExpr, LinearRow, Link, Mode, Scenario

from oracles import bdd_paths, dominating_sets, path_value, recourse_enum
from programs import random_program


def example(mode):
    return smwds.to_scenario(smwds.example_scenario(), mode)


@pytest.fixture(scope="module")
def cap():
    return build_cap_bdd(example(Mode.CAPACITY))


@pytest.fixture(scope="module")
def cost():
    return build_cost_bdd(example(Mode.COST))


def connected_instance(n, density, seed):
    # sparse draws that cannot be connected are skipped
    assume(smwds.edge_count(n, density) >= n - 1)
    return smwds.generate_instance(n, density, seed)


def assignment_sets(bdd, x):
    return {p.bits for p in enumerate_paths(bdd, x)}


# -------------------------------------------------------------- structure


def test_capacity_diagram_of_the_example(cap):
    assert cap.num_nodes == 19
    assert cap.layer_sizes() == (1, 2, 4, 6, 5, 1)


def test_cost_diagram_of_the_example(cost):
    assert cost.num_nodes == 11
    assert cost.layer_sizes() == (1, 2, 2, 3, 2, 1)


def test_unreduced_cost_diagram_is_larger(cost):
    raw = build_cost_bdd(example(Mode.COST), reduced=False)
    assert raw.num_nodes > cost.num_nodes
    assert reduce(raw).layer_sizes() == cost.layer_sizes()


def test_path_graph_by_hand():
    # path 0-1-2: root; {2}, {0,1,2}; {}, {2}, bypass {1,2}; terminal
    g = smwds.Graph.from_edges(3, [(0, 1), (1, 2)])
    sc = smwds.to_scenario(smwds.SmwdsScenario(g, (1, 1, 1)), Mode.CAPACITY)
    bdd = build_cap_bdd(sc)
    assert bdd.layer_sizes() == (1, 2, 3, 1)
    assert bdd.num_arcs == 12
    assert bdd.num_capacitated_arcs == 3
    caps = sorted(tuple(str(bdd.link_exprs[i]) for i in c) for _, _, _, _, c in bdd.arcs() if c)
    assert caps == [("x0+x1",), ("x0+x1+x2", "x1+x2"), ("x1+x2",)]


def test_links_that_never_bind_give_no_capacities():
    sc = Scenario(0, 1, 2, (1, 2), (0, 0), links=(Link(IndicatorExpr.sum_of([0]), 0),),
                  rows=(LinearRow(((0, 1), (1, 1)), ">=", 1),),
                  linked_rows=(LinearRow(((0, 1),), ">=", 0),))
    assert build_cap_bdd(sc).num_capacitated_arcs == 0


def test_single_vertex():
    g = smwds.Graph.from_edges(1, [])
    sc = smwds.to_scenario(smwds.SmwdsScenario(g, (7,)), Mode.COST)
    bdd = build_cost_bdd(sc)
    assert bdd.layer_sizes() == (1, 1)
    assert bdd.num_zero_arcs == 0 and bdd.num_one_arcs == 1
    assert [shortest_path(bdd, [b]).value for b in (0, 1)] == [7, 0]


def test_triangle_paths_are_its_dominating_sets():
    g = smwds.Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    bdd = build_cost_bdd(smwds.to_scenario(smwds.SmwdsScenario(g, (1, 1, 1)), Mode.COST))
    got = {frozenset(i for i, b in enumerate(bits) if b) for bits in assignment_sets(bdd, [0, 0, 0])}
    assert got == set(dominating_sets(3, g.edges()))
    assert len(got) == 7


@pytest.mark.parametrize("fixture", ["cap", "cost"])
def test_paths_at_zero_are_the_dominating_sets(fixture, request):
    bdd = request.getfixturevalue(fixture)
    got = {frozenset(i for i, b in enumerate(bits) if b) for bits in assignment_sets(bdd, [0] * 5)}
    want = set(dominating_sets(5, smwds.EXAMPLE_EDGES))
    assert got == want and len(want) == 23
    assert shortest_path(bdd, [0] * 5).value == 2


def test_everything_selected_opens_every_bypass(cap):
    assert len(assignment_sets(cap, [1] * 5)) == 32
    assert shortest_path(cap, [1] * 5).value == 0


@pytest.mark.parametrize("x, q", [([0] * 5, 2), ([0, 0, 1, 0, 0], 1), ([1] * 5, 0)])
@pytest.mark.parametrize("fixture", ["cap", "cost"])
def test_example_recourse_values(fixture, x, q, request):
    assert shortest_path(request.getfixturevalue(fixture), x).value == q


def test_capacity_node_duals_match_the_printed_figure(cap):
    sp = shortest_path(cap, [0, 0, 1, 0, 0])
    layers = [sorted(int(sp.pi[u]) for u in cap.layer_nodes(j)) for j in range(6)]
    assert layers == [[1], [0, 1], [0, 0, 0, 1], [0, 0, 0, 0, 1, 1], [0] * 5, [0]]


def test_cost_node_duals_match_the_printed_figure(cost):
    sp = shortest_path(cost, [0, 0, 1, 0, 0])
    layers = [sorted(int(sp.pi[u]) for u in cost.layer_nodes(j)) for j in range(6)]
    assert layers == [[1], [0, 1], [0, 1], [0, 1, 1], [0, 1], [0]]


def test_shortest_path_reports_a_path(cost):
    sp = shortest_path(cost, [0, 0, 1, 0, 0])
    bits = sp.path.bits
    assert sp.path.cost == 1
    assert frozenset(i for i, b in enumerate(bits) if b) | {2} in set(dominating_sets(5, smwds.EXAMPLE_EDGES))


# -------------------------------------------------------------- reduction


def test_reduce_is_idempotent(cap, cost):
    for bdd in (cap, cost):
        assert dump_bdd(reduce(bdd)) == dump_bdd(bdd)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 8), st.sampled_from([0.4, 0.6, 1.0]), st.integers(0, 10_000),
       st.sampled_from(list(Mode)))
def test_reduce_keeps_paths_and_costs(n, density, seed, mode):
    inst = connected_instance(n, density, seed)
    sm = smwds.sample_scenarios(inst, 1, seed)[0]
    sc = smwds.to_scenario(sm, mode)
    raw = build_bdd(sc, mode, reduced=False)
    red = reduce(raw)
    rnd = random.Random(seed)
    for _ in range(20):
        x = [rnd.randint(0, 1) for _ in range(n)]
        a = sorted((p.bits, p.cost) for p in enumerate_paths(raw, x))
        b = sorted((p.bits, p.cost) for p in enumerate_paths(red, x))
        assert a == b


# ----------------------------------------------------- exact recourse value


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 8), st.sampled_from([0.4, 0.6, 1.0]), st.integers(0, 10_000))
def test_both_encodings_give_the_recourse_value(n, density, seed):
    inst = connected_instance(n, density, seed)
    sm = smwds.sample_scenarios(inst, 1, seed)[0]
    cap = build_cap_bdd(smwds.to_scenario(sm, Mode.CAPACITY))
    cost = build_cost_bdd(smwds.to_scenario(sm, Mode.COST))
    for x in itertools.product((0, 1), repeat=n):
        q = smwds.recourse_brute_force(sm, x)
        assert shortest_path(cap, x).value == q
        assert shortest_path(cost, x).value == q


@pytest.mark.parametrize("seed", range(25))
@pytest.mark.parametrize("mode", list(Mode))
def test_generic_rows_give_the_recourse_value(seed, mode):
    sp = random_program(seed, mode)
    for s in sp.scenarios:
        bdd = build_bdd(s, mode)
        for x in itertools.product((0, 1), repeat=sp.num_first_stage):
            assert shortest_path(bdd, x).value == recourse_enum(s, x, mode.value)


@pytest.mark.parametrize("seed", range(10))
def test_shortest_path_is_the_cheapest_enumerated_path(seed):
    sp = random_program(seed, Mode.CAPACITY)
    for s in sp.scenarios:
        bdd = build_cap_bdd(s)
        paths = bdd_paths(bdd)
        for x in itertools.product((0, 1), repeat=sp.num_first_stage):
            vals = [v for v in (path_value(bdd, arcs, x) for _, arcs in paths) if v is not None]
            assert shortest_path(bdd, x).value == min(vals)


def test_fractional_points_and_exact_costs(cap):
    sp = shortest_path(cap, [0.25, 0, 0, 0, 0])
    assert np.isfinite(float(sp.value))


# ------------------------------------------------------------------ errors


def test_node_budget():
    inst = smwds.generate_instance(12, 0.3, 1)
    sc = smwds.to_scenario(smwds.sample_scenarios(inst, 1, 1)[0], Mode.CAPACITY)
    with pytest.raises(ResourceError):
        build_cap_bdd(sc, node_budget=10)


def test_path_limit(cap):
    with pytest.raises(ResourceError):
        enumerate_paths(cap, [1] * 5, limit=5)


def test_cost_link_must_be_zero_one():
    sc = Scenario(0, 1, 1, (1,), (0,), links=(Link(IndicatorExpr.sum_of([0, 1]), 0),))
    with pytest.raises(DiagramError):
        build_cost_bdd(sc)


def test_no_open_path_signals_infeasible_recourse():
    sc = Scenario(0, 1, 2, (1, 1), (0, 0), links=(Link(IndicatorExpr.sum_of([0]), 0),),
                  rows=(LinearRow(((0, 1), (1, 1)), ">=", 1),),
                  linked_rows=(LinearRow(((0, 1), (1, 1)), "<=", 0),))
    bdd = build_cap_bdd(sc)
    assert shortest_path(bdd, [1]).value == 1
    with pytest.raises(RecourseInfeasibleError):
        shortest_path(bdd, [0])


# -------------------------------------------------------------------- dump


def test_dump_lists_every_node_and_arc(cap):
    text = dump_bdd(cap)
    lines = text.splitlines()
    assert lines[0] == "bdd cap vars 5 nodes 19 arcs %d" % cap.num_arcs
    assert sum(ln.startswith("node ") for ln in lines) == 19
    assert sum(ln.startswith("arc ") for ln in lines) == cap.num_arcs
    assert any("cap [x0+x1+x2]" in ln for ln in lines)


def test_cost_dump_shows_discount_indicator(cost):
    assert any(ln.endswith("[x2]") and " one 2 " in ln for ln in dump_bdd(cost).splitlines())
