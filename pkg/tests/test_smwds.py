import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from bddbenders import smwds
from bddbenders.diagram import build_cap_bdd, build_cost_bdd, enumerate_paths, shortest_path
from bddbenders.model import IndicatorExpr, Mode, ModelError
from bddbenders.smwds import (
    GenerationError,
    Graph,
    SmwdsInstance,
    SmwdsScenario,
    WeightDistribution,
)

from oracles import DominationTable, dominating_sets


def states(t, state):
    return {int(t.names[i]) for i in range(len(t.names)) if state >> i & 1}


# ------------------------------------------------------------- transition


def test_selecting_vertex_zero_leaves_two_and_four():
    t = smwds.smwds_transition(smwds.example_scenario())
    assert states(t, t.initial_state) == {0, 1, 2, 3, 4}
    step = t.step(t.initial_state, 0, 1)
    assert states(t, step.state) == {2, 4}
    assert not step.violated


def test_selecting_everything_is_accepting():
    t = smwds.smwds_transition(smwds.example_scenario())
    s = t.initial_state
    for k in range(5):
        s = t.step(s, k, 1).state
    assert s == 0 and t.is_accepting(s)


def test_skipping_zero_one_two_strands_vertex_one():
    t = smwds.smwds_transition(smwds.example_scenario(), Mode.CAPACITY)
    s = t.step(t.initial_state, 0, 0).state
    s = t.step(s, 1, 0).state
    step = t.step(s, 2, 0)
    assert step.violated == (1,)
    # the stranded vertex's covering link is x0+x1+x2
    links = smwds.encode_links(smwds.example_scenario(), Mode.CAPACITY)
    assert str(links[1].expr) == "x0+x1+x2"


def test_cost_mode_forbids_stranding():
    t = smwds.smwds_transition(smwds.example_scenario(), Mode.COST)
    s = t.step(t.step(t.initial_state, 0, 0).state, 1, 0).state
    assert t.step(s, 2, 0) is None


# ----------------------------------------------------------------- links


def test_cost_link_of_vertex_two():
    links = smwds.encode_links(smwds.example_scenario(), Mode.COST)
    assert links[2].expr == IndicatorExpr.sum_of([2]) and links[2].target == 2


def test_isolated_survivor_is_its_own_surrogate():
    # vertex 1's only neighbour has failed
    g = Graph.from_edges(3, [(0, 1), (0, 2)])
    sc = SmwdsScenario(g, (0, 5, 5))
    links = smwds.encode_links(sc, Mode.CAPACITY)
    assert [str(l.expr) for l in links] == ["x1", "x2"]


def test_failed_vertices_are_removed():
    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    sc = SmwdsScenario(g, (4, 0, 6))
    assert sc.survivors == (0, 2)
    assert sc.closed_neighbourhood(1) == ()
    assert sc.neighbours(0) == ()
    # buying the failed middle vertex covers nothing
    assert smwds.recourse_brute_force(sc, (0, 1, 0)) == 10
    assert smwds.recourse_brute_force(sc, (1, 0, 1)) == 0


def test_every_vertex_failed():
    g = Graph.from_edges(2, [(0, 1)])
    sc = SmwdsScenario(g, (0, 0))
    for mode in Mode:
        bdd = (build_cap_bdd if mode is Mode.CAPACITY else build_cost_bdd)(smwds.to_scenario(sc, mode))
        assert shortest_path(bdd, [0, 0]).value == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.sampled_from([0.3, 0.5, 0.8, 1.0]), st.integers(0, 10_000), st.integers(0, 99))
def test_cost_paths_are_dominating_sets_of_the_survivors(n, density, seed, draw):
    assume(smwds.edge_count(n, density) >= n - 1)
    inst = smwds.generate_instance(n, density, seed)
    sc = smwds.sample_scenarios(inst, 1, draw)[0]
    bdd = build_cost_bdd(smwds.to_scenario(sc, Mode.COST))
    surv = sc.survivors
    got = {frozenset(surv[k] for k, b in enumerate(bits) if b)
           for bits in (p.bits for p in enumerate_paths(bdd, [0] * n, limit=10 ** 5))}
    assert got == set(dominating_sets(n, inst.graph.edges(), alive=surv))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.sampled_from([0.3, 0.5, 0.8, 1.0]), st.integers(0, 10_000), st.integers(0, 99))
def test_both_encodings_agree_with_the_domination_table(n, density, seed, draw):
    assume(smwds.edge_count(n, density) >= n - 1)
    inst = smwds.generate_instance(n, density, seed)
    sc = smwds.sample_scenarios(inst, 1, draw)[0]
    table = DominationTable(n, inst.graph.edges(), sc.weights)
    cap = build_cap_bdd(smwds.to_scenario(sc, Mode.CAPACITY))
    cost = build_cost_bdd(smwds.to_scenario(sc, Mode.COST))
    for x in itertools.product((0, 1), repeat=n):
        q = table.value(x)
        assert shortest_path(cap, x).value == q == shortest_path(cost, x).value
        assert smwds.recourse_brute_force(sc, x) == q


# ------------------------------------------------------------ generation


@pytest.mark.parametrize("n, density, m", [(30, 0.2, 87), (5, 0.6, 6), (6, 0.3, 5), (4, 0.5, 3), (10, 1.0, 45)])
def test_edge_count(n, density, m):
    assert smwds.edge_count(n, density) == m


def test_thirty_vertices_at_density_one_fifth():
    inst = smwds.generate_instance(30, 0.2, 0)
    assert inst.graph.num_edges == 87
    assert inst.graph.is_connected()


def test_two_vertices_get_the_single_edge():
    inst = smwds.generate_instance(2, 1.0, 3)
    assert inst.graph.edges() == [(0, 1)]


def test_generation_is_deterministic():
    a = smwds.generate_instance(12, 0.4, 9)
    b = smwds.generate_instance(12, 0.4, 9)
    assert smwds.dumps_instance(a) == smwds.dumps_instance(b)
    assert smwds.dumps_instance(a) != smwds.dumps_instance(smwds.generate_instance(12, 0.4, 10))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 25), st.sampled_from([0.2, 0.3, 0.5, 0.8, 1.0]), st.integers(0, 10_000))
def test_generated_instances_are_well_formed(n, density, seed):
    assume(smwds.edge_count(n, density) >= n - 1)
    inst = smwds.generate_instance(n, density, seed)
    assert inst.graph.num_edges == smwds.edge_count(n, density)
    assert inst.graph.is_connected()
    assert all(20 <= c <= 70 for c in inst.first_stage)
    for w1, p1, w2, p2, p0 in inst.distribution.rows:
        assert 20 <= w1 <= 70 and 20 <= w2 <= 70
        assert p1 + p2 + p0 == 1 and min(p1, p2, p0) >= 0


@pytest.mark.parametrize("n, density", [(1, 1.0), (5, 0.0), (5, 1.5), (10, 0.1)])
def test_generation_rejects(n, density):
    with pytest.raises(GenerationError):
        smwds.generate_instance(n, density, 0)


# -------------------------------------------------------------- sampling


def _instance_with(rows, n=3):
    g = Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])
    return SmwdsInstance(g, (1,) * n, WeightDistribution(tuple(rows)))


def test_no_failures_keeps_every_vertex():
    inst = _instance_with([(20, Fraction(1, 2), 30, Fraction(1, 2), 0)] * 3)
    for sc in smwds.sample_scenarios(inst, 200, 1):
        assert sc.survivors == (0, 1, 2)


def test_certain_failure_removes_the_vertex():
    inst = _instance_with([(20, 1, 30, 0, 0), (20, 0, 30, 0, 1), (20, 0, 30, 1, 0)])
    for sc in smwds.sample_scenarios(inst, 200, 2):
        assert sc.survivors == (0, 2)
        assert sc.weights == (20, 0, 30)


def test_atom_frequencies_within_three_sigma():
    n_draws = 10_000
    inst = _instance_with([(20, Fraction(1, 2), 30, Fraction(3, 10), Fraction(1, 5))] * 3)
    scens = smwds.sample_scenarios(inst, n_draws, 17)
    for v in range(3):
        col = [s.weights[v] for s in scens]
        for w, p in ((20, 0.5), (30, 0.3), (0, 0.2)):
            sigma = math.sqrt(n_draws * p * (1 - p))
            assert abs(col.count(w) - n_draws * p) <= 3 * sigma


def test_scenarios_are_equally_likely():
    scens = smwds.sample_scenarios(smwds.generate_instance(6, 0.5, 1), 7, 3)
    assert [s.probability for s in scens] == [Fraction(1, 7)] * 7
    assert [s.id for s in scens] == list(range(7))


def test_sampling_needs_a_count():
    with pytest.raises(ModelError):
        smwds.sample_scenarios(smwds.example_instance(), 0, 0)


def test_distribution_rejects_bad_rows():
    with pytest.raises(ModelError):
        WeightDistribution(((20, Fraction(1, 2), 30, Fraction(1, 2), Fraction(1, 2)),))
    with pytest.raises(ModelError):
        WeightDistribution(((0, 1, 30, 0, 0),))


# ------------------------------------------------------------ file format


def test_instance_round_trip(tmp_path):
    inst = smwds.generate_instance(9, 0.5, 4)
    path = tmp_path / "g.txt"
    smwds.save_instance(inst, path)
    again = smwds.load_instance(path)
    assert again == inst


@pytest.mark.parametrize("text", ["", "smwds-instance 2\n", "smwds-instance 1\nvertices 2\nedge 0 1\n",
                                  "smwds-instance 1\nvertices 2\nwhatever 3\n",
                                  "smwds-instance 1\nvertices 2\nedge 0\n"])
def test_instance_parse_rejects(text):
    with pytest.raises(ModelError):
        smwds.loads_instance(text)


def test_attach_transitions_after_text_round_trip():
    from bddbenders.model import dumps_program, loads_program

    inst = smwds.generate_instance(6, 0.6, 2)
    sp = smwds.build_program(inst, smwds.sample_scenarios(inst, 3, 2), Mode.COST)
    again = smwds.attach_transitions(loads_program(dumps_program(sp)), inst)
    for a, b in zip(sp.scenarios, again.scenarios):
        assert build_cost_bdd(a).layer_sizes() == build_cost_bdd(b).layer_sizes()


# -------------------------------------------------------------------- SAA


def test_saa_row_structure():
    inst = smwds.generate_instance(6, 0.5, 3)
    rows = smwds.saa_analysis(inst, [3, 8], 3, 50, seed=1)
    assert [r.count for r in rows] == [3, 8]
    for r in rows:
        assert r.replications == 3
        assert r.lb_lo <= r.lb_mean <= r.lb_hi
        assert r.ub_lo <= r.ub_mean <= r.ub_hi
        assert len(r.x) == 6
    table = smwds.saa_table(rows)
    assert len(table[0]) == len(smwds.SAA_FIELDS)


def test_single_replication_on_its_training_sample_has_no_gap():
    inst = smwds.generate_instance(6, 0.5, 3)
    (row,) = smwds.saa_analysis(inst, [5], 1, None, seed=2)
    assert row.gap_pct == 0
    assert row.lb_mean == row.ub_mean


def test_degenerate_distribution_gives_zero_width():
    g = smwds.generate_instance(6, 0.5, 3).graph
    inst = SmwdsInstance(g, (30,) * 6, WeightDistribution.fixed((25, 40, 20, 55, 35, 60)))
    for r in smwds.saa_analysis(inst, [2, 4], 3, 20, seed=0):
        assert r.lb_lo == pytest.approx(r.lb_hi)
        assert r.ub_lo == pytest.approx(r.ub_hi)
        assert r.gap_pct == pytest.approx(0, abs=1e-9)


def test_first_stage_evaluation_matches_brute_force():
    inst = smwds.generate_instance(5, 0.6, 8)
    scens = smwds.sample_scenarios(inst, 4, 8)
    xs = [(0,) * 5, (1, 0, 1, 0, 0), (1,) * 5]
    got = smwds.evaluate_first_stage(inst, scens, xs)
    for i, x in enumerate(xs):
        first = sum(c * b for c, b in zip(inst.first_stage, x))
        assert list(got[i]) == [first + smwds.recourse_brute_force(s, x) for s in scens]


def test_confidence_interval():
    mean, lo, hi = smwds.mean_ci([1, 2, 3, 4, 5])
    assert mean == 3
    # t quantile with 4 degrees of freedom
    assert hi - mean == pytest.approx(2.7764451 * np.std([1, 2, 3, 4, 5], ddof=1) / math.sqrt(5), rel=1e-6)
    assert smwds.mean_ci([7]) == (7, 7, 7)
