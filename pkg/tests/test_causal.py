import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from causalmi.causal import (
    CONFIRMED,
    INCONCLUSIVE,
    REFUTED,
    AteEstimate,
    Estimand,
    PositivityWarning,
    QueryPair,
    aggregate_results,
    classify_query,
    estimate_ate,
    identify_backdoor,
    is_valid_backdoor_set,
    naive_conditional_effect,
    parse_suite,
    run_query_suite,
    write_query_report,
)
from causalmi.dataset import Dataset, load_traces
from causalmi.graph import Dag, GraphError, d_separated
from causalmi.simulator import analytical_ate, make_sem, random_sem, sample

CONFOUNDED = Dag("TZXY", [("T", "X"), ("Z", "X"), ("T", "Y"), ("Z", "Y"), ("X", "Y")])
COLLIDER_GRAPH = Dag(
    "TZWXY",
    [("T", "X"), ("Z", "X"), ("T", "Y"), ("Z", "Y"), ("X", "Y"),
     ("T", "W"), ("Z", "W"), ("W", "X"), ("W", "Y")],
)
MEDIATED = Dag(
    ["NumParams", "TrainSize", "AccDiff", "MIAcc"],
    [("NumParams", "AccDiff"), ("TrainSize", "AccDiff"), ("NumParams", "MIAcc"),
     ("TrainSize", "MIAcc"), ("AccDiff", "MIAcc")],
)


def triangle(n=10_000, seed=0):
    sem = make_sem("ZXY", {("Z", "X"): 1.0, ("Z", "Y"): 1.0, ("X", "Y"): 2.0}, 1.0)
    return sem, sample(sem, n, seed=seed)


def brute_minimal_backdoor(nodes, edges, t, o):
    """Oracle: smallest valid set by exhaustive search with path-enumeration d-separation."""
    desc = oracles.descendants(nodes, edges, t)
    cut = [e for e in edges if e[0] != t]
    others = sorted(n for n in nodes if n not in (t, o) and n not in desc)
    for z in oracles.all_conditioning_sets(others):
        if oracles.brute_d_separated(nodes, cut, t, o, set(z)):
            return z
    return None


def estimate(value=0.3, p=0.01, zero=False):
    return AteEstimate("X", "Y", value, 0.01, p, 1.0, 0.0, 100, (), zero)


class TestIdentify:
    def test_two_confounders(self):
        e = identify_backdoor(CONFOUNDED, "X", "Y")
        assert e.adjustment_set == ("T", "Z") and e.identifiable and not e.zero_effect

    def test_excludes_collider_descendant(self):
        e = identify_backdoor(COLLIDER_GRAPH, "W", "Y")
        assert "X" not in e.adjustment_set
        assert set(e.adjustment_set) <= {"T", "Z"}
        assert e.adjustment_set == ("T", "Z")
        # adjusting for X would be invalid
        assert not is_valid_backdoor_set(COLLIDER_GRAPH, "W", "Y", {"T", "Z", "X"})

    def test_mediator_not_controlled(self):
        e = identify_backdoor(MEDIATED, "NumParams", "MIAcc")
        assert e.adjustment_set == ()
        assert identify_backdoor(MEDIATED, "AccDiff", "MIAcc").adjustment_set == ("NumParams", "TrainSize")

    def test_zero_effect(self):
        e = identify_backdoor(CONFOUNDED, "Y", "T")
        assert e.zero_effect and e.identifiable

    def test_parents_fallback(self):
        e = identify_backdoor(COLLIDER_GRAPH, "X", "Y", minimize=False)
        assert set(e.adjustment_set) == {"T", "Z", "W"}

    def test_unknown_and_same_node(self):
        with pytest.raises(GraphError):
            identify_backdoor(CONFOUNDED, "X", "Q")
        with pytest.raises(GraphError):
            identify_backdoor(CONFOUNDED, "X", "X")

    def test_expression_mentions_set(self):
        assert "T, Z" in identify_backdoor(CONFOUNDED, "X", "Y").expression

    @given(st.integers(0, 10**6))
    def test_minimal_and_sound(self, seed):
        rng = np.random.default_rng(seed)
        nodes, edges = oracles.random_dag(rng, 6)
        g = Dag(nodes, edges)
        for t in nodes:
            for o in nodes:
                if t == o or not g.has_directed_path(t, o):
                    continue
                e = identify_backdoor(g, t, o)
                assert d_separated(g.without_outgoing(t), t, o, e.adjustment_set)
                assert not set(e.adjustment_set) & g.descendants(t)
                want = brute_minimal_backdoor(nodes, edges, t, o)
                assert want is not None and len(e.adjustment_set) == len(want)


class TestEstimate:
    def test_triangle(self):
        sem, d = triangle()
        e = identify_backdoor(sem.dag, "X", "Y")
        ate = estimate_ate(d, e, 1.0, 0.0)
        assert 1.95 <= ate.value <= 2.05
        assert 0 <= ate.p_value <= 1 and ate.std_error > 0

    def test_a_equals_b(self):
        sem, d = triangle(2000)
        assert estimate_ate(d, identify_backdoor(sem.dag, "X", "Y"), 0.7, 0.7).value == 0.0

    def test_zero_effect(self):
        sem, d = triangle(500)
        ate = estimate_ate(d, identify_backdoor(sem.dag, "Y", "Z"))
        assert ate.value == 0.0 and ate.p_value == 1.0 and ate.zero_effect

    def test_not_identifiable_rejected(self):
        _, d = triangle(100)
        with pytest.raises(GraphError):
            estimate_ate(d, Estimand("X", "Y", (), False, ""))

    def test_positivity_violation(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(2, 300))
        d = Dataset(("A", "B", "T", "Y"), np.column_stack([a, b, a - b, a + rng.normal(size=300)]))
        with pytest.warns(PositivityWarning):
            ate = estimate_ate(d, Estimand("T", "Y", ("A", "B"), True, ""))
        assert math.isnan(ate.value) and classify_query(ate) == INCONCLUSIVE

    def test_bootstrap_p(self):
        sem, d = triangle(500)
        e = identify_backdoor(sem.dag, "X", "Y")
        ate = estimate_ate(d, e, p_method="bootstrap", bootstrap_replicates=200, seed=1)
        assert ate.p_value == 0.0
        assert ate == estimate_ate(d, e, p_method="bootstrap", bootstrap_replicates=200, seed=1)
        with pytest.raises(ValueError):
            estimate_ate(d, e, p_method="z")

    @given(st.floats(-5, 5), st.floats(-5, 5))
    def test_linearity_and_antisymmetry(self, a, b):
        sem, d = triangle(300, seed=4)
        e = identify_backdoor(sem.dag, "X", "Y")
        unit = estimate_ate(d, e, 1.0, 0.0).value
        assert estimate_ate(d, e, a, b).value == pytest.approx((a - b) * unit, rel=1e-12, abs=1e-12)
        assert estimate_ate(d, e, a, b).value == -estimate_ate(d, e, b, a).value


class TestNaive:
    def test_unconfounded_agrees(self):
        sem = make_sem("XY", {("X", "Y"): 2.0}, 1.0)
        d = sample(sem, 5000, seed=2)
        ate = estimate_ate(d, identify_backdoor(sem.dag, "X", "Y"))
        naive = naive_conditional_effect(d, "X", "Y")
        assert abs(naive - ate.value) < 4 * ate.std_error

    def test_confounded_bias(self):
        sem, d = triangle()
        adjusted = estimate_ate(d, identify_backdoor(sem.dag, "X", "Y")).value
        naive = naive_conditional_effect(d, "X", "Y")
        # omitted-variable bias beta_ZX beta_ZY Var(Z) / Var(X) = 1 * 1 * 1 / 2
        assert naive - adjusted == pytest.approx(0.5, abs=0.1)


class TestClassify:
    def test_examples(self):
        assert classify_query(estimate(0.30, 0.01)) == CONFIRMED
        assert classify_query(estimate(1.47, 0.2)) == INCONCLUSIVE
        assert classify_query(estimate(0.0, 1.0, zero=True)) == REFUTED

    def test_epsilon(self):
        assert classify_query(estimate(5e-4, 0.01)) == REFUTED
        assert classify_query(estimate(5e-4, 0.01), epsilon=1e-4) == CONFIRMED
        with pytest.raises(ValueError):
            classify_query(estimate(), epsilon=-1)

    def test_p_rule_precedes_epsilon(self):
        assert classify_query(estimate(0.0, 0.5)) == INCONCLUSIVE

    def test_boundary_p(self):
        assert classify_query(estimate(0.3, 0.05)) == CONFIRMED

    def test_aggregate(self):
        from causalmi.causal import QueryRow

        rows = [
            QueryRow(QueryPair("a", "y", "Q2"), classification=CONFIRMED),
            QueryRow(QueryPair("b", "y", "Q2"), classification=INCONCLUSIVE),
            QueryRow(QueryPair("c", "y", "Q7"), classification=INCONCLUSIVE),
            QueryRow(QueryPair("d", "y", "Q7"), classification=REFUTED),
            QueryRow(QueryPair("e", "y", "Q1"), classification=CONFIRMED),
        ]
        assert aggregate_results(rows) == {"Q2": INCONCLUSIVE, "Q7": REFUTED, "Q1": CONFIRMED}


class TestSuite:
    def test_parse(self):
        suite = parse_suite("# c\nQ2: TrainVar -> ShadowAcc\nQ2: TestVar -> ShadowAcc\nA -> MLLeakAcc-l\n")
        assert suite == [QueryPair("TrainVar", "ShadowAcc", "Q2"), QueryPair("TestVar", "ShadowAcc", "Q2"),
                         QueryPair("A", "MLLeakAcc-l", "")]
        with pytest.raises(ValueError, match=":1:"):
            parse_suite("nonsense\n")

    def test_empty_suite(self):
        _, d = triangle(100)
        assert run_query_suite(d, CONFOUNDED, []) == []

    def test_rows_in_order_and_errors_recorded(self):
        sem, d = triangle(1000)
        rows = run_query_suite(d, sem.dag, [("X", "Y"), ("X", "Q"), ("Z", "Y")])
        assert [r.query.treatment for r in rows] == ["X", "X", "Z"]
        assert rows[1].estimate is None and rows[1].error
        assert rows[0].estimate.a == d.column("X").max() and rows[0].estimate.b == d.column("X").min()

    def test_endpoint_override(self):
        sem, d = triangle(1000)
        (row,) = run_query_suite(d, sem.dag, [("X", "Y")], endpoints={"X": (1.0, 0.0)})
        assert (row.estimate.a, row.estimate.b) == (1.0, 0.0)

    def test_matches_sem_oracle(self):
        sem = random_sem(6, 0.5, 2.0, 0.5, seed=12)
        d = sample(sem, 50_000, seed=12)
        pairs = [(x, y) for x in sem.dag.nodes for y in sem.dag.nodes
                 if x != y and sem.dag.has_directed_path(x, y)]
        assert pairs
        rows = run_query_suite(d, sem.dag, pairs, endpoints={x: (1.0, 0.0) for x, _ in pairs})
        for r in rows:
            truth = analytical_ate(sem, r.query.treatment, r.query.outcome)
            assert r.estimate.value == pytest.approx(truth, rel=0.05, abs=0.01)

    def test_graph_selection(self):
        sem, d = triangle(500)
        other = Dag(["Q"])
        rows = run_query_suite(d, {"Y": sem.dag, "Q": other}, [("X", "Y")])
        assert rows[0].estimate is not None
        rows = run_query_suite(d, [other, sem.dag], [("X", "Y")])
        assert rows[0].estimate is not None

    def test_report(self, tmp_path):
        sem, d = triangle(500)
        rows = run_query_suite(d, sem.dag, [QueryPair("X", "Y", "Q1"), QueryPair("Y", "Z", "Q2"),
                                            QueryPair("X", "nope", "Q3")])
        write_query_report(rows, tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0].startswith("query,attack,feature,ate,std_error,p_value")
        assert lines[1].split(",")[:3] == ["Q1", "Y", "X"] and "✓" in lines[1]
        assert "×" in lines[2] and lines[2].split(",")[3] == "0.0"
        assert lines[3].split(",")[-2] == "inconclusive"
