"""Back-door identification and ATE classification on a small hand-built graph.

T affects Y directly and through M; C confounds T and Y; W is a sibling of T
with no path to Y. Each query is classified as confirmed, refuted or
inconclusive.
"""
from causalmi.causal import MARKS, QueryPair, aggregate_results, run_query_suite
from causalmi.simulator import make_sem, sample

coefs = {("C", "T"): 0.8, ("C", "Y"): 0.6, ("T", "M"): 1.0, ("M", "Y"): 0.5, ("T", "Y"): 0.3, ("C", "W"): 1.0}
sem = make_sem(["C", "T", "W", "M", "Y"], coefs, 0.5)
d = sample(sem, 5000, seed=3)

suite = [("T", "Y"), ("W", "Y"), ("Y", "T"), ("M", "Y")]
rows = run_query_suite(d, sem.dag, suite, endpoints={n: (1.0, 0.0) for n in sem.dag.nodes})
for r in rows:
    a = r.estimate
    print(f"{r.query.treatment} -> {r.query.outcome}: ATE {a.value:+.3f} p={a.p_value:.3g} "
          f"adjust {list(a.adjustment_set)} {MARKS[r.classification]} {r.classification}")

labelled = run_query_suite(d, sem.dag, [QueryPair("T", "Y", "H1"), QueryPair("M", "Y", "H1"), QueryPair("W", "Y", "H2")],
                           endpoints={n: (1.0, 0.0) for n in sem.dag.nodes})
print({k: MARKS[v] for k, v in aggregate_results(labelled).items()})
