"""Ground-truth linear SEMs: sampling and analytical total effects."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dataset import Dataset
from .gaussian import LinearGaussianNet
from .graph import Dag, GraphError

__all__ = [
    "SemSpec",
    "make_sem",
    "sample",
    "analytical_ate",
    "path_sum_effect",
    "matrix_effect",
    "random_sem",
    "mi_trace_sem",
    "ATTACK_COLUMNS",
]

ATTACK_COLUMNS = (
    "ShadowAcc",
    "MLLeakAcc",
    "MLLeakAcc-l",
    "MLLeakTop3Acc",
    "MLLeakTop3Acc-l",
    "ThreshAcc",
)


@dataclass(frozen=True)
class SemSpec:
    net: LinearGaussianNet
    root_means: Mapping[str, float]

    def __post_init__(self):
        roots = {n for n in self.net.nodes if not self.net.dag.parents(n)}
        if set(self.root_means) != roots:
            raise GraphError("every root (and only roots) needs a mean")
        for r in roots:
            if self.root_means[r] != self.net.intercepts[r]:
                raise GraphError(f"root mean of {r!r} disagrees with its intercept")

    @property
    def dag(self) -> Dag:
        return self.net.dag


def make_sem(
    nodes: Sequence[str],
    coefficients: Mapping[tuple[str, str], float],
    noise_variance: float | Mapping[str, float] = 1.0,
    intercepts: Mapping[str, float] | None = None,
) -> SemSpec:
    """Build a SEM from ``{(parent, child): beta}``; root intercepts are root means."""
    dag = Dag(nodes, coefficients.keys())
    intercepts = dict(intercepts or {})
    coefs: dict[str, dict[str, float]] = {n: {} for n in dag.nodes}
    for (p, c), beta in coefficients.items():
        coefs[c][p] = float(beta)
    if isinstance(noise_variance, Mapping):
        variances = {n: float(noise_variance[n]) for n in dag.nodes}
    else:
        variances = {n: float(noise_variance) for n in dag.nodes}
    net = LinearGaussianNet(dag, {n: float(intercepts.get(n, 0.0)) for n in dag.nodes}, coefs, variances)
    roots = {n: net.intercepts[n] for n in dag.nodes if not dag.parents(n)}
    return SemSpec(net, roots)


def sample(sem: SemSpec, n: int, seed: int = 0) -> Dataset:
    """Draw ``n`` rows, nodes generated in topological order."""
    if n < 1:
        raise ValueError("n must be >= 1")
    net = sem.net
    nodes = net.nodes
    idx = {v: i for i, v in enumerate(nodes)}
    noise = np.random.default_rng(seed).standard_normal((n, len(nodes)))
    out = np.zeros((n, len(nodes)))
    for v in net.dag.topological_order():
        i = idx[v]
        col = net.intercepts[v] + np.sqrt(net.variances[v]) * noise[:, i]
        for p, beta in net.coefficients[v].items():
            col = col + beta * out[:, idx[p]]
        out[:, i] = col
    return Dataset(nodes, out)


def path_sum_effect(sem: SemSpec, treatment: str, outcome: str) -> float:
    """Sum over directed paths of the product of edge coefficients."""
    dag = sem.dag
    total = 0.0
    stack = [(treatment, 1.0)]
    while stack:
        node, prod = stack.pop()
        for child in dag.children(node):
            w = prod * sem.net.coefficients[child][node]
            if child == outcome:
                total += w
            else:
                stack.append((child, w))
    return total


def matrix_effect(sem: SemSpec, treatment: str, outcome: str) -> float:
    """Entry of ``(I - B)^-1 - I``: the reduced-form total effect."""
    B = sem.net.coefficient_matrix()
    T = np.linalg.inv(np.eye(B.shape[0]) - B) - np.eye(B.shape[0])
    nodes = sem.net.nodes
    return float(T[nodes.index(outcome), nodes.index(treatment)])


def analytical_ate(sem: SemSpec, treatment: str, outcome: str) -> float:
    """Total causal effect of a unit change in ``treatment`` on ``outcome``."""
    dag = sem.dag
    dag.parents(treatment)
    dag.parents(outcome)
    if treatment == outcome:
        raise GraphError("treatment and outcome must differ")
    by_paths = path_sum_effect(sem, treatment, outcome)
    by_matrix = matrix_effect(sem, treatment, outcome)
    if not np.isclose(by_paths, by_matrix, rtol=1e-9, atol=1e-9):
        raise RuntimeError(f"effect oracles disagree: {by_paths} vs {by_matrix}")
    return by_paths


def random_sem(
    node_count: int,
    edge_probability: float,
    coefficient_range: float = 2.0,
    noise_sigma: float = 0.5,
    seed: int = 0,
    min_abs: float = 0.5,
    intercept_range: float = 1.0,
) -> SemSpec:
    """Random DAG from a random topological order with Bernoulli edges.

    Coefficients have a random sign and magnitude uniform in
    ``[min_abs, coefficient_range]``; intercepts are uniform in
    ``+-intercept_range``. Nodes are named ``X0 .. X{n-1}``.
    """
    if node_count < 1:
        raise ValueError("node_count must be >= 1")
    if not 0.0 <= edge_probability <= 1.0:
        raise ValueError("edge_probability must lie in [0, 1]")
    if not 0.0 <= min_abs <= coefficient_range:
        raise ValueError("need 0 <= min_abs <= coefficient_range")
    rng = np.random.default_rng(seed)
    names = [f"X{i}" for i in range(node_count)]
    order = rng.permutation(node_count)
    coefs = {}
    for i in range(node_count):
        for j in range(i + 1, node_count):
            if rng.random() < edge_probability:
                mag = rng.uniform(min_abs, coefficient_range)
                sign = 1.0 if rng.random() < 0.5 else -1.0
                coefs[(names[order[i]], names[order[j]])] = sign * mag
    intercepts = {n: float(rng.uniform(-intercept_range, intercept_range)) for n in names}
    return make_sem(names, coefs, noise_sigma**2, intercepts)


def mi_trace_sem(noise_scale: float = 1.0) -> SemSpec:
    """Synthetic SEM over the MI-attack trace variables.

    Units are rescaled (``TrainSize`` in thousands of samples, ``NumParams``
    in millions). Gap and bias columns are exact differences of their
    sources, as in real traces.
    """
    s = noise_scale
    nodes = [
        "TrainSize", "NumParams",
        "TrainVar", "TestVar", "TrainLoss", "TestLoss",
        "TrainAcc", "TestAcc", "AccDiff", "LossDiff", "TrainBias", "TestBias",
        "CentroidDist", *ATTACK_COLUMNS,
    ]
    coefs = {
        ("NumParams", "TrainVar"): 0.010, ("TrainSize", "TrainVar"): -0.008,
        ("NumParams", "TestVar"): 0.015, ("TrainSize", "TestVar"): -0.012,
        ("NumParams", "TrainLoss"): -0.030, ("TrainSize", "TrainLoss"): 0.020,
        ("NumParams", "TestLoss"): 0.050, ("TrainSize", "TestLoss"): -0.080, ("TrainLoss", "TestLoss"): 0.5,
        ("TrainLoss", "TrainAcc"): -0.5, ("NumParams", "TrainAcc"): 0.010,
        ("TestLoss", "TestAcc"): -0.2,
        ("TrainAcc", "AccDiff"): 1.0, ("TestAcc", "AccDiff"): -1.0,
        ("TestLoss", "LossDiff"): 1.0, ("TrainLoss", "LossDiff"): -1.0,
        ("TrainLoss", "TrainBias"): 1.0, ("TrainVar", "TrainBias"): -1.0,
        ("TestLoss", "TestBias"): 1.0, ("TestVar", "TestBias"): -1.0,
        ("AccDiff", "CentroidDist"): 0.8, ("TestVar", "CentroidDist"): 0.5,
        ("AccDiff", "ShadowAcc"): 0.3, ("TestVar", "ShadowAcc"): 0.6, ("NumParams", "ShadowAcc"): 0.01,
        ("TestVar", "MLLeakAcc"): 0.8, ("TrainVar", "MLLeakAcc"): -0.3, ("AccDiff", "MLLeakAcc"): 0.2,
        ("TestVar", "MLLeakAcc-l"): 0.8, ("TrainVar", "MLLeakAcc-l"): -0.25, ("AccDiff", "MLLeakAcc-l"): 0.25,
        ("CentroidDist", "MLLeakTop3Acc"): 0.3, ("TestVar", "MLLeakTop3Acc"): 0.7,
        ("TrainVar", "MLLeakTop3Acc"): -0.3,
        ("CentroidDist", "MLLeakTop3Acc-l"): 0.3, ("TestVar", "MLLeakTop3Acc-l"): 0.7,
        ("LossDiff", "ThreshAcc"): 0.4,
    }
    intercepts = {
        "TrainSize": 3.0, "NumParams": 5.0,
        "TrainVar": 0.08, "TestVar": 0.15, "TrainLoss": 0.2, "TestLoss": 1.0,
        "TrainAcc": 1.0, "TestAcc": 0.8, "CentroidDist": 0.1,
        "ShadowAcc": 0.5, "MLLeakAcc": 0.5, "MLLeakAcc-l": 0.5,
        "MLLeakTop3Acc": 0.5, "MLLeakTop3Acc-l": 0.5, "ThreshAcc": 0.5,
    }
    sd = {
        "TrainSize": 2.0, "NumParams": 2.0,
        "TrainVar": 0.01, "TestVar": 0.015, "TrainLoss": 0.03, "TestLoss": 0.08,
        "TrainAcc": 0.01, "TestAcc": 0.02,
        "AccDiff": 0.0, "LossDiff": 0.0, "TrainBias": 0.0, "TestBias": 0.0,
        "CentroidDist": 0.02,
        "ShadowAcc": 0.01, "MLLeakAcc": 0.01, "MLLeakAcc-l": 0.01,
        "MLLeakTop3Acc": 0.01, "MLLeakTop3Acc-l": 0.01, "ThreshAcc": 0.02,
    }
    variances = {n: (sd[n] * (s if n not in ("TrainSize", "NumParams") else 1.0)) ** 2 for n in nodes}
    return make_sem(nodes, coefs, variances, intercepts)
