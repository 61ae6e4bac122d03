"""Linear-Gaussian networks: fitting, implied joint Gaussian, prediction, CV metrics."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy import linalg

from .dataset import Dataset, DatasetError, SplitPlan, cv_splits, format_float
from .graph import Dag, GraphError
from .regression import ols

log = logging.getLogger(__name__)

__all__ = [
    "LinearGaussianNet",
    "JointGaussian",
    "PredictiveReport",
    "SingularEvidenceWarning",
    "fit",
    "to_joint",
    "predict",
    "predict_rows",
    "structural_mean",
    "cv_predictive_metrics",
    "pearson_baseline",
    "save_net",
    "load_net",
]


class SingularEvidenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LinearGaussianNet:
    """Each node is ``intercept + sum(coef[p] * parent_p) + N(0, variance)``."""

    dag: Dag
    intercepts: Mapping[str, float]
    coefficients: Mapping[str, Mapping[str, float]]
    variances: Mapping[str, float]

    def __post_init__(self):
        for n in self.dag.nodes:
            if n not in self.intercepts or n not in self.variances:
                raise GraphError(f"missing parameters for node {n!r}")
            if set(self.coefficients.get(n, {})) != set(self.dag.parents(n)):
                raise GraphError(f"coefficients of {n!r} must be keyed by its parents")
            if self.variances[n] < 0:
                raise ValueError(f"negative noise variance for {n!r}")

    @property
    def nodes(self) -> tuple[str, ...]:
        return self.dag.nodes

    def coefficient_matrix(self) -> np.ndarray:
        """``B[i, j]`` is the coefficient of node j in node i's equation."""
        idx = {n: i for i, n in enumerate(self.nodes)}
        B = np.zeros((len(idx), len(idx)))
        for child, coefs in self.coefficients.items():
            for parent, beta in coefs.items():
                B[idx[child], idx[parent]] = beta
        return B


@dataclass(frozen=True)
class JointGaussian:
    nodes: tuple[str, ...]
    mean: np.ndarray
    covariance: np.ndarray

    def index(self, names) -> list[int]:
        pos = {n: i for i, n in enumerate(self.nodes)}
        try:
            return [pos[n] for n in names]
        except KeyError as exc:
            raise GraphError(f"unknown node {exc.args[0]!r}") from None


@dataclass(frozen=True)
class PredictiveReport:
    mean_correlation: float
    mean_mse: float
    runs: int
    correlations: tuple[float, ...] = ()
    mses: tuple[float, ...] = ()


def fit(d: Dataset, g: Dag) -> LinearGaussianNet:
    """Per-node least squares on the parents; noise variance is RSS / N (floored)."""
    missing = [n for n in g.nodes if n not in d]
    if missing:
        raise DatasetError(f"graph nodes missing from data: {missing}")
    max_parents = max((len(g.parents(n)) for n in g.nodes), default=0)
    if d.n_rows <= max_parents + 2:
        raise DatasetError(f"need more than {max_parents + 2} rows to fit, got {d.n_rows}")
    intercepts, coefs, variances = {}, {}, {}
    for node in g.nodes:
        parents = g.parents(node)
        X = d.select(parents).rows if parents else None
        res = ols(d.column(node), X, with_cov=False)
        intercepts[node] = res.intercept
        coefs[node] = dict(zip(parents, map(float, res.coef)))
        variances[node] = res.mle_variance
    return LinearGaussianNet(g, intercepts, coefs, variances)


def to_joint(net: LinearGaussianNet) -> JointGaussian:
    """Mean ``(I - B)^-1 b0`` and covariance ``(I - B)^-1 diag(s2) (I - B)^-T``."""
    nodes = net.nodes
    order = list(net.dag.topological_order())
    perm = [nodes.index(n) for n in order]
    B = net.coefficient_matrix()[np.ix_(perm, perm)]
    I_B = np.eye(len(order)) - B  # unit lower triangular in topological order
    b0 = np.array([net.intercepts[n] for n in order])
    s2 = np.array([net.variances[n] for n in order])
    A = linalg.solve_triangular(I_B, np.eye(len(order)), lower=True, unit_diagonal=True)
    mu = A @ b0
    cov = (A * s2) @ A.T
    cov = 0.5 * (cov + cov.T)
    inv = np.argsort(perm)
    return JointGaussian(nodes, mu[inv], cov[np.ix_(inv, inv)])


def _conditional_gain(joint: JointGaussian, target: str, given: list[str]) -> np.ndarray:
    t = joint.index([target])[0]
    e = joint.index(given)
    S_ee = joint.covariance[np.ix_(e, e)]
    S_te = joint.covariance[t, e]
    # K = S_te S_ee^+ ; symmetric solve, falls back to least squares when singular
    sol, _, rank, _ = np.linalg.lstsq(S_ee, S_te, rcond=None)
    if rank < len(e):
        warnings.warn(
            f"singular evidence covariance (rank {rank} < {len(e)}); using pseudo-inverse",
            SingularEvidenceWarning,
            stacklevel=3,
        )
    return sol


def predict_rows(net: LinearGaussianNet, evidence: Dataset | Mapping[str, np.ndarray], target: str,
                 joint: JointGaussian | None = None) -> np.ndarray:
    """Conditional mean of ``target`` for each row of evidence."""
    net.dag.parents(target)
    if isinstance(evidence, Dataset):
        evidence = {c: evidence.column(c) for c in evidence.columns if c in net.nodes}
    if target in evidence:
        raise ValueError(f"target {target!r} is part of the evidence")
    joint = joint or to_joint(net)
    given = [n for n in net.nodes if n in evidence]
    t = joint.index([target])[0]
    if not given:
        n_rows = 1
        return np.full(n_rows, joint.mean[t])
    values = np.column_stack([np.atleast_1d(np.asarray(evidence[n], dtype=float)) for n in given])
    K = _conditional_gain(joint, target, given)
    return joint.mean[t] + (values - joint.mean[joint.index(given)]) @ K


def predict(net: LinearGaussianNet, evidence: Mapping[str, float], target: str) -> float:
    """E[target | evidence] under the fitted joint Gaussian."""
    for n in evidence:
        net.dag.parents(n)
    ev = {k: np.array([float(v)]) for k, v in evidence.items()}
    return float(predict_rows(net, ev, target)[0])


def structural_mean(net: LinearGaussianNet, target: str, parent_values: Mapping[str, float]) -> float:
    """Evaluate the node's own linear equation at the given parent values."""
    coefs = net.coefficients[target]
    return float(net.intercepts[target] + sum(b * parent_values[p] for p, b in coefs.items()))


def _pearson(a: np.ndarray, b: np.ndarray) -> float | None:
    if a.size == 0 or np.all(a == a[0]) or np.all(b == b[0]):
        return None
    a = a - a.mean()
    b = b - b.mean()
    na, nb = np.sqrt(a @ a), np.sqrt(b @ b)
    if na == 0 or nb == 0:
        return None
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def cv_predictive_metrics(
    d: Dataset,
    g: Dag,
    target: str,
    plan: SplitPlan = SplitPlan(),
    learner: Callable[[Dataset], Dag] | None = None,
) -> PredictiveReport:
    """Repeated hold-out evaluation of the network's predictions of ``target``.

    The structure ``g`` stays fixed and only parameters are refit per run,
    unless ``learner`` is given, in which case the structure is re-learned on
    each training split. Runs whose observed test target is constant are
    skipped. A constant prediction counts as zero correlation.
    """
    g.parents(target)
    corrs, mses = [], []
    for run, (train, test) in enumerate(cv_splits(d, plan)):
        dag = learner(train) if learner is not None else g
        net = fit(train, dag)
        observed = test.column(target)
        if np.all(observed == observed[0]):
            log.warning("run %d: constant observed target in test split, skipped", run)
            continue
        ev = {n: test.column(n) for n in dag.nodes if n != target and n in test}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SingularEvidenceWarning)
            pred = predict_rows(net, ev, target)
        if pred.size == 1:
            pred = np.full(observed.shape, pred[0])
        r = _pearson(pred, observed)
        corrs.append(0.0 if r is None else r)
        mses.append(float(np.mean((pred - observed) ** 2)))
    if not corrs:
        raise DatasetError("every cross-validation run was degenerate")
    return PredictiveReport(
        float(np.mean(corrs)), float(np.mean(mses)), len(corrs), tuple(corrs), tuple(mses)
    )


def pearson_baseline(d: Dataset, target: str) -> dict[str, float]:
    """Pearson correlation of every other column with ``target``.

    Constant columns (or a constant target) map to 0.0 and are logged.
    """
    y = d.column(target)
    out = {}
    for c in d.columns:
        if c == target:
            continue
        r = _pearson(d.column(c), y)
        if r is None:
            log.warning("column %s or target %s is constant; correlation set to 0", c, target)
            r = 0.0
        out[c] = r
    return out


def save_net(net: LinearGaussianNet, coefficients_path, parameters_path) -> None:
    """Write ``node,parent,coefficient`` and ``node,intercept,variance`` tables."""
    with Path(coefficients_path).open("w", encoding="utf-8") as fh:
        fh.write("node,parent,coefficient\n")
        for node in net.nodes:
            for parent in net.dag.parents(node):
                fh.write(f"{node},{parent},{format_float(net.coefficients[node][parent])}\n")
    with Path(parameters_path).open("w", encoding="utf-8") as fh:
        fh.write("node,intercept,variance\n")
        for node in net.nodes:
            fh.write(f"{node},{format_float(net.intercepts[node])},{format_float(net.variances[node])}\n")


def load_net(coefficients_path, parameters_path) -> LinearGaussianNet:
    with Path(parameters_path).open(newline="", encoding="utf-8") as fh:
        params = list(csv.DictReader(fh))
    with Path(coefficients_path).open(newline="", encoding="utf-8") as fh:
        coef_rows = list(csv.DictReader(fh))
    nodes = [r["node"] for r in params]
    coefs: dict[str, dict[str, float]] = {n: {} for n in nodes}
    for r in coef_rows:
        coefs[r["node"]][r["parent"]] = float(r["coefficient"])
    dag = Dag(nodes, [(p, n) for n, ps in coefs.items() for p in ps])
    return LinearGaussianNet(
        dag,
        {r["node"]: float(r["intercept"]) for r in params},
        coefs,
        {r["node"]: float(r["variance"]) for r in params},
    )
