"""Score-based structure learning with bootstrap model averaging.

Greedy hill climbing over DAGs under the Gaussian BIC score, repeated on
bootstrap resamples of the traces. Edge strengths are the fraction of
replicates containing each directed edge; an L1-optimal threshold separates
significant edges, which are assembled into the averaged graph.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .dataset import Dataset, DatasetError, bootstrap_resample, format_float
from .graph import ConstraintError, ConstraintSet, Dag, check_constraints, is_acyclic
from .regression import VARIANCE_FLOOR, ols

log = logging.getLogger(__name__)

__all__ = [
    "EdgeStrengths",
    "ScoreReport",
    "bic_node_score",
    "bic_score",
    "hill_climb",
    "bootstrap_strengths",
    "l1_threshold",
    "averaged_graph",
    "learn_structure",
    "write_strengths",
    "DEFAULT_REPLICATES",
]

DEFAULT_REPLICATES = 100
_IMPROVEMENT_TOL = 1e-9
_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class ScoreReport:
    total: float
    per_node: dict[str, float]


@dataclass(frozen=True)
class EdgeStrengths:
    """Fraction of bootstrap graphs containing each candidate directed edge."""

    strengths: Mapping[tuple[str, str], float]
    replicates: int
    enforced: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        for e, v in self.strengths.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"strength of {e} outside [0, 1]: {v}")
        for e in self.enforced:
            if self.strengths.get(e) != 1.0:
                raise ValueError(f"enforced edge {e} must have strength 1")

    def free(self) -> dict[tuple[str, str], float]:
        return {e: v for e, v in self.strengths.items() if e not in self.enforced}


def _node_score(y: np.ndarray, X: np.ndarray | None) -> float:
    n = y.shape[0]
    res = ols(y, X, warn=False, with_cov=False)
    var = max(res.rss / n, VARIANCE_FLOOR)
    k = (0 if X is None else X.shape[1]) + 2
    return -0.5 * n * (math.log(2.0 * math.pi * var) + 1.0) - 0.5 * k * math.log(n)


def bic_node_score(d: Dataset, node: str, parents) -> float:
    """Gaussian log-likelihood of ``node`` given ``parents`` minus ``(k/2) ln N``.

    ``k`` counts the parent coefficients, the intercept and the noise variance.
    """
    parents = list(parents)
    if node in parents:
        raise ValueError(f"{node!r} cannot be its own parent")
    if d.n_rows <= len(parents) + 2:
        raise DatasetError(f"need more than {len(parents) + 2} rows, got {d.n_rows}")
    X = d.select(parents).rows if parents else None
    return _node_score(d.column(node), X)


def bic_score(d: Dataset, g: Dag) -> ScoreReport:
    per_node = {n: bic_node_score(d, n, g.parents(n)) for n in g.nodes}
    return ScoreReport(float(sum(per_node.values())), per_node)


class _Scorer:
    """Memoized per-node scores over one data matrix."""

    def __init__(self, rows: np.ndarray):
        self.rows = rows
        self.cache: dict[tuple[int, frozenset], float] = {}

    def __call__(self, node: int, parents: frozenset) -> float:
        key = (node, parents)
        s = self.cache.get(key)
        if s is None:
            cols = sorted(parents)
            X = self.rows[:, cols] if cols else None
            s = self.cache[key] = _node_score(self.rows[:, node], X)
        return s


def _reachable(children: list[set], src: int, dst: int, skip: tuple[int, int] | None = None) -> bool:
    """Is there a directed path src ~> dst (optionally ignoring one edge)?"""
    stack, seen = [src], {src}
    while stack:
        u = stack.pop()
        for v in children[u]:
            if skip is not None and (u, v) == skip:
                continue
            if v == dst:
                return True
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return False


def _climb(names, scorer, parents, enforce, forbid):
    """Greedy ascent in place on ``parents`` (list of sets of node indices)."""
    p = len(names)
    children = [set() for _ in range(p)]
    for b in range(p):
        for a in parents[b]:
            children[a].add(b)
    score = [scorer(i, frozenset(parents[i])) for i in range(p)]

    while True:
        best = None  # (delta, key, move)
        moves = []
        for a in range(p):
            for b in range(p):
                if a == b:
                    continue
                if a in parents[b]:
                    if (a, b) in enforce:
                        continue
                    d_del = scorer(b, frozenset(parents[b] - {a})) - score[b]
                    moves.append((d_del, ("delete", names[a], names[b]), ("delete", a, b)))
                    if (b, a) not in forbid and not _reachable(children, a, b, skip=(a, b)):
                        d_rev = d_del + scorer(a, frozenset(parents[a] | {b})) - score[a]
                        moves.append((d_rev, ("reverse", names[a], names[b]), ("reverse", a, b)))
                elif b not in parents[a]:
                    if (a, b) in forbid or _reachable(children, b, a):
                        continue
                    d_add = scorer(b, frozenset(parents[b] | {a})) - score[b]
                    moves.append((d_add, ("add", names[a], names[b]), ("add", a, b)))
        if not moves:
            break
        top = max(m[0] for m in moves)
        if top <= _IMPROVEMENT_TOL:
            break
        tol = _TIE_RTOL * max(1.0, abs(top))
        best = min((m for m in moves if m[0] >= top - tol), key=lambda m: m[1])
        kind, a, b = best[2]
        if kind == "add":
            parents[b].add(a)
            children[a].add(b)
        elif kind == "delete":
            parents[b].discard(a)
            children[a].discard(b)
        else:
            parents[b].discard(a)
            children[a].discard(b)
            parents[a].add(b)
            children[b].add(a)
        for i in {a, b}:
            score[i] = scorer(i, frozenset(parents[i]))
    return sum(score)


def hill_climb(
    d: Dataset,
    c: ConstraintSet = ConstraintSet(),
    seed: int = 0,
    restarts: int = 0,
    perturb: int = 8,
) -> Dag:
    """Greedy add/delete/reverse search maximizing BIC, from the enforced edges.

    Forbidden edges are never created and enforced edges are never removed or
    reversed. Ties between equally good moves go to the lexicographically
    smallest (kind, from, to). With ``restarts > 0`` the local optimum is
    perturbed by ``perturb`` random legal edge flips and re-climbed; the best
    graph found is returned.
    """
    names = list(d.columns)
    pos = {n: i for i, n in enumerate(names)}
    unknown = sorted(c.nodes() - set(names))
    if unknown:
        raise ConstraintError(f"constraints mention unknown variables: {unknown}")
    if d.n_rows <= len(names) + 1:
        raise DatasetError(f"too few rows ({d.n_rows}) for {len(names)} variables")
    enforce = {(pos[a], pos[b]) for a, b in c.enforce}
    forbid = {(pos[a], pos[b]) for a, b in c.forbid}
    scorer = _Scorer(d.rows)

    parents = [set() for _ in names]
    for a, b in enforce:
        parents[b].add(a)
    best_total = _climb(names, scorer, parents, enforce, forbid)
    best_parents = [set(s) for s in parents]

    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        trial = [set(s) for s in best_parents]
        for _ in range(perturb):
            a, b = (int(v) for v in rng.choice(len(names), size=2, replace=False))
            step = [set(s) for s in trial]
            if a in step[b]:
                if (a, b) in enforce:
                    continue
                step[b].discard(a)
                if rng.random() < 0.5 and (b, a) not in forbid:
                    step[a].add(b)
            elif b not in step[a] and (a, b) not in forbid:
                step[b].add(a)
            edges = [(u, v) for v in range(len(names)) for u in step[v]]
            if is_acyclic(range(len(names)), edges):
                trial = step
        total = _climb(names, scorer, trial, enforce, forbid)
        if total > best_total + _IMPROVEMENT_TOL:
            best_total, best_parents = total, trial

    edges = [(names[a], names[b]) for b in range(len(names)) for a in best_parents[b]]
    return Dag(names, edges)


def _replicate_seed(seed: int, b: int) -> int:
    return int(np.random.SeedSequence(int(seed), spawn_key=(int(b),)).generate_state(1)[0])


def _replicate(args) -> frozenset:
    d, c, seed, b, restarts = args
    child = _replicate_seed(seed, b)
    g = hill_climb(bootstrap_resample(d, child), c, seed=child, restarts=restarts)
    return g.edges


def bootstrap_strengths(
    d: Dataset,
    c: ConstraintSet = ConstraintSet(),
    replicates: int = DEFAULT_REPLICATES,
    seed: int = 0,
    restarts: int = 0,
    n_jobs: int = 1,
) -> EdgeStrengths:
    """Hill-climb on ``replicates`` bootstrap resamples and count edge frequencies.

    Replicate ``b`` uses a child seed of ``(seed, b)`` so the result does not
    depend on ``n_jobs``.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    tasks = [(d, c, seed, b, restarts) for b in range(replicates)]
    if n_jobs == 1:
        graphs = [_replicate(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs if n_jobs > 0 else None) as ex:
            graphs = list(ex.map(_replicate, tasks))
    counts: dict[tuple[str, str], int] = {}
    for edges in graphs:
        for e in edges:
            counts[e] = counts.get(e, 0) + 1
    strengths = {}
    for a in d.columns:
        for b in d.columns:
            if a != b and (a, b) not in c.forbid:
                strengths[(a, b)] = counts.get((a, b), 0) / replicates
    return EdgeStrengths(strengths, replicates, frozenset(c.enforce))


def l1_threshold(s: EdgeStrengths) -> float:
    """Significance threshold from the L1 fit of an ideal two-point CDF.

    The empirical CDF of the non-enforced strengths is compared with the step
    CDF that is ``t`` on ``[0, 1)`` and 1 at 1; ``t`` minimizing the L1 distance
    is the estimated fraction of insignificant edges. Edges with strength at or
    above the returned value are significant.
    """
    values = np.sort(np.array(list(s.free().values()), dtype=float))
    if values.size == 0:
        raise ValueError("no non-enforced strengths to threshold")
    if values[0] == values[-1]:
        return float(values[0])
    k = values.size
    knots = np.unique(values)
    starts = np.unique(np.concatenate([[0.0], knots[knots < 1.0]]))
    ends = np.append(starts[1:], 1.0)
    widths = ends - starts
    heights = np.searchsorted(values, starts, side="right") / k

    candidates = np.unique(np.concatenate([[0.0, 1.0], heights]))
    costs = np.array([np.sum(widths * np.abs(heights - t)) for t in candidates])
    best = costs.min()
    t = candidates[np.flatnonzero(costs <= best + 1e-12)].max()
    if t <= 0.0:
        return float(values[0])
    # type-1 quantile: smallest strength whose ECDF reaches t
    q = values[min(int(np.ceil(t * k - 1e-9)) - 1, k - 1)]
    above = values[values > q]
    if above.size == 0:
        return float(np.nextafter(values[-1], np.inf))
    return float(above[0])


def averaged_graph(s: EdgeStrengths, t: float, c: ConstraintSet = ConstraintSet(), nodes=None) -> Dag:
    """Enforced edges plus significant edges in decreasing strength order.

    When both orientations of a pair are significant only the stronger one is
    tried; an edge that would close a cycle or is forbidden is skipped.
    """
    if nodes is None:
        nodes = []
        for e in list(s.strengths) + list(c.enforce):
            for n in e:
                if n not in nodes:
                    nodes.append(n)
    nodes = list(nodes)
    edges = set(c.enforce)
    significant = {e: v for e, v in s.free().items() if v >= t and e not in c.forbid}
    ranked = sorted(significant.items(), key=lambda kv: (-kv[1], kv[0]))
    for (a, b), v in ranked:
        rev = significant.get((b, a))
        if rev is not None and (rev > v or (rev == v and (b, a) < (a, b))):
            continue
        if (b, a) in edges:
            continue
        if is_acyclic(nodes, edges | {(a, b)}):
            edges.add((a, b))
    g = Dag(nodes, edges)
    ok, violations = check_constraints(g, c)
    if not ok:
        raise ConstraintError(f"averaged graph violates constraints: {violations}")
    return g


@dataclass(frozen=True)
class LearnResult:
    graph: Dag
    strengths: EdgeStrengths
    threshold: float


def learn_structure(
    d: Dataset,
    c: ConstraintSet = ConstraintSet(),
    replicates: int = DEFAULT_REPLICATES,
    seed: int = 0,
    threshold: float | None = None,
    restarts: int = 0,
    n_jobs: int = 1,
) -> LearnResult:
    """Bootstrap strengths, threshold (L1 unless given) and averaged graph."""
    s = bootstrap_strengths(d, c, replicates, seed, restarts=restarts, n_jobs=n_jobs)
    t = l1_threshold(s) if threshold is None else float(threshold)
    log.info("edge-strength threshold %.4f over %d replicates", t, replicates)
    return LearnResult(averaged_graph(s, t, c, nodes=d.columns), s, t)


def write_strengths(s: EdgeStrengths, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("from,to,strength\n")
        for (a, b), v in sorted(s.strengths.items()):
            fh.write(f"{a},{b},{format_float(v)}\n")
