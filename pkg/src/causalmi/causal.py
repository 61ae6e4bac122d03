"""Backdoor identification and regression-adjusted average treatment effects."""

from __future__ import annotations

import logging
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import Dataset, DatasetError, child_rng, format_float
from .graph import Dag, GraphError, all_subsets, d_separated
from .regression import ols

log = logging.getLogger(__name__)

__all__ = [
    "Estimand",
    "AteEstimate",
    "QueryPair",
    "QueryRow",
    "identify_backdoor",
    "is_valid_backdoor_set",
    "estimate_ate",
    "naive_conditional_effect",
    "classify_query",
    "run_query_suite",
    "parse_suite",
    "load_suite",
    "write_query_report",
    "PositivityWarning",
    "aggregate_results",
    "CONFIRMED",
    "REFUTED",
    "INCONCLUSIVE",
]

CONFIRMED, REFUTED, INCONCLUSIVE = "confirmed", "refuted", "inconclusive"
MARKS = {CONFIRMED: "✓", REFUTED: "×", INCONCLUSIVE: "○"}
SIGNIFICANCE = 0.05


@dataclass(frozen=True)
class Estimand:
    treatment: str
    outcome: str
    adjustment_set: tuple[str, ...]
    identifiable: bool
    expression: str
    zero_effect: bool = False


@dataclass(frozen=True)
class AteEstimate:
    treatment: str
    outcome: str
    value: float
    std_error: float
    p_value: float
    a: float
    b: float
    n: int
    adjustment_set: tuple[str, ...]
    zero_effect: bool = False


def is_valid_backdoor_set(g: Dag, treatment: str, outcome: str, z: Iterable[str]) -> bool:
    """No descendant of the treatment, and blocks every backdoor path."""
    z = set(z)
    if treatment in z or outcome in z:
        return False
    if z & g.descendants(treatment):
        return False
    return d_separated(g.without_outgoing(treatment), treatment, outcome, z)


def _expression(t: str, y: str, z: Sequence[str]) -> str:
    if not z:
        return f"E[{y} | do({t})] = E[{y} | {t}]"
    zs = ", ".join(z)
    return f"E[{y} | do({t})] = E_{{{zs}}}[ E[{y} | {t}, {zs}] ]"


def identify_backdoor(g: Dag, treatment: str, outcome: str, minimize: bool = True) -> Estimand:
    """Adjustment set for the effect of ``treatment`` on ``outcome``.

    Without a directed path the effect is identically zero. Otherwise the
    smallest valid backdoor set is returned (lexicographically first among
    equal sizes); with ``minimize=False`` the treatment's parents are used.
    """
    g.parents(treatment)
    g.parents(outcome)
    if treatment == outcome:
        raise GraphError("treatment and outcome must differ")
    if not g.has_directed_path(treatment, outcome):
        return Estimand(treatment, outcome, (), True, f"E[{outcome} | do({treatment})] is constant", True)
    if minimize:
        cut = g.without_outgoing(treatment)
        desc = g.descendants(treatment)
        # smallest separators always lie among the ancestors of the endpoints
        candidates = cut.ancestors({treatment, outcome}) - desc - {treatment, outcome}
        for z in all_subsets(candidates):
            if d_separated(cut, treatment, outcome, z):
                return Estimand(treatment, outcome, tuple(z), True, _expression(treatment, outcome, z))
    z = tuple(sorted(g.parents(treatment)))
    if not is_valid_backdoor_set(g, treatment, outcome, z):  # pragma: no cover - cannot happen in a DAG
        return Estimand(treatment, outcome, (), False, "not identifiable by backdoor adjustment")
    return Estimand(treatment, outcome, z, True, _expression(treatment, outcome, z))


class PositivityWarning(UserWarning):
    pass


def _determined(x: np.ndarray, Z: np.ndarray, rtol: float = 1e-10) -> bool:
    """True when ``x`` is (numerically) an affine function of the columns of ``Z``."""
    tss = float(np.sum((x - x.mean()) ** 2))
    if tss == 0.0:
        return True
    return ols(x, Z, warn=False, with_cov=False).rss <= rtol * tss


def _bootstrap_p(y: np.ndarray, X: np.ndarray, replicates: int, seed: int) -> float:
    n = y.size
    betas = np.empty(replicates)
    for r in range(replicates):
        idx = child_rng(seed, r).integers(0, n, size=n)
        betas[r] = ols(y[idx], X[idx], warn=False, with_cov=False).coef[0]
    tail = min(np.mean(betas <= 0.0), np.mean(betas >= 0.0))
    return float(min(1.0, 2.0 * tail))


def estimate_ate(
    d: Dataset,
    e: Estimand,
    a: float = 1.0,
    b: float = 0.0,
    p_method: str = "t",
    bootstrap_replicates: int = 1000,
    seed: int = 0,
) -> AteEstimate:
    """Regression-adjusted ``E[Y | do(X=a)] - E[Y | do(X=b)]``.

    Fits ``outcome ~ treatment + adjustment set`` with an intercept; the
    effect is the treatment coefficient times ``a - b``. The p-value tests the
    treatment coefficient (two-sided t-test, or bootstrap with
    ``p_method="bootstrap"``). When the treatment is fully determined by the
    adjustment set the effect is not estimable: value and p-value are NaN
    and a ``PositivityWarning`` is issued.
    """
    if e.zero_effect:
        return AteEstimate(e.treatment, e.outcome, 0.0, 0.0, 1.0, a, b, d.n_rows, (), True)
    if not e.identifiable:
        raise GraphError(f"effect of {e.treatment} on {e.outcome} is not identifiable")
    cols = [e.treatment, *e.adjustment_set]
    for c in [e.outcome, *cols]:
        if c not in d:
            raise DatasetError(f"unknown column {c!r}")
    y = d.column(e.outcome)
    X = d.select(cols).rows
    if d.n_rows <= len(cols) + 1:
        raise DatasetError(f"too few rows ({d.n_rows}) for {len(cols)} regressors")
    if e.adjustment_set and _determined(X[:, 0], X[:, 1:]):
        # no variation left in the treatment once the adjustment set is fixed
        warnings.warn(
            f"{e.treatment} is a linear function of the adjustment set; effect not estimable",
            PositivityWarning,
            stacklevel=2,
        )
        nan = float("nan")
        return AteEstimate(e.treatment, e.outcome, nan, nan, nan, float(a), float(b),
                           d.n_rows, tuple(e.adjustment_set))
    fit = ols(y, X)
    beta = float(fit.coef[0])
    se, p = fit.t_test(0)
    if p_method == "bootstrap":
        p = _bootstrap_p(y, X, bootstrap_replicates, seed)
    elif p_method != "t":
        raise ValueError(f"unknown p_method {p_method!r}")
    scale = float(a) - float(b)
    return AteEstimate(
        e.treatment, e.outcome, beta * scale, abs(scale) * se, p, float(a), float(b),
        d.n_rows, tuple(e.adjustment_set),
    )


def naive_conditional_effect(d: Dataset, treatment: str, outcome: str, a: float = 1.0, b: float = 0.0) -> float:
    """Unadjusted contrast E[Y | X=a] - E[Y | X=b] from a regression on X alone."""
    fit = ols(d.column(outcome), d.column(treatment)[:, None])
    return float(fit.coef[0]) * (float(a) - float(b))


def classify_query(ate: AteEstimate, epsilon: float = 1e-3) -> str:
    """Confirmed / refuted / inconclusive under the p > 0.05 and zero-path rules."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if ate.zero_effect:
        return REFUTED
    if not np.isfinite(ate.p_value) or ate.p_value > SIGNIFICANCE:
        return INCONCLUSIVE
    if abs(ate.value) <= epsilon:
        return REFUTED
    return CONFIRMED


@dataclass(frozen=True)
class QueryPair:
    treatment: str
    outcome: str
    label: str = ""


@dataclass(frozen=True)
class QueryRow:
    query: QueryPair
    estimate: AteEstimate | None = None
    classification: str | None = None
    expression: str = ""
    error: str = ""


def _graph_for(graphs, q: QueryPair) -> Dag:
    if isinstance(graphs, Dag):
        graphs = [graphs]
    elif isinstance(graphs, Mapping):
        if q.outcome in graphs:
            return graphs[q.outcome]
        graphs = list(graphs.values())
    for g in graphs:
        if q.treatment in g.nodes and q.outcome in g.nodes:
            return g
    raise GraphError(f"no graph contains both {q.treatment!r} and {q.outcome!r}")


def run_query_suite(
    d: Dataset,
    graphs,
    suite: Sequence[QueryPair | tuple[str, str]],
    endpoints: Mapping[str, tuple[float, float]] | None = None,
    epsilon: float = 1e-3,
    p_method: str = "t",
    seed: int = 0,
) -> list[QueryRow]:
    """Identify, estimate and classify each (treatment, outcome) query.

    ``graphs`` is one DAG, a list of DAGs, or a mapping from outcome to DAG;
    each query uses the first graph containing both endpoints. Effects are
    taken over the treatment's observed range (a = max, b = min) unless
    ``endpoints`` overrides them per treatment. A failing query is recorded
    in its row's ``error`` field and the suite continues.
    """
    endpoints = endpoints or {}
    rows = []
    for q in suite:
        if not isinstance(q, QueryPair):
            q = QueryPair(*q)
        try:
            g = _graph_for(graphs, q)
            est = identify_backdoor(g, q.treatment, q.outcome)
            if q.treatment in endpoints:
                a, b = endpoints[q.treatment]
            else:
                col = d.column(q.treatment)
                a, b = float(col.max()), float(col.min())
            ate = estimate_ate(d, est, a, b, p_method=p_method, seed=seed)
            rows.append(QueryRow(q, ate, classify_query(ate, epsilon), est.expression))
        except (ValueError, KeyError) as exc:
            log.warning("query %s -> %s failed: %s", q.treatment, q.outcome, exc)
            rows.append(QueryRow(q, error=str(exc)))
    return rows


def aggregate_results(rows: Sequence[QueryRow]) -> dict[str, str]:
    """Per query label: refuted if any part is refuted, else inconclusive if
    any part is inconclusive (or failed), else confirmed."""
    out: dict[str, list[str]] = {}
    for r in rows:
        if r.query.label:
            out.setdefault(r.query.label, []).append(r.classification or INCONCLUSIVE)
    result = {}
    for label, cls in out.items():
        if REFUTED in cls:
            result[label] = REFUTED
        elif INCONCLUSIVE in cls:
            result[label] = INCONCLUSIVE
        else:
            result[label] = CONFIRMED
    return result


_PAIR = re.compile(r"^(?:([^:]+?)\s*:\s*)?(.+?)\s*->\s*(.+?)$")


def parse_suite(text: str, source: str = "<string>") -> list[QueryPair]:
    """Lines of ``[label:] treatment -> outcome``; ``#`` starts a comment."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _PAIR.match(line)
        if not m:
            raise ValueError(f"{source}:{lineno}: expected 'treatment -> outcome', got {raw.strip()!r}")
        out.append(QueryPair(m.group(2), m.group(3), m.group(1) or ""))
    return out


def load_suite(path) -> list[QueryPair]:
    path = Path(path)
    return parse_suite(path.read_text(encoding="utf-8"), str(path))


REPORT_COLUMNS = (
    "query", "attack", "feature", "ate", "std_error", "p_value", "a", "b", "n",
    "adjustment_set", "classification", "mark", "query_result", "error",
)


def write_query_report(rows: Sequence[QueryRow], path) -> None:
    """Query report CSV: one row per (attack, feature) query."""
    agg = aggregate_results(rows)
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for r in rows:
            q, est = r.query, r.estimate
            qres = agg.get(q.label, "")
            if est is None:
                vals = [q.label, q.outcome, q.treatment, "", "", "", "", "", "", "", "", "",
                        qres, r.error.replace(",", ";").replace("\n", " ")]
            else:
                vals = [
                    q.label, q.outcome, q.treatment,
                    format_float(est.value), format_float(est.std_error), format_float(est.p_value),
                    format_float(est.a), format_float(est.b), str(est.n),
                    ";".join(est.adjustment_set), r.classification, MARKS[r.classification], qres, "",
                ]
            fh.write(",".join(vals) + "\n")
