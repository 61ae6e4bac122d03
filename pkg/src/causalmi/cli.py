"""Batch command-line front end: every intermediate artifact is a file.

Subcommands: derive, learn, ate, predict, cv, simulate, export-dot. Usage
errors exit with status 2, data and graph errors with status 1.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .causal import (
    MARKS,
    Estimand,
    QueryPair,
    QueryRow,
    aggregate_results,
    classify_query,
    estimate_ate,
    identify_backdoor,
    is_valid_backdoor_set,
    load_suite,
    run_query_suite,
    write_query_report,
)
from .dataset import Dataset, DatasetError, SplitPlan, format_float, load_traces, standardize, write_traces
from .discovery import DEFAULT_REPLICATES, EdgeStrengths, averaged_graph, l1_threshold, learn_structure, write_strengths
from .features import ce_decompose, derive_trace_columns, load_predictions, mse_decompose
from .gaussian import cv_predictive_metrics, fit, pearson_baseline, predict_rows, save_net
from .graph import ROOT_NODES, ConstraintSet, Dag, GraphError, builtin_constraints, load_constraints, load_dot, to_dot
from .simulator import ATTACK_COLUMNS, mi_trace_sem, random_sem, sample

log = logging.getLogger("causalmi")

DEFAULT_SEED = 20231
SEED_ENV = "CAUSALMI_SEED"


class UsageError(Exception):
    """Bad flag combination detected after argument parsing."""


def data_file(name: str) -> Path:
    """Path of a file shipped in the package's ``data`` directory."""
    return Path(str(resources.files("causalmi") / "data" / name))


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise argparse.ArgumentTypeError(f"no such file: {path}")
    return p


# ---------------------------------------------------------------- derive


def cmd_derive(args) -> int:
    if args.traces is not None:
        if args.predictions is not None or args.labels is not None:
            raise UsageError("give either --traces or --predictions/--labels, not both")
        d = load_traces(args.traces)
        out, added = derive_trace_columns(d, overwrite=args.overwrite)
        write_traces(out, args.out)
        print(f"added columns: {', '.join(added) if added else '(none)'}")
        print(f"wrote {args.out} ({out.n_rows} rows, {out.n_cols} columns)")
        return 0
    if args.predictions is None or args.labels is None:
        raise UsageError("--predictions and --labels are required without --traces")
    kind = args.kind or ("real" if args.loss == "mse" else "probability")
    batch = load_predictions(args.predictions, args.labels, kind=kind)
    if args.loss == "mse":
        bv = mse_decompose(batch, estimator=args.estimator)
    else:
        bv = ce_decompose(batch)
    p = args.prefix
    d = Dataset((f"{p}Loss", f"{p}Var", f"{p}Bias"), np.array([[bv.loss, bv.variance, bv.bias]]))
    write_traces(d, args.out)
    print(f"{p}Loss={format_float(bv.loss)} {p}Var={format_float(bv.variance)} {p}Bias={format_float(bv.bias)}")
    return 0


# ---------------------------------------------------------------- learn


def _prepare(d: Dataset, attack: str | None, constraints: Path | None) -> tuple[Dataset, ConstraintSet]:
    """Restrict the data to one attack's columns and assemble constraints."""
    c = ConstraintSet()
    if attack is not None:
        if attack not in d:
            raise DatasetError(f"attack column {attack!r} not in traces")
        d = d.drop(a for a in ATTACK_COLUMNS if a != attack and a in d)
        roots = [r for r in ROOT_NODES if r in d]
        c = builtin_constraints(d.columns, attack, roots=roots)
    if constraints is not None:
        c = c.union(load_constraints(constraints).restricted_to(d.columns))
    return d, c


def _learn(d: Dataset, attack, args) -> tuple[Dag, EdgeStrengths, float]:
    d, c = _prepare(d, attack, args.constraints)
    if args.standardize:
        d, _ = standardize(d)
    res = learn_structure(
        d, c, replicates=args.replicates, seed=args.seed, threshold=args.threshold,
        restarts=args.restarts, n_jobs=args.jobs,
    )
    return res.graph, res.strengths, res.threshold


def _per_attack_path(template: str, attack: str | None, many: bool) -> Path:
    if "{attack}" in template:
        return Path(template.replace("{attack}", attack or "all"))
    if many:
        raise UsageError("with several --attack values the output path needs an {attack} placeholder")
    return Path(template)


def cmd_learn(args) -> int:
    d = load_traces(args.traces)
    attacks = args.attack or [None]
    many = len(attacks) > 1
    for template in filter(None, [args.out, args.strengths]):
        _per_attack_path(template, None, many)
    print(f"seed {args.seed}")
    for attack in attacks:
        g, s, t = _learn(d, attack, args)
        out = _per_attack_path(args.out, attack, many)
        out.write_text(to_dot(g), encoding="utf-8")
        if args.strengths is not None:
            write_strengths(s, _per_attack_path(args.strengths, attack, many))
        label = attack or "all columns"
        print(f"{label}: {len(g.edges)} edges, threshold {format_float(t)}, B={s.replicates} -> {out}")
    return 0


# ---------------------------------------------------------------- ate


def _parse_adjust(text: str) -> tuple[str, ...]:
    return tuple(sorted(x.strip() for x in text.split(",") if x.strip()))


def cmd_ate(args) -> int:
    d = load_traces(args.traces)
    if args.suite is not None:
        if args.treatment or args.outcome:
            raise UsageError("give either --suite or --treatment/--outcome, not both")
        suite = load_suite(args.suite)
    elif args.treatment and args.outcome:
        suite = [QueryPair(args.treatment, args.outcome)]
    else:
        raise UsageError("--treatment and --outcome (or --suite) are required")
    if args.adjust is not None and len(suite) != 1:
        raise UsageError("--adjust applies to a single query only")
    if (args.a is None) != (args.b is None):
        raise UsageError("give both --a and --b, or neither")

    print(f"seed {args.seed}")
    if args.graph:
        graphs = [load_dot(p) for p in args.graph]
    else:
        # learn inline, one graph per outcome
        graphs = {}
        for outcome in sorted({q.outcome for q in suite}):
            attack = outcome if outcome in ATTACK_COLUMNS else None
            graphs[outcome], _, t = _learn(d, attack, args)
            print(f"learned graph for {outcome}: {len(graphs[outcome].edges)} edges, threshold {format_float(t)}")

    endpoints = None
    if args.a is not None:
        endpoints = {q.treatment: (args.a, args.b) for q in suite}

    if args.adjust is not None:
        rows = [_single_with_adjustment(d, graphs, suite[0], _parse_adjust(args.adjust), endpoints, args)]
    else:
        rows = run_query_suite(d, graphs, suite, endpoints=endpoints, epsilon=args.epsilon,
                               p_method=args.p_method, seed=args.seed)
    if args.out is not None:
        write_query_report(rows, args.out)
    _print_report(rows)
    failed = [r for r in rows if r.error]
    if failed and len(failed) == len(rows):
        print(f"error: every query failed; first: {failed[0].error}", file=sys.stderr)
        return 1
    return 0


def _single_with_adjustment(d, graphs, q: QueryPair, z, endpoints, args) -> QueryRow:
    if isinstance(graphs, dict):
        g = graphs[q.outcome]
    else:
        g = next((g for g in graphs if q.treatment in g.nodes and q.outcome in g.nodes), None)
        if g is None:
            raise GraphError(f"no graph contains both {q.treatment!r} and {q.outcome!r}")
    if not is_valid_backdoor_set(g, q.treatment, q.outcome, z):
        log.warning("adjustment set {%s} is not a valid backdoor set in the graph", ", ".join(z))
    auto = identify_backdoor(g, q.treatment, q.outcome)
    e = Estimand(q.treatment, q.outcome, z, True, auto.expression, auto.zero_effect)
    if endpoints:
        a, b = endpoints[q.treatment]
    else:
        col = d.column(q.treatment)
        a, b = float(col.max()), float(col.min())
    ate = estimate_ate(d, e, a, b, p_method=args.p_method, seed=args.seed)
    return QueryRow(q, ate, classify_query(ate, args.epsilon), e.expression)


def _print_report(rows: Sequence[QueryRow]) -> None:
    agg = aggregate_results(rows)
    for r in rows:
        q = r.query
        head = f"{q.label + ': ' if q.label else ''}{q.treatment} -> {q.outcome}"
        if r.estimate is None:
            print(f"{head}  failed: {r.error}")
            continue
        e = r.estimate
        adj = "{" + ", ".join(e.adjustment_set) + "}"
        print(f"{head}  ATE={e.value:.6g} p={e.p_value:.3g} adjust={adj} {MARKS[r.classification]}")
    for label, result in agg.items():
        print(f"{label}: {result} {MARKS[result]}")


# ---------------------------------------------------------------- predict / cv


def _parse_evidence(items: Sequence[str]) -> dict[str, float]:
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep or not name.strip():
            raise UsageError(f"--evidence expects NAME=VALUE, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise UsageError(f"--evidence value for {name!r} is not a number: {value!r}") from None
    return out


def cmd_predict(args) -> int:
    d = load_traces(args.traces)
    g = load_dot(args.graph)
    net = fit(d, g)
    if args.save_net is not None:
        prefix = args.save_net
        save_net(net, f"{prefix}.coefficients.csv", f"{prefix}.parameters.csv")
    if args.rows is not None:
        if args.evidence:
            raise UsageError("give either --evidence or --rows, not both")
        ev = load_traces(args.rows)
        ev = ev.select([c for c in ev.columns if c in g.nodes and c != args.target])
        pred = predict_rows(net, ev, args.target)
        if pred.size == 1 and ev.n_rows != 1:
            pred = np.full(ev.n_rows, pred[0])
        out = Dataset((args.target,), pred[:, None])
    else:
        ev = _parse_evidence(args.evidence or [])
        pred = predict_rows(net, {k: np.array([v]) for k, v in ev.items()}, args.target)
        out = Dataset((args.target,), pred[:1, None])
    if args.out is not None:
        write_traces(out, args.out)
    if out.n_rows == 1:
        print(f"E[{args.target} | evidence] = {format_float(out.rows[0, 0])}")
    else:
        print(f"predicted {args.target} for {out.n_rows} rows")
    return 0


def cmd_cv(args) -> int:
    d = load_traces(args.traces)
    g = load_dot(args.graph)
    plan = SplitPlan(runs=args.runs, train_fraction=args.train_fraction, seed=args.seed)
    rep = cv_predictive_metrics(d, g, args.target, plan)
    print(f"seed {args.seed}")
    print(f"{args.target}: mean correlation {rep.mean_correlation:.4f}, mean MSE {rep.mean_mse:.6g} over {rep.runs} runs")
    if args.out is not None:
        rows = np.column_stack([np.arange(rep.runs), rep.correlations, rep.mses])
        write_traces(Dataset(("run", "correlation", "mse"), rows), args.out)
    if args.baseline is not None:
        base = pearson_baseline(d.select([c for c in g.nodes if c in d]), args.target)
        names = sorted(base)
        write_traces(Dataset(tuple(names), np.array([[base[n] for n in names]])), args.baseline)
    return 0


# ---------------------------------------------------------------- simulate / export-dot


def cmd_simulate(args) -> int:
    if args.model == "mi-traces":
        sem = mi_trace_sem(noise_scale=args.noise_scale)
    else:
        sem = random_sem(args.nodes, args.edge_probability, noise_sigma=args.noise_sigma, seed=args.seed)
    d = sample(sem, args.rows, seed=args.seed)
    write_traces(d, args.out)
    stem = args.truth_prefix or str(Path(args.out).with_suffix(""))
    Path(f"{stem}.truth.dot").write_text(to_dot(sem.dag), encoding="utf-8")
    save_net(sem.net, f"{stem}.truth.coefficients.csv", f"{stem}.truth.parameters.csv")
    print(f"seed {args.seed}")
    print(f"wrote {args.out} ({d.n_rows} rows) and ground truth under {stem}.truth.*")
    return 0


def _read_strengths(path) -> EdgeStrengths:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["from", "to", "strength"]:
            raise DatasetError(f"{path}: expected columns from,to,strength")
        values = {}
        for row in reader:
            try:
                values[(row["from"], row["to"])] = float(row["strength"])
            except ValueError:
                raise DatasetError(f"{path}: bad strength {row['strength']!r}") from None
    return EdgeStrengths(values, 0)


def cmd_export_dot(args) -> int:
    sources = [x is not None for x in (args.graph, args.coefficients, args.strengths)]
    if sum(sources) != 1:
        raise UsageError("give exactly one of --graph, --coefficients, --strengths")
    c = load_constraints(args.constraints) if args.constraints is not None else ConstraintSet()
    if args.graph is not None:
        g = load_dot(args.graph)
    elif args.coefficients is not None:
        with Path(args.coefficients).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        nodes = []
        for r in rows:
            for n in (r["parent"], r["node"]):
                if n not in nodes:
                    nodes.append(n)
        g = Dag(nodes, [(r["parent"], r["node"]) for r in rows])
    else:
        s = _read_strengths(args.strengths)
        s = EdgeStrengths(s.strengths, s.replicates, frozenset(c.enforce))
        t = l1_threshold(s) if args.threshold is None else args.threshold
        g = averaged_graph(s, t, c)
    text = to_dot(g)
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out} ({len(g.nodes)} nodes, {len(g.edges)} edges)")
    return 0


# ---------------------------------------------------------------- parser


def _add_learning_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--constraints", type=_existing, help="constraint file (forbid/enforce A -> B)")
    p.add_argument("-B", "--replicates", type=int, default=DEFAULT_REPLICATES, help="bootstrap replicates")
    p.add_argument("--threshold", type=float, help="edge-strength threshold (default: L1 estimate)")
    p.add_argument("--restarts", type=int, default=0, help="random restarts per hill climb")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for the bootstrap (0 = all cores)")
    p.add_argument("--standardize", action="store_true", help="z-score columns before learning")


def build_parser(seed: int) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causalmi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("derive", help="append gap/bias columns or decompose ensemble predictions")
    p.add_argument("--traces", type=_existing)
    p.add_argument("--overwrite", action="store_true", help="recompute derived columns already present")
    p.add_argument("--predictions", type=_existing, help="model_id,sample_id,class_0.. CSV")
    p.add_argument("--labels", type=_existing, help="sample_id,label CSV")
    p.add_argument("--kind", choices=("probability", "log_probability", "real"))
    p.add_argument("--loss", choices=("ce", "mse"), default="ce")
    p.add_argument("--estimator", choices=("unbiased", "population"), default="unbiased")
    p.add_argument("--prefix", default="Train", help="column prefix for Loss/Var/Bias")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("learn", help="bootstrap-averaged structure learning")
    p.add_argument("--traces", type=_existing, required=True)
    p.add_argument("--attack", action="append", help="attack column; applies built-in constraints (repeatable)")
    _add_learning_flags(p)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", required=True, help="DOT output ({attack} is substituted)")
    p.add_argument("--strengths", help="from,to,strength CSV output ({attack} is substituted)")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("ate", help="identify and estimate average treatment effects")
    p.add_argument("--traces", type=_existing, required=True)
    p.add_argument("--graph", type=_existing, action="append", help="DOT graph (repeatable); learned inline if absent")
    p.add_argument("--treatment")
    p.add_argument("--outcome")
    p.add_argument("--suite", type=_existing, help="query file: [label:] treatment -> outcome per line")
    p.add_argument("--a", type=float, help="intervention value a (default: treatment max)")
    p.add_argument("--b", type=float, help="baseline value b (default: treatment min)")
    p.add_argument("--adjust", help="comma-separated adjustment set overriding identification")
    p.add_argument("--epsilon", type=float, default=1e-3, help="|ATE| at or below this counts as zero")
    p.add_argument("--p-method", choices=("t", "bootstrap"), default="t")
    _add_learning_flags(p)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", help="per-query CSV report")
    p.set_defaults(func=cmd_ate)

    p = sub.add_parser("predict", help="conditional-mean prediction from a fitted network")
    p.add_argument("--traces", type=_existing, required=True, help="training data")
    p.add_argument("--graph", type=_existing, required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--evidence", action="append", metavar="NAME=VALUE")
    p.add_argument("--rows", type=_existing, help="CSV of evidence rows")
    p.add_argument("--save-net", metavar="PREFIX", help="write PREFIX.coefficients.csv and PREFIX.parameters.csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", help="repeated hold-out predictive correlation and MSE")
    p.add_argument("--traces", type=_existing, required=True)
    p.add_argument("--graph", type=_existing, required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", help="per-run run,correlation,mse CSV")
    p.add_argument("--baseline", help="Pearson correlation of each graph node with the target, as CSV")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("simulate", help="sample traces from a ground-truth SEM")
    p.add_argument("--model", choices=("mi-traces", "random"), default="mi-traces")
    p.add_argument("--rows", type=int, default=2000)
    p.add_argument("--noise-scale", type=float, default=1.0, help="mi-traces noise multiplier")
    p.add_argument("--nodes", type=int, default=6, help="random model size")
    p.add_argument("--edge-probability", type=float, default=0.4)
    p.add_argument("--noise-sigma", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--truth-prefix", help="sidecar path prefix (default: output path without suffix)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export-dot", help="write a graph as DOT")
    p.add_argument("--graph", type=_existing, help="DOT input (normalized)")
    p.add_argument("--coefficients", type=_existing, help="node,parent,coefficient CSV")
    p.add_argument("--strengths", type=_existing, help="from,to,strength CSV, averaged at --threshold")
    p.add_argument("--threshold", type=float)
    p.add_argument("--constraints", type=_existing)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_dot)
    return parser


_OUTPUTS = ("out", "strengths", "baseline", "save_net", "truth_prefix")


def _make_output_dirs(args) -> None:
    """Create the parent directory of every output path given on the command line."""
    for name in _OUTPUTS:
        value = getattr(args, name, None)
        if value:
            Path(value).parent.mkdir(parents=True, exist_ok=True)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        seed = default_seed()
    except UsageError as exc:
        print(f"causalmi: error: {exc}", file=sys.stderr)
        return 2
    parser = build_parser(seed)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.captureWarnings(True)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        _make_output_dirs(args)
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"causalmi: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        # DatasetError, GraphError and ConstraintError are ValueErrors
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"causalmi: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
