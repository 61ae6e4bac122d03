"""Causal DAGs, domain-knowledge constraints, paths and d-separation."""

from __future__ import annotations

import heapq
import logging
import re
from collections import deque
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path as FilePath
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

__all__ = [
    "Dag",
    "GraphError",
    "ConstraintError",
    "ConstraintSet",
    "Path",
    "is_acyclic",
    "undirected_paths",
    "d_separated",
    "check_constraints",
    "builtin_constraints",
    "parse_constraints",
    "load_constraints",
    "format_constraints",
    "to_dot",
    "parse_dot",
    "load_dot",
    "ROOT_NODES",
]

Edge = tuple[str, str]

ROOT_NODES = ("TrainSize", "NumParams")


class GraphError(ValueError):
    pass


class ConstraintError(ValueError):
    pass


def _topo_order(nodes: Sequence[str], edges: Iterable[Edge]) -> list[str] | None:
    """Kahn's algorithm, ties broken by node position; None on a cycle."""
    pos = {n: i for i, n in enumerate(nodes)}
    indeg = {n: 0 for n in nodes}
    children: dict[str, list[str]] = {n: [] for n in nodes}
    for a, b in edges:
        children[a].append(b)
        indeg[b] += 1
    heap = [(pos[n], n) for n in nodes if indeg[n] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, n = heapq.heappop(heap)
        order.append(n)
        for c in children[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, (pos[c], c))
    return order if len(order) == len(nodes) else None


def is_acyclic(nodes: Iterable[str], edges: Iterable[Edge]) -> bool:
    nodes = list(dict.fromkeys(nodes))
    edges = list(edges)
    for a, b in edges:
        if a == b:
            return False
        for n in (a, b):
            if n not in nodes:
                nodes.append(n)
    return _topo_order(nodes, edges) is not None


@dataclass(frozen=True)
class Dag:
    nodes: tuple[str, ...]
    edges: frozenset[Edge]

    def __init__(self, nodes: Iterable[str], edges: Iterable[Edge] = ()):
        nodes = tuple(nodes)
        edges_list = [(str(a), str(b)) for a, b in edges]
        if len(set(nodes)) != len(nodes):
            raise GraphError("duplicate node names")
        known = set(nodes)
        for a, b in edges_list:
            if a == b:
                raise GraphError(f"self-loop on {a!r}")
            if a not in known or b not in known:
                raise GraphError(f"edge {a} -> {b} references an unknown node")
        if len(set(edges_list)) != len(edges_list):
            raise GraphError("duplicate edge")
        order = _topo_order(nodes, edges_list)
        if order is None:
            raise GraphError("graph contains a directed cycle")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", frozenset(edges_list))
        parents: dict[str, list[str]] = {n: [] for n in nodes}
        children: dict[str, list[str]] = {n: [] for n in nodes}
        pos = {n: i for i, n in enumerate(nodes)}
        for a, b in sorted(edges_list, key=lambda e: (pos[e[0]], pos[e[1]])):
            parents[b].append(a)
            children[a].append(b)
        object.__setattr__(self, "_parents", {n: tuple(v) for n, v in parents.items()})
        object.__setattr__(self, "_children", {n: tuple(v) for n, v in children.items()})
        object.__setattr__(self, "_order", tuple(order))

    def __repr__(self):
        edges = ", ".join(f"{a}->{b}" for a, b in self.sorted_edges())
        return f"Dag([{', '.join(self.nodes)}], {{{edges}}})"

    def _check(self, node: str) -> None:
        if node not in self._parents:
            raise GraphError(f"unknown node {node!r}")

    def parents(self, node: str) -> tuple[str, ...]:
        self._check(node)
        return self._parents[node]

    def children(self, node: str) -> tuple[str, ...]:
        self._check(node)
        return self._children[node]

    def topological_order(self) -> tuple[str, ...]:
        return self._order

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def has_edge(self, a: str, b: str) -> bool:
        return (a, b) in self.edges

    def ancestors(self, nodes: str | Iterable[str]) -> set[str]:
        """Proper ancestors of a node, or ancestors-including-self of a set."""
        single = isinstance(nodes, str)
        start = [nodes] if single else list(nodes)
        seen = set() if single else set(start)
        stack = list(start)
        while stack:
            n = stack.pop()
            for p in self.parents(n):
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen

    def descendants(self, node: str) -> set[str]:
        seen: set[str] = set()
        stack = [node]
        while stack:
            n = stack.pop()
            for c in self.children(n):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen

    def has_directed_path(self, a: str, b: str) -> bool:
        return b in self.descendants(a)

    def skeleton(self) -> frozenset[frozenset[str]]:
        return frozenset(frozenset(e) for e in self.edges)

    def with_edges(self, add: Iterable[Edge] = (), remove: Iterable[Edge] = ()) -> "Dag":
        edges = set(self.edges) - set(remove)
        edges |= set(add)
        return Dag(self.nodes, edges)

    def without_outgoing(self, node: str) -> "Dag":
        self._check(node)
        return Dag(self.nodes, [e for e in self.edges if e[0] != node])

    def subgraph(self, nodes: Iterable[str]) -> "Dag":
        keep = [n for n in self.nodes if n in set(nodes)]
        ks = set(keep)
        return Dag(keep, [e for e in self.edges if e[0] in ks and e[1] in ks])


@dataclass(frozen=True)
class ConstraintSet:
    enforce: frozenset[Edge] = frozenset()
    forbid: frozenset[Edge] = frozenset()

    def __init__(self, enforce: Iterable[Edge] = (), forbid: Iterable[Edge] = ()):
        enforce = frozenset((str(a), str(b)) for a, b in enforce)
        forbid = frozenset((str(a), str(b)) for a, b in forbid)
        both = sorted(enforce & forbid)
        if both:
            a, b = both[0]
            raise ConstraintError(f"edge {a} -> {b} is both enforced and forbidden")
        if not is_acyclic([], enforce):
            raise ConstraintError("enforced edges contain a directed cycle")
        object.__setattr__(self, "enforce", enforce)
        object.__setattr__(self, "forbid", forbid)

    def nodes(self) -> set[str]:
        return {n for e in self.enforce | self.forbid for n in e}

    def union(self, other: "ConstraintSet") -> "ConstraintSet":
        return ConstraintSet(self.enforce | other.enforce, self.forbid | other.forbid)

    def restricted_to(self, nodes: Iterable[str]) -> "ConstraintSet":
        keep = set(nodes)
        ok = lambda e: e[0] in keep and e[1] in keep  # noqa: E731
        return ConstraintSet(filter(ok, self.enforce), filter(ok, self.forbid))

    def __len__(self) -> int:
        return len(self.enforce) + len(self.forbid)


@dataclass(frozen=True)
class Path:
    nodes: tuple[str, ...]
    directions: tuple[str, ...]  # "forward" means nodes[i] -> nodes[i+1]

    def __len__(self) -> int:
        return len(self.directions)

    def is_directed(self) -> bool:
        return all(d == "forward" for d in self.directions)

    def colliders(self) -> list[str]:
        return [
            self.nodes[i]
            for i in range(1, len(self.nodes) - 1)
            if self.directions[i - 1] == "forward" and self.directions[i] == "backward"
        ]

    def __str__(self) -> str:
        out = [self.nodes[0]]
        for d, n in zip(self.directions, self.nodes[1:]):
            out.append("->" if d == "forward" else "<-")
            out.append(n)
        return " ".join(out)


def undirected_paths(g: Dag, x: str, y: str) -> set[Path]:
    """All simple paths between x and y, ignoring edge orientation."""
    g.parents(x)
    g.parents(y)
    if x == y:
        raise GraphError("path endpoints must differ")
    found: set[Path] = set()

    def walk(node, nodes, dirs, visited):
        if node == y:
            found.add(Path(tuple(nodes), tuple(dirs)))
            return
        steps = [(c, "forward") for c in g.children(node)] + [(p, "backward") for p in g.parents(node)]
        for nxt, d in steps:
            if nxt not in visited:
                visited.add(nxt)
                nodes.append(nxt)
                dirs.append(d)
                walk(nxt, nodes, dirs, visited)
                nodes.pop()
                dirs.pop()
                visited.discard(nxt)

    walk(x, [x], [], {x})
    return found


def d_separated(g: Dag, x: str, y: str, z: Iterable[str] = ()) -> bool:
    """True iff every path between x and y is blocked by conditioning set z.

    Reachability ("Bayes ball") formulation: linear in the size of the graph.
    """
    z = set(z)
    for n in (x, y, *z):
        g.parents(n)
    if x == y:
        raise GraphError("x and y must differ")
    if x in z or y in z:
        raise GraphError("x and y must not be in the conditioning set")

    anc_z = g.ancestors(z)
    # (node, arrived_from_child): True means travelling up against an edge
    queue = deque([(x, True)])
    visited = set()
    while queue:
        node, up = queue.popleft()
        if (node, up) in visited:
            continue
        visited.add((node, up))
        if node == y:
            return False
        if up:
            if node not in z:
                queue.extend((p, True) for p in g.parents(node))
                queue.extend((c, False) for c in g.children(node))
        else:
            if node not in z:
                queue.extend((c, False) for c in g.children(node))
            if node in anc_z:
                queue.extend((p, True) for p in g.parents(node))
    return True


def check_constraints(g: Dag, c: ConstraintSet) -> tuple[bool, list[tuple[str, Edge]]]:
    """Returns (ok, violations); each violation is ("missing"|"forbidden", edge)."""
    violations = [("missing", e) for e in sorted(c.enforce - g.edges)]
    violations += [("forbidden", e) for e in sorted(c.forbid & g.edges)]
    return not violations, violations


def builtin_constraints(
    variables: Sequence[str],
    attack: str,
    roots: Sequence[str] = ROOT_NODES,
) -> ConstraintSet:
    """Domain-knowledge rules for MI-attack traces, expanded to edge pairs.

    Rules about a variable that is absent from ``variables`` are skipped.
    """
    variables = list(variables)
    vs = set(variables)
    for name in [attack, *roots]:
        if name not in vs:
            raise ConstraintError(f"unknown node {name!r}")
    roots = list(roots)
    forbid: set[Edge] = set()
    for r in roots:
        forbid.update((v, r) for v in variables if v != r)
    forbid.update((attack, v) for v in variables if v != attack)

    def only_from(target: str, allowed: Iterable[str]) -> None:
        if target in vs:
            allowed = set(allowed) | {target}
            forbid.update((v, target) for v in variables if v not in allowed)

    only_from("TrainBias", [*roots, "TrainLoss", "TrainVar"])
    only_from("TrainVar", roots)
    only_from("TestBias", [*roots, "TestLoss", "TestVar"])
    only_from("TestVar", roots)
    for a, b in [("CentroidDist", "TestLoss"), ("CentroidDist", "TestAcc"), ("TestVar", "TestLoss")]:
        if a in vs and b in vs:
            forbid.add((a, b))

    enforce = {
        e
        for e in [
            ("TrainAcc", "AccDiff"),
            ("TestAcc", "AccDiff"),
            ("TrainLoss", "LossDiff"),
            ("TestLoss", "LossDiff"),
        ]
        if e[0] in vs and e[1] in vs
    }
    cs = ConstraintSet(enforce, forbid)
    log.info("built-in constraints: %d enforced, %d forbidden edge pairs", len(enforce), len(forbid))
    return cs


_RULE = re.compile(r"^(forbid|enforce)\s+(.+?)\s*->\s*(.+?)$", re.IGNORECASE)


def parse_constraints(text: str, source: str = "<string>") -> ConstraintSet:
    """Parse ``forbid A -> B`` / ``enforce A -> B`` lines; ``#`` starts a comment."""
    enforce, forbid = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _RULE.match(line)
        if not m:
            raise ConstraintError(f"{source}:{lineno}: cannot parse rule {raw.strip()!r}")
        kind, a, b = m.group(1).lower(), m.group(2), m.group(3)
        (enforce if kind == "enforce" else forbid).append((a, b))
    return ConstraintSet(enforce, forbid)


def load_constraints(path) -> ConstraintSet:
    path = FilePath(path)
    return parse_constraints(path.read_text(encoding="utf-8"), str(path))


def format_constraints(c: ConstraintSet) -> str:
    lines = [f"enforce {a} -> {b}" for a, b in sorted(c.enforce)]
    lines += [f"forbid {a} -> {b}" for a, b in sorted(c.forbid)]
    return "\n".join(lines) + "\n"


_ID = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _dot_id(name: str) -> str:
    if _ID.match(name):
        return name
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(g: Dag, name: str = "G") -> str:
    lines = [f"digraph {name} {{"]
    lines += [f"  {_dot_id(n)};" for n in g.nodes]
    lines += [f"  {_dot_id(a)} -> {_dot_id(b)};" for a, b in g.sorted_edges()]
    lines.append("}")
    return "\n".join(lines) + "\n"


_TOKEN = r'(?:"((?:[^"\\]|\\.)*)"|([A-Za-z0-9_.\-]+))'
_EDGE_STMT = re.compile(rf"^{_TOKEN}\s*->\s*{_TOKEN}\s*(?:\[.*\])?$")
_NODE_STMT = re.compile(rf"^{_TOKEN}\s*(?:\[.*\])?$")


def _unquote(quoted, bare):
    if quoted is not None:
        return re.sub(r"\\(.)", r"\1", quoted)
    return bare


def parse_dot(text: str) -> Dag:
    """Read the subset of DOT written by :func:`to_dot` (plus attributes)."""
    body = re.sub(r"//[^\n]*|#[^\n]*", "", text)
    m = re.search(r"digraph\s*[^{]*\{(.*)\}", body, re.S)
    if not m:
        raise GraphError("not a DOT digraph")
    nodes: list[str] = []
    edges: list[Edge] = []
    for stmt in re.split(r"[;\n]", m.group(1)):
        stmt = stmt.strip()
        if not stmt or "=" in stmt.split("[", 1)[0] or stmt.split()[0] in ("graph", "node", "edge"):
            continue
        em = _EDGE_STMT.match(stmt)
        if em:
            a, b = _unquote(em.group(1), em.group(2)), _unquote(em.group(3), em.group(4))
            for n in (a, b):
                if n not in nodes:
                    nodes.append(n)
            edges.append((a, b))
            continue
        nm = _NODE_STMT.match(stmt)
        if nm:
            n = _unquote(nm.group(1), nm.group(2))
            if n not in nodes:
                nodes.append(n)
            continue
        raise GraphError(f"unsupported DOT statement {stmt!r}")
    return Dag(nodes, edges)


def load_dot(path) -> Dag:
    return parse_dot(FilePath(path).read_text(encoding="utf-8"))


def all_subsets(items: Sequence[str], max_size: int | None = None):
    """Subsets by increasing size, lexicographic within a size."""
    items = sorted(items)
    top = len(items) if max_size is None else min(max_size, len(items))
    for k in range(top + 1):
        yield from combinations(items, k)

