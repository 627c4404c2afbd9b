"""DAG representation, validation, d-separation and treatment-to-outcome path enumeration."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path


class GraphError(ValueError):
    """Unknown node names or malformed queries."""


@dataclass(frozen=True)
class DagSpec:
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    treatment: str
    outcome: str
    _parents: dict = field(init=False, repr=False, compare=False)
    _children: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple((str(a), str(b)) for a, b in self.edges))
        parents = {n: [] for n in self.nodes}
        children = {n: [] for n in self.nodes}
        for a, b in self.edges:
            # unknown names are reported by validate_dag, not here
            if a in children and b in parents:
                children[a].append(b)
                parents[b].append(a)
        object.__setattr__(self, "_parents", {k: tuple(v) for k, v in parents.items()})
        object.__setattr__(self, "_children", {k: tuple(v) for k, v in children.items()})

    @property
    def covariates(self) -> tuple[str, ...]:
        return tuple(n for n in self.nodes if n not in (self.treatment, self.outcome))

    @property
    def feature_names(self) -> tuple[str, ...]:
        """Explanation features: covariates then treatment (outcome excluded)."""
        return self.covariates + (self.treatment,)

    def parents(self, node: str) -> tuple[str, ...]:
        self._check(node)
        return self._parents[node]

    def children(self, node: str) -> tuple[str, ...]:
        self._check(node)
        return self._children[node]

    def neighbours(self, node: str) -> tuple[str, ...]:
        return tuple(sorted(set(self.parents(node)) | set(self.children(node))))

    def has_edge(self, a: str, b: str) -> bool:
        return b in self._children.get(a, ())

    def adjacent(self, a: str, b: str) -> bool:
        return self.has_edge(a, b) or self.has_edge(b, a)

    def ancestors(self, nodes) -> set[str]:
        """Nodes with a directed path into `nodes`, including the nodes themselves."""
        out = set()
        todo = list(nodes)
        while todo:
            n = todo.pop()
            if n in out:
                continue
            self._check(n)
            out.add(n)
            todo.extend(self._parents[n])
        return out

    def descendants(self, node: str) -> set[str]:
        out = set()
        todo = list(self.children(node))
        while todo:
            n = todo.pop()
            if n not in out:
                out.add(n)
                todo.extend(self._children[n])
        return out

    def without_edges(self, drop) -> "DagSpec":
        drop = set(drop)
        return DagSpec(self.nodes, tuple(e for e in self.edges if e not in drop), self.treatment, self.outcome)

    def topological_order(self) -> list[str]:
        indeg = {n: len(self._parents[n]) for n in self.nodes}
        queue = deque(n for n in self.nodes if indeg[n] == 0)
        order = []
        while queue:
            n = queue.popleft()
            order.append(n)
            for c in self._children[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if len(order) != len(self.nodes):
            raise GraphError("graph has a cycle")
        return order

    def _check(self, node):
        if node not in self._parents:
            raise GraphError(f"unknown node {node!r}")

    # -- serialization
    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [list(e) for e in self.edges],
            "treatment": self.treatment,
            "outcome": self.outcome,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "DagSpec":
        try:
            return cls(
                nodes=tuple(str(n) for n in raw["nodes"]),
                edges=tuple((e[0], e[1]) for e in raw["edges"]),
                treatment=str(raw["treatment"]),
                outcome=str(raw["outcome"]),
            )
        except (KeyError, IndexError, TypeError) as exc:
            raise GraphError(f"malformed DAG JSON: {exc}") from exc

    @classmethod
    def load(cls, path) -> "DagSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def validate_dag(spec: DagSpec) -> list[str]:
    """Every violated invariant as a message; an empty list means the DAG is usable."""
    problems = []
    names = list(spec.nodes)
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        problems.append(f"duplicate node names: {dupes}")
    for n in names:
        if "," in n or not n:
            problems.append(f"invalid node name {n!r}")
    known = set(names)
    for a, b in spec.edges:
        for n in (a, b):
            if n not in known:
                problems.append(f"unknown node {n!r} in edge {a}->{b}")
        if a == b:
            problems.append(f"self-loop on {a!r}")
    for role, n in (("treatment", spec.treatment), ("outcome", spec.outcome)):
        if n not in known:
            problems.append(f"{role} {n!r} is not a node")
    if spec.treatment == spec.outcome:
        problems.append("treatment and outcome must be distinct")
    try:
        spec.topological_order()
        acyclic = True
    except GraphError:
        problems.append("cycle found")
        acyclic = False
    if acyclic and spec.treatment in known and spec.outcome in known and spec.treatment != spec.outcome:
        if spec.outcome not in spec.descendants(spec.treatment):
            problems.append("treatment is not an ancestor of the outcome")
    if spec.outcome in known and spec.children(spec.outcome):
        problems.append(f"outcome {spec.outcome!r} has outgoing edges to {list(spec.children(spec.outcome))}")
    return problems


def d_separated(spec: DagSpec, x, y, z=()) -> bool:
    """Bayes-ball reachability: True iff every path between x and y is blocked given z."""
    x, y, z = set(x), set(y), set(z)
    for n in x | y | z:
        spec._check(n)
    if x & y or x & z or y & z:
        raise GraphError("x, y and z must be disjoint")
    if not x or not y:
        return True
    anc_z = spec.ancestors(z)
    # direction: "up" = arrived from a child, "down" = arrived from a parent
    todo = [(n, "up") for n in x]
    seen = set()
    reached = set()
    while todo:
        node, direction = todo.pop()
        if (node, direction) in seen:
            continue
        seen.add((node, direction))
        if node not in z:
            reached.add(node)
        if direction == "up" and node not in z:
            todo.extend((p, "up") for p in spec._parents[node])
            todo.extend((c, "down") for c in spec._children[node])
        elif direction == "down":
            if node not in z:
                todo.extend((c, "down") for c in spec._children[node])
            if node in anc_z:
                todo.extend((p, "up") for p in spec._parents[node])
    return not (reached & y)


ROLES = ("direct", "confounding", "mediating", "moderating", "mixed")


@dataclass(frozen=True)
class CausalPath:
    inner_nodes: tuple[str, ...]
    edge_orientations: tuple[str, ...]
    role_label: str
    merged: bool = False

    @property
    def is_direct(self) -> bool:
        return not self.inner_nodes

    def describe(self, treatment: str = "T", outcome: str = "Y") -> str:
        if self.merged:
            return f"{treatment}~{{{','.join(self.inner_nodes)}}}~{outcome}"
        arrows = {"forward": "->", "backward": "<-", "modifies": "~"}
        parts = [treatment]
        for node, hop in zip(self.inner_nodes + (outcome,), self.edge_orientations):
            parts.append(arrows[hop])
            parts.append(node)
        return "".join(parts)

    def to_dict(self) -> dict:
        return {
            "inner_nodes": list(self.inner_nodes),
            "edge_orientations": list(self.edge_orientations),
            "role_label": self.role_label,
            "merged": self.merged,
        }


def _single_paths(spec: DagSpec) -> list[CausalPath]:
    T, Y = spec.treatment, spec.outcome
    out = []
    for c in spec.covariates:
        if not spec.adjacent(c, Y):
            continue
        if spec.adjacent(c, T):
            if spec.has_edge(c, T):
                role = "confounding"
                first = "backward"
            else:
                first = "forward"
                # condition on pre-treatment covariates: a shared confounder does not make it mixed
                pre = set(spec.covariates) - spec.descendants(T) - {c}
                cut = spec.without_edges({(T, c)})
                role = "mediating" if d_separated(cut, {T}, {c}, pre) else "mixed"
            out.append(CausalPath((c,), (first, "forward"), role))
        elif d_separated(spec, {T}, {c}):
            out.append(CausalPath((c,), ("modifies", "forward"), "moderating"))
    return out


def _skeleton_paths(spec: DagSpec, max_inner: int | None = None):
    """Simple undirected paths T - ... - Y through covariates only, as node tuples."""
    T, Y = spec.treatment, spec.outcome
    covs = set(spec.covariates)
    found = []

    def walk(path):
        last = path[-1]
        for nb in spec.neighbours(last):
            if nb == Y and len(path) > 1:
                found.append(tuple(path[1:]))
            elif nb in covs and nb not in path:
                if max_inner is None or len(path) < max_inner + 1:
                    walk(path + [nb])

    walk([T])
    return found


def _orientations(spec: DagSpec, inner) -> tuple[str, ...]:
    seq = (spec.treatment,) + tuple(inner) + (spec.outcome,)
    return tuple("forward" if spec.has_edge(a, b) else "backward" for a, b in zip(seq, seq[1:]))


def _multi_label(hops) -> str:
    if all(h == "forward" for h in hops):
        return "mediating"
    if hops[0] == "backward":
        return "confounding"
    return "mixed"


def enumerate_paths(spec: DagSpec, merged: bool = False) -> list[CausalPath]:
    """Direct edge, single-covariate paths and (if `merged`) multi-node paths and merged groups.

    Ordered by (number of inner nodes, inner-node names).
    """
    T, Y = spec.treatment, spec.outcome
    paths = []
    if spec.has_edge(T, Y):
        paths.append(CausalPath((), ("forward",), "direct"))
    singles = _single_paths(spec)
    paths.extend(singles)
    if merged:
        seen = {frozenset(p.inner_nodes) for p in singles}
        multi = []
        for inner in _skeleton_paths(spec):
            if len(inner) < 2 or frozenset(inner) in seen:
                continue
            seen.add(frozenset(inner))
            hops = _orientations(spec, inner)
            multi.append(CausalPath(tuple(inner), hops, _multi_label(hops)))
        paths.extend(multi)
        # connected components of paths that share an inner node
        groups = [(set(p.inner_nodes), {p.role_label}) for p in singles + multi]
        changed = True
        while changed:
            changed = False
            for i, j in combinations(range(len(groups)), 2):
                if groups[i][0] & groups[j][0]:
                    groups[i] = (groups[i][0] | groups[j][0], groups[i][1] | groups[j][1])
                    del groups[j]
                    changed = True
                    break
        order = {n: k for k, n in enumerate(spec.topological_order())}
        for nodes, roles in groups:
            if frozenset(nodes) in seen:
                continue
            seen.add(frozenset(nodes))
            inner = tuple(sorted(nodes, key=order.__getitem__))
            role = roles.pop() if len(roles) == 1 else "mixed"
            paths.append(CausalPath(inner, (), role, merged=True))
    return sorted(paths, key=lambda p: (len(p.inner_nodes), sorted(p.inner_nodes), p.merged))


def single_path_for(spec: DagSpec, covariate: str) -> CausalPath:
    for p in _single_paths(spec):
        if p.inner_nodes == (covariate,):
            return p
    if covariate not in spec.covariates:
        raise GraphError(f"{covariate!r} is not a covariate")
    # no two-hop route: the path effect is still defined, only the label is unclear
    return CausalPath((covariate,), ("modifies", "forward"), "mixed")


def backdoor_valid(spec: DagSpec, adjust) -> bool:
    """Back-door criterion for T -> Y with adjustment set `adjust`."""
    T, Y = spec.treatment, spec.outcome
    adjust = set(adjust)
    if adjust & spec.descendants(T):
        return False
    cut = spec.without_edges({(T, c) for c in spec.children(T)})
    return d_separated(cut, {T}, {Y}, adjust)


def coalition_label(spec: DagSpec, members) -> str:
    members = set(members)
    if members & spec.descendants(spec.treatment):
        return "CDE"
    valid = backdoor_valid(spec, members)
    if not members:
        return "ATE-like" if valid else "base"
    return "CATE" if valid else "quoted-CATE"
