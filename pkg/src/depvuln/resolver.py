"""Dependency tree resolution.

``resolve`` simulates an npm-style installer: a breadth-first walk over
installed packages that reuses any already-installed satisfying version
visible from the depender and otherwise hoists the selected version to the
highest free directory above it.  ``resolve_reach`` is the naive baseline that
expands every constraint independently.

An install location is a tuple of library names from the project root, so
``("B", "D")`` is ``node_modules/B/node_modules/D``.  The root package sits at
``()`` and its own ``node_modules`` is the scope ``()`` as well; a package at
location ``L`` sees everything installed in any scope that is a prefix of
``L``.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence, Union

from .errors import CycleBudgetExceeded, Unresolvable, UnresolvableDependency
from .graph import DependsEdge, DVGraph, PkgId, VerNode
from .policy import DEFAULT_POLICY, SelectionPolicy
from .semver import Kind, parse_version
from .timeutil import format_time, parse_time

SCHEMA_VERSION = 1
DEFAULT_BUDGET = 100_000

Location = tuple[str, ...]


def path_key(location: Sequence[str]) -> str:
    return "/".join(f"node_modules/{name}" for name in location)


def parse_path_key(key: str) -> Location:
    if not key:
        return ()
    if not key.startswith("node_modules/"):
        raise ValueError(f"bad install path {key!r}")
    return tuple(key[len("node_modules/") :].split("/node_modules/"))


@dataclass(frozen=True, order=True)
class Placement:
    path: Location
    pkg: PkgId

    @property
    def name(self) -> str:
        return self.pkg.name

    @property
    def version(self):
        return self.pkg.version

    @property
    def key(self) -> str:
        return path_key(self.path)

    def __str__(self) -> str:
        return f"{self.pkg} at {self.key or '<root>'}"


@dataclass(frozen=True, order=True)
class DepEdge:
    src: Placement
    dst: Placement
    constraint: str

    @property
    def logical(self) -> tuple[PkgId, PkgId, str]:
        return (self.src.pkg, self.dst.pkg, self.constraint)


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # "unresolvable" | "displaced"
    src: str
    library: str
    constraint: str
    message: str

    def to_dict(self) -> dict[str, str]:
        return {
            "kind": self.kind,
            "src": self.src,
            "library": self.library,
            "constraint": self.constraint,
            "message": self.message,
        }


@dataclass(frozen=True)
class DependencyTree:
    """A resolved tree.  Equality ignores ``resolved_at``, mode and diagnostics."""

    root: PkgId
    nodes: tuple[Placement, ...]
    edges: tuple[DepEdge, ...]
    resolved_at: Optional[datetime] = field(default=None, compare=False)
    mode: str = field(default="npm", compare=False)
    diagnostics: tuple[Diagnostic, ...] = field(default=(), compare=False)

    @property
    def root_placement(self) -> Placement:
        return Placement((), self.root)

    @property
    def versions(self) -> frozenset[PkgId]:
        return frozenset(p.pkg for p in self.nodes)

    @property
    def logical_edges(self) -> list[tuple[PkgId, PkgId, str]]:
        return sorted({e.logical for e in self.edges})

    @property
    def direct_edges(self) -> list[DepEdge]:
        return [e for e in self.edges if e.src.path == () and e.src.pkg == self.root]

    def placements_of(self, pkg: PkgId) -> list[Placement]:
        return [p for p in self.nodes if p.pkg == pkg]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "root": str(self.root),
            "resolved_at": format_time(self.resolved_at),
            "mode": self.mode,
            "nodes": [{"name": p.name, "version": str(p.version), "path": p.key} for p in self.nodes],
            "edges": [
                {
                    "from": str(e.src.pkg),
                    "to": str(e.dst.pkg),
                    "constraint": e.constraint,
                    "from_path": e.src.key,
                    "to_path": e.dst.key,
                }
                for e in self.edges
            ],
            "diagnostics": [d.to_dict() for d in self.diagnostics],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "DependencyTree":
        root = PkgId.parse(doc["root"])
        nodes = []
        by_path: dict[Location, Placement] = {}
        for n in doc.get("nodes", ()):
            p = Placement(parse_path_key(n["path"]), PkgId(n["name"], parse_version(n["version"])))
            nodes.append(p)
            by_path[p.path] = p
        edges = []
        for e in doc.get("edges", ()):
            if "from_path" in e:
                src = by_path[parse_path_key(e["from_path"])]
                dst = by_path[parse_path_key(e["to_path"])]
            else:
                # older exports without paths: fall back to the first placement
                src = _first(nodes, PkgId.parse(e["from"]))
                dst = _first(nodes, PkgId.parse(e["to"]))
            edges.append(DepEdge(src, dst, e.get("constraint", "")))
        diags = tuple(Diagnostic(**d) for d in doc.get("diagnostics", ()))
        return cls(
            root=root,
            nodes=tuple(sorted(nodes)),
            edges=tuple(sorted(edges)),
            resolved_at=parse_time(doc.get("resolved_at")),
            mode=doc.get("mode", "npm"),
            diagnostics=diags,
        )


def _first(nodes: Iterable[Placement], pkg: PkgId) -> Placement:
    for p in sorted(nodes):
        if p.pkg == pkg:
            return p
    raise KeyError(str(pkg))


# ---------------------------------------------------------------- the walk


@dataclass(frozen=True)
class Reuse:
    location: Location
    node: VerNode


@dataclass(frozen=True)
class Install:
    node: VerNode


Option = Union[Reuse, Install]


@dataclass
class Decision:
    src_location: Location
    src: VerNode
    link: DependsEdge
    options: list[Option]


class _Counter:
    """Expansion budget shared between forks of one search."""

    def __init__(self, budget: Optional[int]) -> None:
        self.budget = budget
        self.used = 0

    def spend(self) -> bool:
        if self.budget is not None and self.used >= self.budget:
            return False
        self.used += 1
        return True


class Walk:
    """Mutable installer state.  ``fork`` gives an independent copy.

    ``advance`` runs until a link offers more than one option, returning that
    decision, or ``None`` once the queue is drained.  Plain resolution never
    stops: it always takes the first option.
    """

    def __init__(
        self,
        graph: DVGraph,
        root: VerNode,
        policy: SelectionPolicy,
        counter: _Counter,
        *,
        fail_fast: bool = False,
        avoid: Optional[Callable[[VerNode], bool]] = None,
    ) -> None:
        self.graph = graph
        self.root = root
        self.policy = policy
        self.counter = counter
        self.fail_fast = fail_fast
        # when set, versions it flags are tried last (remediation)
        self.avoid = avoid
        self.scopes: dict[Location, dict[str, VerNode]] = {(): {root.lib: root}}
        self.placed: list[tuple[Location, VerNode]] = [((), root)]
        self.edges: list[tuple[Location, VerNode, Location, VerNode, str]] = []
        self.diagnostics: list[Diagnostic] = []
        self.queue: deque[tuple[Location, VerNode]] = deque([((), root)])
        self.current: Optional[tuple[Location, VerNode]] = None
        self.pending: deque[DependsEdge] = deque()
        self.out_of_budget = False

    def fork(self) -> "Walk":
        other = object.__new__(Walk)
        other.__dict__.update(self.__dict__)
        other.scopes = {k: dict(v) for k, v in self.scopes.items()}
        other.placed = list(self.placed)
        other.edges = list(self.edges)
        other.diagnostics = list(self.diagnostics)
        other.queue = deque(self.queue)
        other.pending = deque(self.pending)
        return other

    # -------------------------------------------------------- visibility

    def visible(self, location: Location, library: str) -> list[tuple[Location, VerNode]]:
        """Installed versions of ``library`` visible from ``location``, nearest first."""
        found = []
        for i in range(len(location), -1, -1):
            scope = location[:i]
            node = self.scopes.get(scope, {}).get(library)
            if node is not None:
                where = () if node is self.root and scope == () else scope + (library,)
                found.append((where, node))
        return found

    def _free_scope(self, location: Location, library: str) -> Optional[Location]:
        for i in range(len(location) + 1):
            scope = location[:i]
            if library not in self.scopes.get(scope, {}):
                return scope
        return None

    # -------------------------------------------------------- stepping

    def options(self, location: Location, link: DependsEdge) -> list[Option]:
        c = link.constraint
        if c is None or c.kind in (Kind.GIT, Kind.REMOTE, Kind.LOCAL):
            return []
        ok = [
            (loc, n)
            for loc, n in self.visible(location, link.library)
            if self.graph.matches(n, c) and self.policy.admits(n)
        ]
        fresh = self.graph.candidates(link.library, c, self.policy)
        if self.avoid is None:
            if ok:
                return [Reuse(*ok[0])]
            return [Install(n) for n in fresh]
        clean_reuse = [(loc, n) for loc, n in ok if not self.avoid(n)]
        if clean_reuse:
            return [Reuse(*clean_reuse[0])]
        opts: list[Option] = [Install(n) for n in fresh if not self.avoid(n)]
        if ok:
            opts.append(Reuse(*ok[0]))
        # a visible satisfying version is reused, never installed again; this
        # also keeps cyclic dependencies from nesting forever
        seen = {n.id for _, n in ok}
        opts.extend(Install(n) for n in fresh if self.avoid(n) and n.id not in seen)
        return opts

    def _unresolvable(self, src: VerNode, link: DependsEdge) -> None:
        if link.constraint is None:
            reason = link.error or "invalid constraint"
        elif link.constraint.kind in (Kind.GIT, Kind.REMOTE, Kind.LOCAL):
            reason = f"{link.constraint.kind.value} constraints are not resolved offline"
        elif link.library not in self.graph.libs:
            reason = "unknown library"
        else:
            reason = "no satisfying version"
        if self.fail_fast:
            raise UnresolvableDependency(str(src.id), link.library, link.raw, reason)
        self.diagnostics.append(Diagnostic("unresolvable", str(src.id), link.library, link.raw, reason))

    def apply(self, src_location: Location, src: VerNode, link: DependsEdge, option: Option) -> None:
        if isinstance(option, Reuse):
            self.edges.append((src_location, src, option.location, option.node, link.raw))
            return
        node = option.node
        scope = self._free_scope(src_location, link.library)
        if scope is None:
            self.diagnostics.append(
                Diagnostic(
                    "displaced",
                    str(src.id),
                    link.library,
                    link.raw,
                    f"no free directory for {node.id} above {path_key(src_location) or '<root>'}",
                )
            )
            return
        self.scopes.setdefault(scope, {})[link.library] = node
        location = scope + (link.library,)
        self.placed.append((location, node))
        self.edges.append((src_location, src, location, node, link.raw))
        self.queue.append((location, node))

    def advance(self) -> Optional[Decision]:
        while True:
            if not self.pending:
                if not self.queue:
                    return None
                if not self.counter.spend():
                    self.out_of_budget = True
                    return None
                self.current = self.queue.popleft()
                self.pending = deque(self.current[1].links(self.policy.dep_types))
                continue
            location, src = self.current
            link = self.pending.popleft()
            opts = self.options(location, link)
            if not opts:
                self._unresolvable(src, link)
                continue
            if len(opts) == 1 or self.avoid is None:
                self.apply(location, src, link, opts[0])
                continue
            return Decision(location, src, link, opts)

    def finish(self, mode: str = "npm") -> DependencyTree:
        root_id = self.root.id
        nodes = sorted(Placement(loc, n.id) for loc, n in self.placed)
        edges = sorted(
            DepEdge(Placement(sl, s.id), Placement(dl, d.id), raw) for sl, s, dl, d, raw in self.edges
        )
        return DependencyTree(
            root=root_id,
            nodes=tuple(nodes),
            edges=tuple(edges),
            resolved_at=self.policy.as_of,
            mode=mode,
            diagnostics=tuple(self.diagnostics),
        )


# ---------------------------------------------------------------- entry points

RootSpec = Union[str, PkgId, VerNode]


def root_node(root: RootSpec, graph: DVGraph) -> VerNode:
    if isinstance(root, VerNode):
        return root
    if isinstance(root, str):
        root = PkgId.parse(root)
    return graph.node(root)


def _ensure_released(node: VerNode, graph: DVGraph, policy: SelectionPolicy) -> None:
    if policy.as_of is None:
        return
    stored = graph.has_version(node.id) and graph.node(node.id) is node
    if stored and not policy.released(node):
        raise Unresolvable(f"{node.id} is not yet released at {format_time(policy.as_of)}")


def resolve(
    root: RootSpec,
    graph: DVGraph,
    policy: SelectionPolicy = DEFAULT_POLICY,
    *,
    fail_fast: bool = False,
    budget: Optional[int] = DEFAULT_BUDGET,
) -> DependencyTree:
    node = root_node(root, graph)
    _ensure_released(node, graph, policy)
    walk = Walk(graph, node, policy, _Counter(budget), fail_fast=fail_fast)
    walk.advance()
    if walk.out_of_budget:
        raise CycleBudgetExceeded(f"resolution of {node.id} exceeded {budget} expansions")
    return walk.finish("npm")


def resolve_reach(
    root: RootSpec,
    graph: DVGraph,
    policy: SelectionPolicy = DEFAULT_POLICY,
    *,
    fail_fast: bool = False,
    budget: Optional[int] = DEFAULT_BUDGET,
) -> DependencyTree:
    """Expand every constraint to its highest admissible version, no reuse or hoisting.

    Each distinct version is expanded once, at the nested location where the
    breadth-first walk first meets it.
    """
    node = root_node(root, graph)
    _ensure_released(node, graph, policy)
    walk = Walk(graph, node, policy, _Counter(budget), fail_fast=fail_fast)
    where: dict[PkgId, Location] = {node.id: ()}
    queue: deque[tuple[Location, VerNode]] = deque([((), node)])
    placed = [Placement((), node.id)]
    edges: list[DepEdge] = []
    expansions = 0
    while queue:
        expansions += 1
        if budget is not None and expansions > budget:
            raise CycleBudgetExceeded(f"reach expansion of {node.id} exceeded {budget} expansions")
        location, src = queue.popleft()
        for link in src.links(policy.dep_types):
            c = link.constraint
            pool = []
            if c is not None and c.kind not in (Kind.GIT, Kind.REMOTE, Kind.LOCAL):
                pool = [n for n in graph.satisfying(link.library, c) if policy.admits(n)]
            if not pool:
                walk._unresolvable(src, link)
                continue
            target = pool[-1]
            if target.id not in where:
                where[target.id] = location + (link.library,)
                placed.append(Placement(where[target.id], target.id))
                queue.append((where[target.id], target))
            edges.append(DepEdge(Placement(location, src.id), Placement(where[target.id], target.id), link.raw))
    return DependencyTree(
        root=node.id,
        nodes=tuple(sorted(placed)),
        edges=tuple(sorted(set(edges))),
        resolved_at=policy.as_of,
        mode="reach",
        diagnostics=tuple(walk.diagnostics),
    )


def manifest_root(
    manifest: Mapping[str, str], graph: DVGraph, name: str = "root", version: str = "0.0.0"
) -> VerNode:
    return graph.make_root(name, version, manifest)


def resolve_manifest(
    manifest: Mapping[str, str],
    graph: DVGraph,
    policy: SelectionPolicy = DEFAULT_POLICY,
    *,
    name: str = "root",
    version: str = "0.0.0",
    mode: str = "npm",
    fail_fast: bool = False,
    budget: Optional[int] = DEFAULT_BUDGET,
) -> DependencyTree:
    root = manifest_root(manifest, graph, name, version)
    fn = resolve_reach if mode == "reach" else resolve
    return fn(root, graph, policy, fail_fast=fail_fast, budget=budget)


# ---------------------------------------------------------------- comparison


@dataclass
class TreeDiff:
    root_changed: bool
    only_left: list[PkgId]
    only_right: list[PkgId]
    edges_only_left: list[tuple[PkgId, PkgId, str]]
    edges_only_right: list[tuple[PkgId, PkgId, str]]
    placements_only_left: list[Placement]
    placements_only_right: list[Placement]
    # (src, library, left target, right target) for links that point elsewhere
    retargeted: list[tuple[PkgId, str, PkgId, PkgId]]

    @property
    def exact(self) -> bool:
        return not (
            self.root_changed
            or self.only_left
            or self.only_right
            or self.edges_only_left
            or self.edges_only_right
            or self.placements_only_left
            or self.placements_only_right
        )

    def to_dict(self) -> dict[str, Any]:
        def edge(e):
            return {"from": str(e[0]), "to": str(e[1]), "constraint": e[2]}

        return {
            "schema_version": SCHEMA_VERSION,
            "exact": self.exact,
            "root_changed": self.root_changed,
            "nodes_only_left": [str(p) for p in self.only_left],
            "nodes_only_right": [str(p) for p in self.only_right],
            "edges_only_left": [edge(e) for e in self.edges_only_left],
            "edges_only_right": [edge(e) for e in self.edges_only_right],
            "placements_only_left": [{"name": p.name, "version": str(p.version), "path": p.key} for p in self.placements_only_left],
            "placements_only_right": [{"name": p.name, "version": str(p.version), "path": p.key} for p in self.placements_only_right],
            "retargeted": [
                {"from": str(s), "library": lib, "left": str(a), "right": str(b)} for s, lib, a, b in self.retargeted
            ],
        }


def compare_trees(left: DependencyTree, right: DependencyTree) -> TreeDiff:
    lv, rv = left.versions, right.versions
    le, re_ = set(left.logical_edges), set(right.logical_edges)
    lp, rp = set(left.nodes), set(right.nodes)
    l_targets = {(s, d.name, c): d for s, d, c in le}
    r_targets = {(s, d.name, c): d for s, d, c in re_}
    retargeted = sorted(
        (k[0], k[1], l_targets[k], r_targets[k])
        for k in l_targets.keys() & r_targets.keys()
        if l_targets[k] != r_targets[k]
    )
    return TreeDiff(
        root_changed=left.root != right.root,
        only_left=sorted(lv - rv),
        only_right=sorted(rv - lv),
        edges_only_left=sorted(le - re_),
        edges_only_right=sorted(re_ - le),
        placements_only_left=sorted(lp - rp),
        placements_only_right=sorted(rp - lp),
        retargeted=retargeted,
    )
