"""Vulnerability remediation by backtracking over version choices, plus lockfiles.

The search replays the installer walk but, at every dependency link, tries
clean versions before affected ones.  When a link only has affected choices
left, the depth-first search falls back to the most recent open choice and
tries its next alternative.  The default tree is the starting incumbent, so
the result is never worse than plain resolution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Union

from .errors import BudgetInvalid, MismatchedRoots
from .graph import DVGraph, PkgId
from .policy import DEFAULT_POLICY, SelectionPolicy
from .resolver import (
    DEFAULT_BUDGET,
    SCHEMA_VERSION,
    DependencyTree,
    DepEdge,
    Placement,
    RootSpec,
    Walk,
    _Counter,
    manifest_root,
    parse_path_key,
    resolve,
    root_node,
)
from .semver import parse_version
from .timeutil import format_time, parse_time
from .vulnpath import VulnerablePoint, find_vulnerable_paths, find_vulnerable_points

LOCKFILE_VERSION = 3


@dataclass(frozen=True)
class Score:
    points: int
    paths: int

    def key(self) -> tuple[int, int]:
        return (self.points, self.paths)


def score(tree: DependencyTree, graph: DVGraph) -> Score:
    points = find_vulnerable_points(tree, graph)
    paths, _ = find_vulnerable_paths(tree, points, cap=None)
    return Score(len(points), len(paths))


def _canonical(tree: DependencyTree) -> str:
    doc = tree.to_dict()
    return json.dumps({"nodes": doc["nodes"], "edges": doc["edges"]}, sort_keys=True)


@dataclass
class RemediationResult:
    tree: DependencyTree
    default_tree: DependencyTree
    residual_points: list[VulnerablePoint]
    residual_paths: int
    search_exhausted: bool
    expansions_used: int

    @property
    def clean(self) -> bool:
        return not self.residual_points

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "root": str(self.tree.root),
            "residual_points": [p.to_dict() for p in self.residual_points],
            "residual_paths": self.residual_paths,
            "search_exhausted": self.search_exhausted,
            "expansions_used": self.expansions_used,
            "tree": self.tree.to_dict(),
        }


def _affected_placed(walk: Walk, graph: DVGraph) -> int:
    return len({n.id for _, n in walk.placed if graph.is_affected(n.id)})


def remediate(
    root: Union[RootSpec, Mapping[str, str]],
    graph: DVGraph,
    policy: SelectionPolicy = DEFAULT_POLICY,
    budget: Optional[int] = DEFAULT_BUDGET,
    *,
    fail_fast: bool = False,
) -> RemediationResult:
    """Search for a tree with no vulnerable points.

    ``root`` may be a package (``name@version``, ``PkgId`` or node) or a
    manifest mapping library names to constraints.  ``budget`` caps node
    expansions across the whole search; ``None`` means unlimited.
    """
    if budget is not None and budget <= 0:
        raise BudgetInvalid(f"budget must be positive, got {budget}")
    if isinstance(root, Mapping):
        node = manifest_root(root, graph)
    else:
        node = root_node(root, graph)
    default = resolve(node, graph, policy, fail_fast=fail_fast)
    best_tree, best = default, score(default, graph)
    counter = _Counter(budget)
    exhausted = False

    if best.points:
        avoid = lambda n: graph.is_affected(n.id)  # noqa: E731
        stack = [Walk(graph, node, policy, counter, fail_fast=fail_fast, avoid=avoid)]
        while stack:
            walk = stack.pop()
            decision = walk.advance()
            if walk.out_of_budget:
                exhausted = True
                break
            # affected nodes never leave a partial tree, so this is a lower bound
            if _affected_placed(walk, graph) > best.points:
                continue
            if decision is None:
                tree = walk.finish("npm")
                s = score(tree, graph)
                if s.key() < best.key() or (s.key() == best.key() and _canonical(tree) < _canonical(best_tree)):
                    best_tree, best = tree, s
                if best.points == 0:
                    break
                continue
            children = []
            for opt in decision.options:
                child = walk.fork()
                child.apply(decision.src_location, decision.src, decision.link, opt)
                children.append(child)
            stack.extend(reversed(children))

    points = find_vulnerable_points(best_tree, graph)
    return RemediationResult(
        tree=best_tree,
        default_tree=default,
        residual_points=points,
        residual_paths=best.paths,
        search_exhausted=exhausted,
        expansions_used=counter.used,
    )


# ---------------------------------------------------------------- comparison


@dataclass(frozen=True)
class RemediationComparison:
    default_points: int
    remediated_points: int
    default_paths: int
    remediated_paths: int

    @staticmethod
    def _relation(a: int, b: int) -> str:
        return "equal" if a == b else ("fewer" if b < a else "more")

    @property
    def points_relation(self) -> str:
        return self._relation(self.default_points, self.remediated_points)

    @property
    def paths_relation(self) -> str:
        return self._relation(self.default_paths, self.remediated_paths)

    @property
    def category(self) -> str:
        if self.default_points == 0 and self.remediated_points == 0:
            return "equal"
        return self.points_relation

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "category": self.category,
            "default_points": self.default_points,
            "remediated_points": self.remediated_points,
            "default_paths": self.default_paths,
            "remediated_paths": self.remediated_paths,
            "points_relation": self.points_relation,
            "paths_relation": self.paths_relation,
            "path_delta": self.remediated_paths - self.default_paths,
        }


def compare_remediation(default_tree: DependencyTree, remediated: DependencyTree, graph: DVGraph) -> RemediationComparison:
    if default_tree.root != remediated.root:
        raise MismatchedRoots(f"{default_tree.root} != {remediated.root}")
    a, b = score(default_tree, graph), score(remediated, graph)
    return RemediationComparison(a.points, b.points, a.paths, b.paths)


# ---------------------------------------------------------------- lockfiles


def lockfile_dict(tree: DependencyTree, graph: Optional[DVGraph] = None) -> dict[str, Any]:
    """Lockfile document.

    ``packages`` is keyed by install path (``""`` for the root).  Each entry
    lists its declared ``dependencies`` (library to raw constraint) and the
    install path each one resolved to.  ``resolved`` and ``integrity`` are
    copied from registry metadata when the graph has them and omitted
    otherwise; they are never computed.
    """
    outgoing: dict[Placement, list[DepEdge]] = {}
    for e in tree.edges:
        outgoing.setdefault(e.src, []).append(e)
    packages: dict[str, Any] = {}
    for p in tree.nodes:
        entry: dict[str, Any] = {"name": p.name, "version": str(p.version)}
        if graph is not None and graph.has_version(p.pkg):
            meta = graph.node(p.pkg)
            if meta.resolved:
                entry["resolved"] = meta.resolved
            if meta.integrity:
                entry["integrity"] = meta.integrity
        edges = sorted(outgoing.get(p, ()))
        if edges:
            entry["dependencies"] = {e.dst.name: e.constraint for e in edges}
            entry["resolved_paths"] = {e.dst.name: e.dst.key for e in edges}
        packages[p.key] = entry
    return {
        "lockfileVersion": LOCKFILE_VERSION,
        "schema_version": SCHEMA_VERSION,
        "name": tree.root.name,
        "version": str(tree.root.version),
        "resolved_at": format_time(tree.resolved_at),
        "packages": packages,
    }


def emit_lockfile(tree: DependencyTree, graph: Optional[DVGraph] = None) -> bytes:
    text = json.dumps(lockfile_dict(tree, graph), indent=2, sort_keys=True, ensure_ascii=False)
    return (text + "\n").encode("utf-8")


def read_lockfile(data: Union[bytes, str, Mapping[str, Any]]) -> DependencyTree:
    doc = data if isinstance(data, Mapping) else json.loads(data)
    packages = doc["packages"]
    by_key: dict[str, Placement] = {}
    for key, entry in packages.items():
        by_key[key] = Placement(parse_path_key(key), PkgId(entry["name"], parse_version(entry["version"])))
    edges = []
    for key, entry in packages.items():
        deps = entry.get("dependencies", {})
        paths = entry.get("resolved_paths", {})
        for lib, raw in deps.items():
            edges.append(DepEdge(by_key[key], by_key[paths[lib]], raw))
    root = PkgId(doc["name"], parse_version(doc["version"]))
    return DependencyTree(
        root=root,
        nodes=tuple(sorted(by_key.values())),
        edges=tuple(sorted(edges)),
        resolved_at=parse_time(doc.get("resolved_at")),
    )
