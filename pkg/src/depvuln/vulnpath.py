"""Vulnerable points and the dependency paths that lead to them."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

from .graph import DVGraph, PkgId
from .resolver import SCHEMA_VERSION, DependencyTree

DEFAULT_CAP = 1000

LogicalEdge = tuple[PkgId, PkgId, str]


@dataclass(frozen=True, order=True)
class VulnerablePoint:
    node: PkgId
    vulnerabilities: frozenset[str] = field(compare=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.node.name,
            "version": str(self.node.version),
            "cves": sorted(self.vulnerabilities),
        }


@dataclass(frozen=True, order=True)
class VulnerablePath:
    nodes: tuple[PkgId, ...]
    edges: tuple[LogicalEdge, ...]
    cves: frozenset[str] = field(default=frozenset(), compare=False)

    @property
    def steps(self) -> int:
        return len(self.edges)

    @property
    def point(self) -> PkgId:
        return self.nodes[-1]

    def is_well_formed(self) -> bool:
        """Consecutive nodes are joined by the matching edge and no node repeats."""
        if len(self.nodes) != len(self.edges) + 1 or len(set(self.nodes)) != len(self.nodes):
            return False
        return all(e[0] == a and e[1] == b for e, a, b in zip(self.edges, self.nodes, self.nodes[1:]))

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": [str(n) for n in self.nodes],
            "constraints": [e[2] for e in self.edges],
            "steps": self.steps,
            "cves": sorted(self.cves),
        }


def find_vulnerable_points(tree: DependencyTree, graph: DVGraph) -> list[VulnerablePoint]:
    points = []
    for pid in sorted(tree.versions):
        vulns = graph.vulnerabilities_of(pid)
        if vulns:
            points.append(VulnerablePoint(pid, vulns))
    return points


def _predecessors(tree: DependencyTree) -> dict[PkgId, list[LogicalEdge]]:
    # one edge per (src, dst) pair; the smallest constraint string wins for stability
    chosen: dict[tuple[PkgId, PkgId], LogicalEdge] = {}
    for e in tree.logical_edges:
        chosen.setdefault((e[0], e[1]), e)
    preds: dict[PkgId, list[LogicalEdge]] = defaultdict(list)
    for e in sorted(chosen.values()):
        preds[e[1]].append(e)
    return preds


def find_vulnerable_paths(
    tree: DependencyTree,
    points: Iterable[VulnerablePoint | PkgId],
    cap: Optional[int] = DEFAULT_CAP,
) -> tuple[list[VulnerablePath], bool]:
    """All simple root-to-point paths, by reverse depth-first search.

    ``cap`` bounds the total per tree (``None`` means unbounded); the flag is
    true when more paths existed than were returned.
    """
    if cap is not None and cap <= 0:
        raise ValueError("cap must be positive")
    preds = _predecessors(tree)
    root = tree.root
    found: list[VulnerablePath] = []
    limit = None if cap is None else cap + 1

    for point in sorted(points):
        target = point.node if isinstance(point, VulnerablePoint) else point
        cves = point.vulnerabilities if isinstance(point, VulnerablePoint) else frozenset()
        if target == root:
            continue
        # iterative DFS walking edges backwards; `trail` holds edges from target upwards
        on_path = {target}
        trail: list[LogicalEdge] = []
        stack = [iter(preds.get(target, ()))]
        while stack:
            if limit is not None and len(found) >= limit:
                break
            edge = next(stack[-1], None)
            if edge is None:
                stack.pop()
                if trail:
                    on_path.discard(trail.pop()[0])
                continue
            src = edge[0]
            if src in on_path:
                continue
            if src == root:
                edges = tuple(reversed(trail + [edge]))
                nodes = (root,) + tuple(e[1] for e in edges)
                found.append(VulnerablePath(nodes, edges, cves))
                continue
            on_path.add(src)
            trail.append(edge)
            stack.append(iter(preds.get(src, ())))
        if limit is not None and len(found) >= limit:
            break

    truncated = cap is not None and len(found) > cap
    return (found[:cap] if truncated else found), truncated


@dataclass
class PathMetrics:
    points: int = 0
    paths: int = 0
    paths_per_point: dict[str, int] = field(default_factory=dict)
    step_histogram: dict[int, int] = field(default_factory=dict)
    has_one_step: bool = False
    one_step_only: bool = False
    direct_dependencies_traversed: int = 0
    max_steps: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "points": self.points,
            "paths": self.paths,
            "paths_per_point": dict(sorted(self.paths_per_point.items())),
            "step_histogram": {str(k): v for k, v in sorted(self.step_histogram.items())},
            "has_one_step": self.has_one_step,
            "one_step_only": self.one_step_only,
            "direct_dependencies_traversed": self.direct_dependencies_traversed,
            "max_steps": self.max_steps,
        }


def path_metrics(paths: Iterable[VulnerablePath]) -> PathMetrics:
    """Per-tree summary.  Points without any path (a vulnerable root) are not counted."""
    paths = list(paths)
    per_point = Counter(str(p.point) for p in paths)
    hist = Counter(p.steps for p in paths)
    return PathMetrics(
        points=len(per_point),
        paths=len(paths),
        paths_per_point=dict(per_point),
        step_histogram=dict(hist),
        has_one_step=hist.get(1, 0) > 0,
        one_step_only=bool(paths) and set(hist) == {1},
        direct_dependencies_traversed=len({p.nodes[1] for p in paths if len(p.nodes) > 1}),
        max_steps=max(hist, default=0),
    )


@dataclass
class AuditReport:
    tree: DependencyTree
    points: list[VulnerablePoint]
    paths: list[VulnerablePath]
    truncated: bool
    metrics: PathMetrics

    @property
    def vulnerable(self) -> bool:
        return bool(self.points)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "tree": str(self.tree.root),
            "resolved_at": self.tree.to_dict()["resolved_at"],
            "points": [p.to_dict() for p in self.points],
            "paths": [p.to_dict() for p in self.paths],
            "metrics": self.metrics.to_dict(),
            "truncated": self.truncated,
        }


def audit(tree: DependencyTree, graph: DVGraph, cap: Optional[int] = DEFAULT_CAP) -> AuditReport:
    points = find_vulnerable_points(tree, graph)
    paths, truncated = find_vulnerable_paths(tree, points, cap)
    return AuditReport(tree, points, paths, truncated, path_metrics(paths))
