"""Replaying release history: tree changes, CVE lifecycles and path fates.

A tree "at time t" is resolved just after t, so it sees every version
released at or before t (to the millisecond).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Any, Iterator, Optional

from .graph import DVGraph, PkgId, VerNode
from .policy import DEFAULT_POLICY, SelectionPolicy
from .resolver import SCHEMA_VERSION, DependencyTree, RootSpec, compare_trees, resolve, root_node
from .semver import Kind, parse_constraint
from .timeutil import format_time, just_after
from .vulnpath import DEFAULT_CAP, VulnerablePath, find_vulnerable_paths, find_vulnerable_points

MODES = ("every_dtc", "monthly_snapshots")


def tree_at(
    root: RootSpec, graph: DVGraph, when: datetime, policy: SelectionPolicy = DEFAULT_POLICY
) -> DependencyTree:
    return resolve(root, graph, policy.at(just_after(when)))


@dataclass(frozen=True)
class DtcEvent:
    time: datetime
    triggers: tuple[VerNode, ...]
    tree_before: DependencyTree
    tree_after: DependencyTree

    @property
    def trigger(self) -> VerNode:
        return self.triggers[0]

    def to_dict(self) -> dict[str, Any]:
        diff = compare_trees(self.tree_before, self.tree_after)
        return {
            "time": format_time(self.time),
            "triggers": [str(n.id) for n in self.triggers],
            "added": [str(p) for p in diff.only_right],
            "removed": [str(p) for p in diff.only_left],
        }


def _releases(root: VerNode, graph: DVGraph, policy: SelectionPolicy) -> dict[datetime, list[VerNode]]:
    """Release events across every library reachable from the root's constraints."""
    by_time: dict[datetime, list[VerNode]] = {}
    for name in sorted(graph.closure(root, policy.dep_types)):
        lib = graph.libs.get(name)
        if lib is None:
            continue
        for node in lib.sorted_versions():
            if node.release_time is not None:
                by_time.setdefault(node.release_time, []).append(node)
    return by_time


def _links_in(tree: DependencyTree, root: VerNode, graph: DVGraph, policy: SelectionPolicy):
    links = []
    for pid in tree.versions:
        node = root if pid == root.id else graph.node(pid)
        links.extend(e for e in node.links(policy.dep_types) if e.valid)
    return links


def _may_change(released: list[VerNode], links, graph: DVGraph) -> bool:
    # a release can only alter a decision whose constraint it satisfies
    for node in released:
        for link in links:
            if link.library == node.lib and link.constraint.kind not in (Kind.GIT, Kind.REMOTE, Kind.LOCAL):
                if graph.matches(node, link.constraint):
                    return True
    return False


def next_dtc(
    root: RootSpec,
    graph: DVGraph,
    after: datetime,
    policy: SelectionPolicy = DEFAULT_POLICY,
    *,
    until: Optional[datetime] = None,
    prefilter: bool = True,
    base: Optional[DependencyTree] = None,
) -> Optional[DtcEvent]:
    """The first release after ``after`` (and not after ``until``) that changes the tree."""
    node = root_node(root, graph)
    before = base if base is not None else tree_at(node, graph, after, policy)
    links = _links_in(before, node, graph, policy) if prefilter else None
    events = _releases(node, graph, policy)
    for t in sorted(events):
        if t <= after:
            continue
        if until is not None and t > until:
            break
        if prefilter and not _may_change(events[t], links, graph):
            continue
        now = tree_at(node, graph, t, policy)
        if now != before:
            return DtcEvent(t, tuple(events[t]), before, now)
    return None


def _month_starts(start: datetime, end: datetime) -> Iterator[datetime]:
    start = start.astimezone(timezone.utc)
    y, m = start.year, start.month
    while True:
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)
        boundary = datetime(y, m, 1, tzinfo=timezone.utc)
        if boundary > end:
            return
        yield boundary


def timeline(
    root: RootSpec,
    graph: DVGraph,
    start: datetime,
    end: datetime,
    mode: str = "every_dtc",
    policy: SelectionPolicy = DEFAULT_POLICY,
    *,
    prefilter: bool = True,
) -> list[tuple[datetime, DependencyTree]]:
    """Trees over ``[start, end]``.

    ``every_dtc`` yields the tree at ``start`` followed by one entry per
    change.  ``monthly_snapshots`` yields the tree at the end of each month
    that closes inside the window, stamped with the first instant of the
    following month.
    """
    if start >= end:
        raise ValueError("timeline start must be before its end")
    if mode not in MODES:
        raise ValueError(f"unknown timeline mode {mode!r}")
    node = root_node(root, graph)
    if mode == "monthly_snapshots":
        return [(b, resolve(node, graph, policy.at(b))) for b in _month_starts(start, end)]
    tree = tree_at(node, graph, start, policy)
    out = [(start, tree)]
    t = start
    while True:
        ev = next_dtc(node, graph, t, policy, until=end, prefilter=prefilter, base=tree)
        if ev is None:
            return out
        t, tree = ev.time, ev.tree_after
        out.append((t, tree))


def dtc_events(
    root: RootSpec,
    graph: DVGraph,
    start: datetime,
    end: datetime,
    policy: SelectionPolicy = DEFAULT_POLICY,
) -> list[DtcEvent]:
    node = root_node(root, graph)
    events = []
    tree = tree_at(node, graph, start, policy)
    t = start
    while True:
        ev = next_dtc(node, graph, t, policy, until=end, base=tree)
        if ev is None:
            return events
        events.append(ev)
        t, tree = ev.time, ev.tree_after


# ---------------------------------------------------------------- lifecycles


@dataclass(frozen=True)
class CveLifecycle:
    cve: str
    introduced_at: datetime
    eliminated_at: Optional[datetime]
    publish_time: Optional[datetime]
    # end of the CVE's final presence interval, when it is gone by the window end
    last_eliminated_at: Optional[datetime] = None
    interval: int = 0

    @property
    def living_time(self) -> Optional[timedelta]:
        if self.eliminated_at is None:
            return None
        return self.eliminated_at - self.introduced_at

    @property
    def introduced_before_publish(self) -> Optional[bool]:
        if self.publish_time is None:
            return None
        return self.introduced_at < self.publish_time

    @property
    def eliminated_before_publish(self) -> Optional[bool]:
        if self.publish_time is None or self.eliminated_at is None:
            return None
        return self.eliminated_at < self.publish_time

    def to_dict(self) -> dict[str, Any]:
        lt = self.living_time
        return {
            "cve": self.cve,
            "interval": self.interval,
            "introduced_at": format_time(self.introduced_at),
            "eliminated_at": format_time(self.eliminated_at),
            "last_eliminated_at": format_time(self.last_eliminated_at),
            "living_time_seconds": None if lt is None else lt.total_seconds(),
            "publish_time": format_time(self.publish_time),
            "introduced_before_publish": self.introduced_before_publish,
            "eliminated_before_publish": self.eliminated_before_publish,
        }


def _cves_in(tree: DependencyTree, graph: DVGraph) -> set[str]:
    out: set[str] = set()
    for pid in tree.versions:
        out |= graph.vulnerabilities_of(pid)
    return out


def lifecycles_from(entries: list[tuple[datetime, DependencyTree]], graph: DVGraph) -> list[CveLifecycle]:
    """One record per contiguous presence interval of each CVE."""
    present = [(t, _cves_in(tree, graph)) for t, tree in entries]
    records: list[CveLifecycle] = []
    for cve in sorted(set().union(*(c for _, c in present)) if present else ()):
        vul = graph.vulns.get(cve)
        publish = vul.publish_time if vul else None
        spans: list[tuple[datetime, Optional[datetime]]] = []
        start: Optional[datetime] = None
        for t, cves in present:
            if cve in cves and start is None:
                start = t
            elif cve not in cves and start is not None:
                spans.append((start, t))
                start = None
        if start is not None:
            spans.append((start, None))
        last = spans[-1][1]
        for i, (a, b) in enumerate(spans):
            records.append(CveLifecycle(cve, a, b, publish, last, i))
    return records


def cve_lifecycle(
    root: RootSpec,
    graph: DVGraph,
    start: datetime,
    end: datetime,
    policy: SelectionPolicy = DEFAULT_POLICY,
) -> list[CveLifecycle]:
    return lifecycles_from(timeline(root, graph, start, end, "every_dtc", policy), graph)


def lifecycles_csv(records: list[CveLifecycle]) -> str:
    buf = io.StringIO()
    fields = [
        "cve",
        "interval",
        "introduced_at",
        "eliminated_at",
        "living_time_seconds",
        "publish_time",
        "introduced_before_publish",
        "eliminated_before_publish",
        "last_eliminated_at",
    ]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in records:
        row = r.to_dict()
        w.writerow({k: "" if row[k] is None else row[k] for k in fields})
    return buf.getvalue()


# ---------------------------------------------------------------- path fates


@dataclass(frozen=True)
class PathFate:
    path: VulnerablePath
    fate: str  # "Removed" | "NotRemoved"
    first_seen: datetime
    last_seen: datetime
    vulnerable_latest_version: bool
    fixed_version_constraints: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "path": self.path.to_dict(),
            "fate": self.fate,
            "first_seen": format_time(self.first_seen),
            "last_seen": format_time(self.last_seen),
            "features": {
                "vulnerable_latest_version": self.vulnerable_latest_version,
                "fixed_version_constraints": self.fixed_version_constraints,
            },
        }


def _fixed_count(path: VulnerablePath) -> int:
    n = 0
    for _, _, raw in path.edges:
        try:
            if parse_constraint(raw).is_fixed_version:
                n += 1
        except ValueError:
            pass
    return n


def _latest_is_vulnerable(path: VulnerablePath, graph: DVGraph, policy: SelectionPolicy) -> bool:
    _, point, raw = path.edges[-1]
    try:
        c = parse_constraint(raw)
    except ValueError:
        return False
    pool = [n for n in graph.satisfying(point.name, c) if policy.admits(n)]
    return bool(pool) and graph.is_affected(pool[-1].id)


def classify_paths(
    root: RootSpec,
    graph: DVGraph,
    start: datetime,
    end: datetime,
    policy: SelectionPolicy = DEFAULT_POLICY,
    *,
    cap: Optional[int] = DEFAULT_CAP,
) -> list[PathFate]:
    if start >= end:
        return []
    entries = timeline(root, graph, start, end, "every_dtc", policy)
    seen: dict[tuple[PkgId, ...], list] = {}
    final: set[tuple[PkgId, ...]] = set()
    for i, (t, tree) in enumerate(entries):
        paths, _ = find_vulnerable_paths(tree, find_vulnerable_points(tree, graph), cap)
        for p in paths:
            key = p.nodes
            if key not in seen:
                seen[key] = [p, t, t]
            else:
                seen[key][2] = t
            if i == len(entries) - 1:
                final.add(key)
    at_end = policy.at(just_after(end))
    out = []
    for key in sorted(seen):
        p, first, last = seen[key]
        out.append(
            PathFate(
                path=p,
                fate="NotRemoved" if key in final else "Removed",
                first_seen=first,
                last_seen=last,
                vulnerable_latest_version=_latest_is_vulnerable(p, graph, at_end),
                fixed_version_constraints=_fixed_count(p),
            )
        )
    return out


def timeline_report(entries: list[tuple[datetime, DependencyTree]]) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "entries": [{"time": format_time(t), "tree": tree.to_dict()} for t, tree in entries],
    }
