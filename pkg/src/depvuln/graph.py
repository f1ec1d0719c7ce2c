"""Dependency-vulnerability knowledge graph.

Three node kinds (libraries, versions, vulnerabilities) and eight edge kinds:
``has``, ``upper``, ``lower`` inside a library; ``depends``, ``default``,
``libdeps`` across libraries; ``affects`` and ``libaffects`` for advisories.
``has``/``upper``/``lower``/``libdeps``/``libaffects`` are derived from the
stored records on demand so they can never drift out of sync.
"""

from __future__ import annotations

import logging
import threading
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Iterable, Iterator, Mapping, Optional

from .errors import (
    InvalidConstraint,
    InvalidRange,
    MalformedDocument,
    MalformedVersion,
    UnknownLibrary,
    Unresolvable,
)
from .policy import DEFAULT_POLICY, SelectionPolicy
from .semver import ConstraintExpr, Kind, Version, parse_constraint, parse_version, satisfies
from .timeutil import format_time, parse_time

log = logging.getLogger(__name__)

NODE_KINDS = ("Lib", "Ver", "Vul")
EDGE_KINDS = ("has", "upper", "lower", "depends", "default", "libdeps", "affects", "libaffects")

DEP_FIELDS = {
    "dependencies": "prod",
    "devDependencies": "dev",
    "peerDependencies": "peer",
    "optionalDependencies": "optional",
}


@dataclass(frozen=True, order=True)
class PkgId:
    name: str
    version: Version

    def __str__(self) -> str:
        return f"{self.name}@{self.version}"

    @classmethod
    def parse(cls, text: str) -> "PkgId":
        """Parse ``name@version``; scoped names (``@scope/pkg@1.0.0``) work."""
        at = text.rfind("@")
        if at <= 0:
            raise ValueError(f"expected name@version, got {text!r}")
        return cls(text[:at], parse_version(text[at + 1 :]))


@dataclass(frozen=True)
class DependsEdge:
    src: PkgId
    library: str
    raw: str
    constraint: Optional[ConstraintExpr]
    dep_type: str = "prod"
    error: Optional[str] = None

    @property
    def key(self) -> tuple[PkgId, str, str]:
        return (self.src, self.library, self.dep_type)

    @property
    def valid(self) -> bool:
        return self.constraint is not None


@dataclass(eq=False)
class VerNode:
    lib: str
    version: Version
    raw_version: str
    release_time: Optional[datetime] = None
    deprecated: bool = False
    depends: tuple[DependsEdge, ...] = ()
    integrity: Optional[str] = None
    resolved: Optional[str] = None

    @property
    def id(self) -> PkgId:
        return PkgId(self.lib, self.version)

    @property
    def raw_dependencies(self) -> dict[str, str]:
        return {e.library: e.raw for e in self.depends if e.dep_type == "prod"}

    def links(self, dep_types: Iterable[str] = ("prod",)) -> list[DependsEdge]:
        """Dependency links to follow during resolution, alphabetical by library."""
        wanted = set(dep_types)
        return sorted((e for e in self.depends if e.dep_type in wanted), key=lambda e: e.library)

    def __repr__(self) -> str:
        return f"VerNode({self.id})"


@dataclass
class LibNode:
    name: str
    versions: dict[Version, VerNode] = field(default_factory=dict)
    dist_tags: dict[str, str] = field(default_factory=dict)

    def sorted_versions(self) -> list[VerNode]:
        return [self.versions[v] for v in sorted(self.versions)]

    def tagged(self, tag: str) -> Optional[VerNode]:
        raw = self.dist_tags.get(tag)
        if raw is None:
            return None
        try:
            return self.versions.get(parse_version(raw))
        except MalformedVersion:
            return None

    @property
    def latest(self) -> Optional[Version]:
        node = self.tagged("latest")
        return node.version if node else None


@dataclass
class VulNode:
    id: str
    publish_time: Optional[datetime]
    severity: Optional[str] = None


@dataclass(frozen=True)
class Advisory:
    id: str
    library: str
    affected_range: str
    publish_time: Optional[datetime] = None
    severity: Optional[str] = None

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Advisory":
        try:
            return cls(
                id=str(doc["id"]),
                library=str(doc["library"]),
                affected_range=str(doc["affected_range"]),
                publish_time=parse_time(doc.get("publish_time")),
                severity=doc.get("severity"),
            )
        except KeyError as exc:
            raise MalformedDocument(f"advisory missing field {exc.args[0]!r}") from None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "id": self.id,
            "library": self.library,
            "affected_range": self.affected_range,
            "publish_time": format_time(self.publish_time),
        }
        if self.severity is not None:
            out["severity"] = self.severity
        return out


@dataclass
class IngestReport:
    nodes_added: Counter = field(default_factory=Counter)
    edges_added: Counter = field(default_factory=Counter)
    rejected_constraints: list[dict[str, str]] = field(default_factory=list)
    rejected_versions: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def additions(self) -> int:
        return sum(self.nodes_added.values()) + sum(self.edges_added.values())

    @property
    def rejects(self) -> int:
        return len(self.rejected_constraints) + len(self.rejected_versions)

    def merge(self, other: "IngestReport") -> "IngestReport":
        self.nodes_added.update(other.nodes_added)
        self.edges_added.update(other.edges_added)
        self.rejected_constraints.extend(other.rejected_constraints)
        self.rejected_versions.extend(other.rejected_versions)
        self.notes.extend(other.notes)
        return self

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes_added": {k: self.nodes_added.get(k, 0) for k in NODE_KINDS},
            "edges_added": {k: self.edges_added.get(k, 0) for k in EDGE_KINDS},
            "rejected_constraints": list(self.rejected_constraints),
            "rejected_versions": list(self.rejected_versions),
            "notes": list(self.notes),
        }


def _is_deprecated(value: Any) -> bool:
    if isinstance(value, str):
        return bool(value.strip())
    return bool(value)


class DVGraph:
    """In-memory dependency-vulnerability graph.

    Mutations take an internal lock; queries never do, so they must not run
    concurrently with ingestion.
    """

    def __init__(self) -> None:
        self.libs: dict[str, LibNode] = {}
        self.vulns: dict[str, VulNode] = {}
        self.advisories: dict[tuple[str, str, str], Advisory] = {}
        self._affects: dict[str, set[PkgId]] = {}
        self._affected_by: dict[PkgId, set[str]] = {}
        self._defaults: dict[tuple[PkgId, str, str], PkgId] = {}
        # library name -> keys of depends edges pointing at it
        self._dependents: dict[str, set[tuple[PkgId, str, str]]] = {}
        self._lock = threading.RLock()

    def __getstate__(self) -> dict[str, Any]:
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state: dict[str, Any]) -> None:
        self.__dict__.update(state)
        self._lock = threading.RLock()

    # ------------------------------------------------------------ lookups

    def lib(self, name: str) -> LibNode:
        try:
            return self.libs[name]
        except KeyError:
            raise UnknownLibrary(f"unknown library: {name}") from None

    def node(self, pid: PkgId) -> VerNode:
        node = self.lib(pid.name).versions.get(pid.version)
        if node is None:
            raise UnknownLibrary(f"unknown version: {pid}")
        return node

    def find(self, spec: str) -> VerNode:
        return self.node(PkgId.parse(spec))

    def has_version(self, pid: PkgId) -> bool:
        lib = self.libs.get(pid.name)
        return lib is not None and pid.version in lib.versions

    def vulnerabilities_of(self, pid: PkgId) -> frozenset[str]:
        return frozenset(self._affected_by.get(pid, ()))

    def is_affected(self, pid: PkgId) -> bool:
        return bool(self._affected_by.get(pid))

    def affected_versions(self, vul_id: str) -> frozenset[PkgId]:
        return frozenset(self._affects.get(vul_id, ()))

    def depends_edge(self, key: tuple[PkgId, str, str]) -> DependsEdge:
        src, library, dep_type = key
        for e in self.node(src).depends:
            if e.library == library and e.dep_type == dep_type:
                return e
        raise KeyError(key)

    def default_of(self, edge: DependsEdge) -> Optional[PkgId]:
        return self._defaults.get(edge.key)

    def matches(self, node: VerNode, c: ConstraintExpr) -> bool:
        """True when ``node`` is an acceptable target for constraint ``c``."""
        if c.kind is Kind.TAG:
            lib = self.libs.get(node.lib)
            tagged = lib.tagged(c.tag or "") if lib else None
            return tagged is not None and tagged.version == node.version
        if not c.is_satisfiable_kind:
            return False
        return satisfies(node.version, c)

    def satisfying(self, library: str, c: ConstraintExpr) -> list[VerNode]:
        """All versions of ``library`` acceptable for ``c`` (no time filter), ascending."""
        lib = self.libs.get(library)
        if lib is None:
            return []
        if c.kind is Kind.TAG:
            tagged = lib.tagged(c.tag or "")
            return [tagged] if tagged else []
        if not c.is_satisfiable_kind:
            return []
        return [n for n in lib.sorted_versions() if satisfies(n.version, c)]

    def candidates(
        self, library: str, c: ConstraintExpr, policy: SelectionPolicy = DEFAULT_POLICY
    ) -> list[VerNode]:
        """Admissible versions for a link, most-preferred first."""
        lib = self.libs.get(library)
        if lib is None:
            return []
        pool = [n for n in self.satisfying(library, c) if policy.admits(n)]
        return policy.order(pool, lib.latest)

    def resolve_link(
        self,
        library: str,
        c: ConstraintExpr | str,
        as_of: Optional[datetime] = None,
        policy: SelectionPolicy = DEFAULT_POLICY,
    ) -> VerNode:
        if isinstance(c, str):
            c = parse_constraint(c)
        if library not in self.libs:
            raise Unresolvable(f"unknown library {library!r}")
        if c.kind in (Kind.GIT, Kind.REMOTE, Kind.LOCAL):
            raise Unresolvable(f"{c.kind.value} constraints are never resolved offline: {c.raw!r}")
        if as_of is not None:
            policy = policy.at(as_of)
        ranked = self.candidates(library, c, policy)
        if not ranked:
            raise Unresolvable(f"no version of {library} satisfies {c.raw!r}")
        return ranked[0]

    def make_root(self, name: str, version: str, dependencies: Mapping[str, str]) -> VerNode:
        """A synthetic version node for a user manifest (not stored in the graph)."""
        ver = parse_version(version)
        pid = PkgId(name, ver)
        edges = tuple(self._make_edge(pid, lib, raw, "prod") for lib, raw in dependencies.items())
        return VerNode(lib=name, version=ver, raw_version=version, depends=edges)

    # ------------------------------------------------------------ ingestion

    @staticmethod
    def _make_edge(src: PkgId, library: str, raw: Any, dep_type: str) -> DependsEdge:
        if not isinstance(raw, str):
            return DependsEdge(src, library, repr(raw), None, dep_type, "constraint is not a string")
        try:
            return DependsEdge(src, library, raw, parse_constraint(raw), dep_type)
        except InvalidConstraint as exc:
            return DependsEdge(src, library, raw, None, dep_type, str(exc))

    def _edge_snapshot(self, name: str) -> dict[str, set]:
        lib = self.libs.get(name)
        snap: dict[str, set] = {k: set() for k in EDGE_KINDS}
        if lib is None:
            return snap
        ordered = lib.sorted_versions()
        for node in ordered:
            snap["has"].add(node.id)
            for e in node.depends:
                snap["depends"].add((e.key, e.raw))
                snap["libdeps"].add(e.library)
        for lo, hi in zip(ordered, ordered[1:]):
            snap["upper"].add((lo.id, hi.id))
            snap["lower"].add((hi.id, lo.id))
        for node in ordered:
            for vul in self._affected_by.get(node.id, ()):
                snap["affects"].add((vul, node.id))
                snap["libaffects"].add(vul)
        return snap

    def ingest_packument(self, doc: Mapping[str, Any], *, recompute: bool = True) -> IngestReport:
        if not isinstance(doc, Mapping):
            raise MalformedDocument("packument must be a JSON object")
        name = doc.get("name")
        if not isinstance(name, str) or not name.strip():
            raise MalformedDocument("packument has no name")
        report = IngestReport()
        with self._lock:
            before = self._edge_snapshot(name)
            before_defaults = dict(self._defaults)
            lib = self.libs.get(name)
            if lib is None:
                lib = self.libs[name] = LibNode(name)
                report.nodes_added["Lib"] += 1
            tags = doc.get("dist-tags") or {}
            if isinstance(tags, Mapping):
                lib.dist_tags = {str(k): str(v) for k, v in tags.items()}
            times = doc.get("time") or {}
            versions = doc.get("versions") or {}
            if not isinstance(versions, Mapping):
                raise MalformedDocument(f"{name}: 'versions' must be an object")
            seen: set[Version] = set()
            for raw_version in sorted(versions, key=str):
                meta = versions[raw_version] or {}
                try:
                    ver = parse_version(raw_version)
                except MalformedVersion:
                    report.rejected_versions.append(f"{name}@{raw_version}")
                    continue
                if ver in seen:
                    report.notes.append(f"duplicate version entry {name}@{raw_version} ignored")
                    continue
                seen.add(ver)
                pid = PkgId(name, ver)
                edges: list[DependsEdge] = []
                for fld, dep_type in DEP_FIELDS.items():
                    deps = meta.get(fld) or {}
                    if not isinstance(deps, Mapping):
                        continue
                    for dep_lib, raw in deps.items():
                        edge = self._make_edge(pid, str(dep_lib), raw, dep_type)
                        if not edge.valid:
                            report.rejected_constraints.append(
                                {"src": str(pid), "library": edge.library, "constraint": edge.raw}
                            )
                        edges.append(edge)
                dist = meta.get("dist") or {}
                try:
                    released = parse_time(times.get(raw_version)) if isinstance(times, Mapping) else None
                except ValueError:
                    released = None
                    report.notes.append(f"unparseable release time for {pid}")
                if ver not in lib.versions:
                    report.nodes_added["Ver"] += 1
                old = lib.versions.get(ver)
                if old is not None:
                    for e in old.depends:
                        self._dependents.get(e.library, set()).discard(e.key)
                        self._defaults.pop(e.key, None)
                lib.versions[ver] = VerNode(
                    lib=name,
                    version=ver,
                    raw_version=str(raw_version),
                    release_time=released,
                    deprecated=_is_deprecated(meta.get("deprecated")),
                    depends=tuple(edges),
                    integrity=dist.get("integrity") if isinstance(dist, Mapping) else None,
                    resolved=dist.get("tarball") if isinstance(dist, Mapping) else None,
                )
                for e in edges:
                    self._dependents.setdefault(e.library, set()).add(e.key)
            for adv in self.advisories.values():
                if adv.library == name:
                    self._link_advisory(adv)
            after = self._edge_snapshot(name)
            for kind in EDGE_KINDS:
                report.edges_added[kind] += len(after[kind] - before[kind])
            if recompute:
                self.recompute_defaults({name})
                added = {k: v for k, v in self._defaults.items() if before_defaults.get(k) != v}
                report.edges_added["default"] += len(added)
            tag_edges = sum(
                1
                for n in lib.versions.values()
                for e in n.depends
                if e.valid and e.constraint.kind in (Kind.TAG, Kind.GIT, Kind.REMOTE, Kind.LOCAL)
            )
            if tag_edges:
                report.notes.append(
                    f"{name}: {tag_edges} tag/url/path constraint(s) have no default edge"
                )
        return report

    def _link_advisory(self, adv: Advisory) -> int:
        c = parse_constraint(adv.affected_range)
        lib = self.libs[adv.library]
        hits = self._affects.setdefault(adv.id, set())
        added = 0
        for node in lib.versions.values():
            if satisfies(node.version, c) and node.id not in hits:
                hits.add(node.id)
                self._affected_by.setdefault(node.id, set()).add(adv.id)
                added += 1
        return added

    def ingest_advisory(self, adv: Advisory | Mapping[str, Any]) -> IngestReport:
        if not isinstance(adv, Advisory):
            adv = Advisory.from_dict(adv)
        report = IngestReport()
        with self._lock:
            if adv.library not in self.libs:
                raise UnknownLibrary(f"advisory {adv.id} references unknown library {adv.library!r}")
            try:
                c = parse_constraint(adv.affected_range)
            except InvalidConstraint as exc:
                raise InvalidRange(f"advisory {adv.id}: {exc}") from None
            if not c.is_satisfiable_kind:
                raise InvalidRange(f"advisory {adv.id}: {adv.affected_range!r} is not a version range")
            vul = self.vulns.get(adv.id)
            if vul is None:
                self.vulns[adv.id] = VulNode(adv.id, adv.publish_time, adv.severity)
                report.nodes_added["Vul"] += 1
            else:
                # sources disagree on publish time: keep the earliest
                if adv.publish_time is not None and (
                    vul.publish_time is None or adv.publish_time < vul.publish_time
                ):
                    vul.publish_time = adv.publish_time
                if vul.severity is None and adv.severity is not None:
                    vul.severity = adv.severity
            key = (adv.id, adv.library, adv.affected_range)
            if key in self.advisories:
                msg = f"duplicate advisory {adv.id} for {adv.library}; ignored"
                log.warning(msg)
                report.notes.append(msg)
                return report
            libaffected_before = self._libaffects_for(adv.id)
            self.advisories[key] = adv
            report.edges_added["affects"] += self._link_advisory(adv)
            report.edges_added["libaffects"] += len(self._libaffects_for(adv.id) - libaffected_before)
        return report

    def _libaffects_for(self, vul_id: str) -> set[str]:
        return {pid.name for pid in self._affects.get(vul_id, ())}

    def recompute_defaults(self, scope: Optional[Iterable[str]] = None) -> int:
        """Point every in-scope depends edge at its highest satisfying version.

        ``scope`` names libraries; an edge is in scope when its source or
        target library is listed.  Returns the number of default edges that
        were added, retargeted or dropped.
        """
        with self._lock:
            if scope is None:
                keys = {e.key for lib in self.libs.values() for n in lib.versions.values() for e in n.depends}
            else:
                keys = set()
                for name in scope:
                    keys |= self._dependents.get(name, set())
                    lib = self.libs.get(name)
                    if lib is not None:
                        keys |= {e.key for n in lib.versions.values() for e in n.depends}
            changed = 0
            for key in keys:
                try:
                    edge = self.depends_edge(key)
                except (KeyError, UnknownLibrary):
                    self._defaults.pop(key, None)
                    continue
                target: Optional[PkgId] = None
                if edge.valid and edge.constraint.is_satisfiable_kind:
                    sat = self.satisfying(edge.library, edge.constraint)
                    if sat:
                        target = sat[-1].id
                old = self._defaults.get(key)
                if target is None:
                    if old is not None:
                        del self._defaults[key]
                        changed += 1
                elif old != target:
                    self._defaults[key] = target
                    changed += 1
            return changed

    # ------------------------------------------------------------ edges / stats

    def edges(self, kind: str) -> Iterator[tuple]:
        if kind not in EDGE_KINDS:
            raise ValueError(f"unknown edge kind {kind!r}")
        for lib in self.libs.values():
            ordered = lib.sorted_versions()
            if kind == "has":
                for n in ordered:
                    yield (lib.name, n.id)
            elif kind == "upper":
                for lo, hi in zip(ordered, ordered[1:]):
                    yield (lo.id, hi.id)
            elif kind == "lower":
                for lo, hi in zip(ordered, ordered[1:]):
                    yield (hi.id, lo.id)
            elif kind == "depends":
                for n in ordered:
                    for e in n.depends:
                        yield (n.id, e.library, e.raw, e.dep_type)
            elif kind == "default":
                for n in ordered:
                    for e in n.depends:
                        dst = self._defaults.get(e.key)
                        if dst is not None:
                            yield (n.id, dst, e.dep_type)
            elif kind == "libdeps":
                targets = sorted({e.library for n in ordered for e in n.depends})
                for t in targets:
                    yield (lib.name, t)
        if kind == "affects":
            for vul in sorted(self._affects):
                for pid in sorted(self._affects[vul]):
                    yield (vul, pid)
        elif kind == "libaffects":
            for vul in sorted(self._affects):
                for name in sorted(self._libaffects_for(vul)):
                    yield (vul, name)

    def stats(self) -> dict[str, dict[str, int]]:
        return {
            "nodes": {
                "Lib": len(self.libs),
                "Ver": sum(len(lib.versions) for lib in self.libs.values()),
                "Vul": len(self.vulns),
            },
            "edges": {kind: sum(1 for _ in self.edges(kind)) for kind in EDGE_KINDS},
        }

    def upper_chain(self, name: str) -> list[Version]:
        """Walk ``upper`` edges from the lowest version of ``name``."""
        upper = {src: dst for src, dst in self.edges("upper") if src.name == name}
        lib = self.lib(name)
        if not lib.versions:
            return []
        lowers = {dst for src, dst in upper.items()}
        start = [pid for pid in (n.id for n in lib.versions.values()) if pid not in lowers]
        chain = [start[0]]
        while chain[-1] in upper:
            chain.append(upper[chain[-1]])
        return [pid.version for pid in chain]

    def closure(self, root: VerNode, dep_types: Iterable[str] = ("prod",)) -> set[str]:
        """Libraries reachable from ``root`` through depends edges of any version."""
        wanted = set(dep_types)
        seen: set[str] = set()
        stack: list[str] = []
        for e in root.depends:
            if e.dep_type in wanted and e.library not in seen:
                seen.add(e.library)
                stack.append(e.library)
        while stack:
            lib = self.libs.get(stack.pop())
            if lib is None:
                continue
            for n in lib.versions.values():
                for e in n.depends:
                    if e.dep_type in wanted and e.library not in seen:
                        seen.add(e.library)
                        stack.append(e.library)
        return seen
