"""Dependency resolution, vulnerability propagation and remediation for npm-style registries."""

from .errors import (
    BudgetInvalid,
    CycleBudgetExceeded,
    DepVulnError,
    InvalidConstraint,
    InvalidRange,
    MalformedDocument,
    MalformedVersion,
    MismatchedRoots,
    UnknownLibrary,
    Unresolvable,
    UnresolvableDependency,
    UnsupportedKind,
)
from .evolution import (
    CveLifecycle,
    DtcEvent,
    PathFate,
    classify_paths,
    cve_lifecycle,
    dtc_events,
    next_dtc,
    timeline,
    tree_at,
)
from .graph import Advisory, DVGraph, IngestReport, PkgId
from .policy import DEFAULT_POLICY, SelectionPolicy
from .remediation import (
    RemediationResult,
    compare_remediation,
    emit_lockfile,
    read_lockfile,
    remediate,
)
from .resolver import (
    DependencyTree,
    compare_trees,
    resolve,
    resolve_manifest,
    resolve_reach,
)
from .semver import (
    ConstraintExpr,
    Kind,
    Version,
    max_satisfying,
    parse_constraint,
    parse_version,
    satisfies,
)
from .store import GraphStore
from .vulnpath import (
    VulnerablePath,
    VulnerablePoint,
    audit,
    find_vulnerable_paths,
    find_vulnerable_points,
    path_metrics,
)

__version__ = "0.1.0"
