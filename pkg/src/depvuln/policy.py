from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import TYPE_CHECKING, Iterable, Optional

from .timeutil import parse_time

if TYPE_CHECKING:
    from .graph import PkgId, VerNode
    from .semver import Version


@dataclass(frozen=True)
class SelectionPolicy:
    """How a version is picked among the satisfying candidates of one link.

    Default order: the ``latest`` dist-tag target when it satisfies, then the
    highest non-deprecated version, then the highest deprecated one.
    """

    prefer_latest_tag: bool = True
    deprioritize_deprecated: bool = True
    as_of: Optional[datetime] = None
    forbidden_versions: frozenset["PkgId"] = field(default_factory=frozenset)
    dep_types: frozenset[str] = frozenset({"prod"})

    def __post_init__(self) -> None:
        # naive cutoffs are taken as UTC, like ingested timestamps
        if self.as_of is not None:
            object.__setattr__(self, "as_of", parse_time(self.as_of))

    def at(self, as_of: Optional[datetime]) -> "SelectionPolicy":
        return replace(self, as_of=as_of)

    def released(self, node: "VerNode") -> bool:
        if self.as_of is None:
            return True
        return node.release_time is not None and node.release_time < self.as_of

    def admits(self, node: "VerNode") -> bool:
        return self.released(node) and node.id not in self.forbidden_versions

    def order(self, candidates: Iterable["VerNode"], latest: Optional["Version"] = None) -> list["VerNode"]:
        """Return candidates most-preferred first."""
        ranked = sorted(candidates, key=lambda n: n.version, reverse=True)
        head: list["VerNode"] = []
        if self.prefer_latest_tag and latest is not None:
            head = [n for n in ranked if n.version == latest]
            ranked = [n for n in ranked if n.version != latest]
        if self.deprioritize_deprecated:
            ranked = [n for n in ranked if not n.deprecated] + [n for n in ranked if n.deprecated]
        return head[:1] + ranked

    def choose(self, candidates: Iterable["VerNode"], latest: Optional["Version"] = None) -> Optional["VerNode"]:
        ordered = self.order(candidates, latest)
        return ordered[0] if ordered else None


DEFAULT_POLICY = SelectionPolicy()
