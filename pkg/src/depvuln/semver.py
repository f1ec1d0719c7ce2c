"""Version and dependency-constraint parsing with node-semver semantics.

Ranges are desugared into a disjunction of comparator conjunctions as soon as
they are parsed (tilde, caret, hyphen and x-ranges never survive past
``parse_constraint``).  Tag, git, remote and local-path constraints are kept
as first-class parse results but cannot be tested for satisfaction here.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache, total_ordering
from typing import Iterable, Optional, Union

from .errors import InvalidConstraint, MalformedVersion, UnsupportedKind

Identifier = Union[int, str]

_IDENT = r"[0-9A-Za-z-]+"
_DOTTED = rf"{_IDENT}(?:\.{_IDENT})*"
_STRICT_RE = re.compile(
    rf"^v?(\d+)\.(\d+)\.(\d+)(?:-({_DOTTED}))?(?:\+({_DOTTED}))?$"
)
_LOOSE_RE = re.compile(
    rf"^[v=\s]*(\d+)\.(\d+)\.(\d+)(?:-?({_DOTTED}))?(?:\+({_DOTTED}))?$"
)


def _identifiers(text: Optional[str], strict: bool) -> tuple[Identifier, ...]:
    if not text:
        return ()
    out: list[Identifier] = []
    for part in text.split("."):
        if part.isdigit():
            if strict and len(part) > 1 and part[0] == "0":
                raise MalformedVersion(f"numeric identifier with leading zero: {part!r}")
            out.append(int(part))
        else:
            out.append(part)
    return tuple(out)


@total_ordering
@dataclass(frozen=True, eq=False)
class Version:
    major: int
    minor: int
    patch: int
    prerelease: tuple[Identifier, ...] = ()
    build: tuple[str, ...] = ()

    @property
    def key(self) -> tuple:
        # A release sorts above every prerelease of the same triple; numeric
        # identifiers sort below alphanumeric ones.
        if not self.prerelease:
            pre: tuple = (1,)
        else:
            pre = (0,) + tuple(
                (0, p, "") if isinstance(p, int) else (1, 0, p) for p in self.prerelease
            )
        return (self.major, self.minor, self.patch, pre)

    @property
    def triple(self) -> tuple[int, int, int]:
        return (self.major, self.minor, self.patch)

    @property
    def is_prerelease(self) -> bool:
        return bool(self.prerelease)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Version):
            return NotImplemented
        return self.key == other.key

    def __lt__(self, other: "Version") -> bool:
        if not isinstance(other, Version):
            return NotImplemented
        return self.key < other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __str__(self) -> str:
        text = f"{self.major}.{self.minor}.{self.patch}"
        if self.prerelease:
            text += "-" + ".".join(str(p) for p in self.prerelease)
        if self.build:
            text += "+" + ".".join(self.build)
        return text

    def __repr__(self) -> str:
        return f"Version({str(self)!r})"

    def release_only(self) -> "Version":
        return Version(self.major, self.minor, self.patch)


@lru_cache(maxsize=65536)
def parse_version(text: str, strict: bool = False) -> Version:
    """Parse ``MAJOR.MINOR.PATCH[-pre][+build]``.

    Surrounding whitespace and a leading ``v`` are always tolerated.  Loose
    mode (the default) also accepts ``=`` prefixes, leading zeros and a
    prerelease without its hyphen, the way registry data is actually written.
    """
    if not isinstance(text, str):
        raise MalformedVersion(f"not a version string: {text!r}")
    s = text.strip()
    m = (_STRICT_RE if strict else _LOOSE_RE).match(s)
    # a dangling hyphen would otherwise parse as a "-" prerelease identifier
    if m is None or s.split("+", 1)[0].endswith("-"):
        raise MalformedVersion(f"invalid version: {text!r}")
    major, minor, patch, pre, build = m.groups()
    if strict:
        for num in (major, minor, patch):
            if len(num) > 1 and num[0] == "0":
                raise MalformedVersion(f"leading zero in {text!r}")
    return Version(
        int(major),
        int(minor),
        int(patch),
        _identifiers(pre, strict),
        tuple(build.split(".")) if build else (),
    )


def sort_versions(versions: Iterable[Version]) -> list[Version]:
    return sorted(versions)


OPERATORS = ("<", "<=", ">", ">=", "=")


@dataclass(frozen=True)
class Comparator:
    op: str
    version: Version

    def test(self, v: Version) -> bool:
        if self.op == "=":
            return v == self.version
        if self.op == "<":
            return v < self.version
        if self.op == "<=":
            return v <= self.version
        if self.op == ">":
            return v > self.version
        return v >= self.version

    def __str__(self) -> str:
        return f"{self.op}{_no_build(self.version)}"


def _no_build(v: Version) -> Version:
    return Version(v.major, v.minor, v.patch, v.prerelease)


_ZERO = Version(0, 0, 0)
ANY_SET: tuple[Comparator, ...] = (Comparator(">=", _ZERO),)
NONE_SET: tuple[Comparator, ...] = (Comparator("<", Version(0, 0, 0, (0,))),)


class Kind(str, Enum):
    RANGE = "range"
    EXACT = "version"
    TAG = "tag"
    GIT = "git"
    REMOTE = "remote"
    LOCAL = "local"
    ANY = "any"


SATISFIABLE_KINDS = frozenset({Kind.RANGE, Kind.EXACT, Kind.ANY})


@dataclass(frozen=True)
class ConstraintExpr:
    kind: Kind
    raw: str
    sets: tuple[tuple[Comparator, ...], ...] = ()
    tag: Optional[str] = None

    @property
    def is_satisfiable_kind(self) -> bool:
        return self.kind in SATISFIABLE_KINDS

    @property
    def is_fixed_version(self) -> bool:
        return self.kind is Kind.EXACT

    def desugared(self) -> str:
        if not self.is_satisfiable_kind:
            return self.raw
        return " || ".join(" ".join(str(c) for c in s) for s in self.sets)

    def __str__(self) -> str:
        return self.raw


# ---------------------------------------------------------------- range grammar

_XR = r"[0-9]+|[xX*]"
_TOKEN_RE = re.compile(
    rf"^(<=|>=|<|>|=|~>|~|\^)?[v=\s]*({_XR})(?:\.({_XR})(?:\.({_XR})"
    rf"(?:-?({_DOTTED}))?(?:\+({_DOTTED}))?)?)?$"
)
_HYPHEN_RE = re.compile(r"^\s*(\S+)\s+-\s+(\S+)\s*$")
_OP_SPACE_RE = re.compile(r"(<=|>=|<|>|=|~>|~|\^)\s+")


@dataclass
class _Partial:
    major: Optional[int]
    minor: Optional[int]
    patch: Optional[int]
    pre: tuple[Identifier, ...]

    @property
    def x_major(self) -> bool:
        return self.major is None

    @property
    def x_minor(self) -> bool:
        return self.x_major or self.minor is None

    @property
    def x_patch(self) -> bool:
        return self.x_minor or self.patch is None


def _num(part: Optional[str]) -> Optional[int]:
    if part is None or part in ("x", "X", "*"):
        return None
    return int(part)


def _parse_partial(text: str, strict: bool) -> tuple[str, _Partial]:
    m = _TOKEN_RE.match(text)
    if m is None:
        raise InvalidConstraint(f"invalid comparator: {text!r}")
    op, major, minor, patch, pre, _build = m.groups()
    partial = _Partial(_num(major), _num(minor), _num(patch), _identifiers(pre, False))
    if strict and partial.x_patch and text.strip() not in ("*", "x", "X"):
        raise InvalidConstraint(f"partial version not allowed in strict mode: {text!r}")
    if pre and partial.x_patch:
        raise InvalidConstraint(f"prerelease on partial version: {text!r}")
    return op or "", partial


def _v(major: int, minor: int, patch: int, pre: tuple[Identifier, ...] = ()) -> Version:
    return Version(major, minor, patch, pre)


def _below(major: int, minor: int, patch: int) -> Comparator:
    # Exclusive upper bounds carry "-0" so no prerelease of the bound's own
    # triple can slip through when another comparator opens the gate.
    return Comparator("<", Version(major, minor, patch, (0,)))


def _tilde(p: _Partial) -> tuple[Comparator, ...]:
    if p.x_major:
        return ANY_SET
    assert p.major is not None
    if p.x_minor:
        return (Comparator(">=", _v(p.major, 0, 0)), _below(p.major + 1, 0, 0))
    assert p.minor is not None
    if p.x_patch:
        return (
            Comparator(">=", _v(p.major, p.minor, 0)),
            _below(p.major, p.minor + 1, 0),
        )
    assert p.patch is not None
    return (
        Comparator(">=", _v(p.major, p.minor, p.patch, p.pre)),
        _below(p.major, p.minor + 1, 0),
    )


def _caret(p: _Partial) -> tuple[Comparator, ...]:
    if p.x_major:
        return ANY_SET
    assert p.major is not None
    if p.x_minor:
        return (Comparator(">=", _v(p.major, 0, 0)), _below(p.major + 1, 0, 0))
    assert p.minor is not None
    if p.x_patch:
        lo = _v(p.major, p.minor, 0)
        hi = _below(p.major + 1, 0, 0) if p.major else _below(0, p.minor + 1, 0)
        return (Comparator(">=", lo), hi)
    assert p.patch is not None
    lo = _v(p.major, p.minor, p.patch, p.pre)
    if p.major:
        hi = _below(p.major + 1, 0, 0)
    elif p.minor:
        hi = _below(0, p.minor + 1, 0)
    else:
        hi = _below(0, 0, p.patch + 1)
    return (Comparator(">=", lo), hi)


def _xrange(op: str, p: _Partial) -> tuple[Comparator, ...]:
    if p.x_major:
        return NONE_SET if op in ("<", ">") else ANY_SET
    assert p.major is not None
    if not p.x_patch:
        assert p.minor is not None and p.patch is not None
        return (Comparator(op or "=", _v(p.major, p.minor, p.patch, p.pre)),)
    if op in ("", "="):
        if p.x_minor:
            return (Comparator(">=", _v(p.major, 0, 0)), _below(p.major + 1, 0, 0))
        assert p.minor is not None
        return (
            Comparator(">=", _v(p.major, p.minor, 0)),
            _below(p.major, p.minor + 1, 0),
        )
    major, minor = p.major, 0 if p.minor is None else p.minor
    if op == ">":
        # >1 means >=2.0.0, >1.2 means >=1.3.0
        if p.x_minor:
            return (Comparator(">=", _v(major + 1, 0, 0)),)
        return (Comparator(">=", _v(major, minor + 1, 0)),)
    if op == "<=":
        if p.x_minor:
            return (_below(major + 1, 0, 0),)
        return (_below(major, minor + 1, 0),)
    if op == "<":
        return (_below(major, minor, 0),)
    return (Comparator(op, _v(major, minor, 0)),)


def _hyphen(lo_text: str, hi_text: str, strict: bool) -> tuple[Comparator, ...]:
    lo_op, lo = _parse_partial(lo_text, strict)
    hi_op, hi = _parse_partial(hi_text, strict)
    if lo_op or hi_op:
        raise InvalidConstraint(f"operator inside hyphen range: {lo_text} - {hi_text}")
    out: list[Comparator] = []
    if not lo.x_major:
        assert lo.major is not None
        out.append(
            Comparator(
                ">=",
                _v(lo.major, lo.minor or 0, lo.patch or 0, () if lo.x_patch else lo.pre),
            )
        )
    if not hi.x_major:
        assert hi.major is not None
        if hi.x_minor:
            out.append(_below(hi.major + 1, 0, 0))
        elif hi.x_patch:
            assert hi.minor is not None
            out.append(_below(hi.major, hi.minor + 1, 0))
        else:
            assert hi.minor is not None and hi.patch is not None
            out.append(Comparator("<=", _v(hi.major, hi.minor, hi.patch, hi.pre)))
    return tuple(out) or ANY_SET


def _parse_set(text: str, strict: bool) -> tuple[Comparator, ...]:
    text = text.strip()
    if not text:
        return ANY_SET
    hm = _HYPHEN_RE.match(text)
    if hm:
        return _hyphen(hm.group(1), hm.group(2), strict)
    text = _OP_SPACE_RE.sub(r"\1", text)
    out: list[Comparator] = []
    for token in text.split():
        op, partial = _parse_partial(token, strict)
        if op in ("~", "~>"):
            out.extend(_tilde(partial))
        elif op == "^":
            out.extend(_caret(partial))
        else:
            out.extend(_xrange(op, partial))
    return tuple(out)


def parse_range(text: str, strict: bool = False) -> tuple[tuple[Comparator, ...], ...]:
    return tuple(_parse_set(part, strict) for part in text.split("||"))


# ------------------------------------------------------------- classification

_GIT_PREFIXES = ("git+", "git://", "git@", "github:", "gitlab:", "bitbucket:", "gist:")
_GIT_HOSTS = ("github.com", "gitlab.com", "bitbucket.org", "gist.github.com")
_LOCAL_PREFIXES = ("file:", "./", "../", "/", "~/", ".\\", "..\\")
_SHORTHAND_RE = re.compile(r"^[A-Za-z0-9][\w.-]*/[\w.-]+(#.*)?$")
_TAG_RE = re.compile(r"^[A-Za-z][A-Za-z0-9._-]*$")
_EXACT_RE = re.compile(rf"^[=v\s]*\d+\.\d+\.\d+(?:-?{_DOTTED})?(?:\+{_DOTTED})?$")


def _is_git_url(s: str) -> bool:
    if s.startswith(_GIT_PREFIXES):
        return True
    if s.startswith(("http://", "https://")):
        url = s.split("#", 1)[0]
        host = url.split("://", 1)[1].split("/", 1)[0].lower()
        return url.endswith(".git") or host in _GIT_HOSTS
    return bool(_SHORTHAND_RE.match(s))


@lru_cache(maxsize=65536)
def parse_constraint(text: str, strict: bool = False) -> ConstraintExpr:
    """Classify and parse a dependency constraint string.

    >>> parse_constraint("~1.1.0").desugared()
    '>=1.1.0 <1.2.0-0'
    """
    if not isinstance(text, str):
        raise InvalidConstraint(f"constraint must be a string, got {type(text).__name__}")
    raw = text
    s = text.strip()
    if s in ("", "*", "x", "X"):
        return ConstraintExpr(Kind.ANY, raw, (ANY_SET,))
    if s.startswith("npm:"):
        raise InvalidConstraint(f"alias constraints are not supported: {raw!r}")
    if s.startswith(_LOCAL_PREFIXES) or re.match(r"^[A-Za-z]:[\\/]", s):
        return ConstraintExpr(Kind.LOCAL, raw)
    if _is_git_url(s):
        return ConstraintExpr(Kind.GIT, raw)
    if s.startswith(("http://", "https://")):
        return ConstraintExpr(Kind.REMOTE, raw)
    try:
        sets = parse_range(s, strict)
    except InvalidConstraint:
        if _TAG_RE.match(s) and not re.match(r"^v\d", s):
            return ConstraintExpr(Kind.TAG, raw, tag=s)
        raise InvalidConstraint(f"invalid dependency constraint: {raw!r}") from None
    except MalformedVersion as exc:
        raise InvalidConstraint(f"invalid dependency constraint: {raw!r}") from exc
    if _EXACT_RE.match(s) and len(sets) == 1 and len(sets[0]) == 1 and sets[0][0].op == "=":
        return ConstraintExpr(Kind.EXACT, raw, sets)
    return ConstraintExpr(Kind.RANGE, raw, sets)


def _coerce_constraint(c: Union[ConstraintExpr, str]) -> ConstraintExpr:
    return parse_constraint(c) if isinstance(c, str) else c


def _coerce_version(v: Union[Version, str]) -> Version:
    return parse_version(v) if isinstance(v, str) else v


def _set_admits(v: Version, comparators: tuple[Comparator, ...]) -> bool:
    if not all(c.test(v) for c in comparators):
        return False
    if not v.prerelease:
        return True
    # Prereleases only match when the set opts into that exact triple.
    return any(c.version.prerelease and c.version.triple == v.triple for c in comparators)


def satisfies(v: Union[Version, str], c: Union[ConstraintExpr, str]) -> bool:
    c = _coerce_constraint(c)
    if not c.is_satisfiable_kind:
        raise UnsupportedKind(f"cannot test satisfaction of a {c.kind.value} constraint: {c.raw!r}")
    v = _coerce_version(v)
    return any(_set_admits(v, s) for s in c.sets)


def max_satisfying(
    candidates: Iterable[Union[Version, str]], c: Union[ConstraintExpr, str]
) -> Optional[Version]:
    c = _coerce_constraint(c)
    best: Optional[Version] = None
    for cand in candidates:
        v = _coerce_version(cand)
        if satisfies(v, c) and (best is None or v > best):
            best = v
    return best


__all__ = [
    "Comparator",
    "ConstraintExpr",
    "Kind",
    "Version",
    "max_satisfying",
    "parse_constraint",
    "parse_range",
    "parse_version",
    "satisfies",
    "sort_versions",
]
