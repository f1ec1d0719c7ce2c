"""Independent reference implementations used as test oracles.

Nothing here imports from ``depvuln``: versions are plain tuples, ranges are
expanded by a separate table of node-semver rules, and the installer walk is
a direct, slow transcription over dicts.
"""

from __future__ import annotations

import re
from datetime import datetime, timedelta, timezone

# ---------------------------------------------------------------- versions

VERSION_RE = re.compile(r"^[v=\s]*(\d+)\.(\d+)\.(\d+)(?:-([0-9A-Za-z.-]+))?(?:\+[0-9A-Za-z.-]+)?\s*$")


def oparse(text):
    m = VERSION_RE.match(text)
    if not m:
        raise ValueError(text)
    pre = ()
    if m.group(4):
        pre = tuple(int(x) if x.isdigit() else x for x in m.group(4).split("."))
    return (int(m.group(1)), int(m.group(2)), int(m.group(3)), pre)


def _cmp_ident(a, b):
    a_num, b_num = isinstance(a, int), isinstance(b, int)
    if a_num and not b_num:
        return -1
    if b_num and not a_num:
        return 1
    return (a > b) - (a < b)


def ocmp(a, b):
    """Three-way comparison of parsed versions."""
    if a[:3] != b[:3]:
        return -1 if a[:3] < b[:3] else 1
    pa, pb = a[3], b[3]
    if not pa and not pb:
        return 0
    if not pa:
        return 1
    if not pb:
        return -1
    for x, y in zip(pa, pb):
        c = _cmp_ident(x, y)
        if c:
            return c
    return (len(pa) > len(pb)) - (len(pa) < len(pb))


# ---------------------------------------------------------------- ranges


def _partial(text):
    text = text.strip().lstrip("v=").strip()
    core, _, pre = text.partition("-")
    core = core.split("+")[0]
    parts = core.split(".") if core else ["*"]
    nums = []
    for p in parts[:3]:
        nums.append(None if p in ("x", "X", "*") else int(p))
    while len(nums) < 3:
        nums.append(None)
    # once a component is wild everything after it is too
    for i in range(3):
        if nums[i] is None:
            nums[i + 1 :] = [None] * (2 - i)
            break
    pre_t = tuple(int(x) if x.isdigit() else x for x in pre.split(".")) if pre else ()
    return nums, pre_t


def V(M, m, p, pre=()):
    return (M, m, p, tuple(pre))


ZERO = V(0, 0, 0)
NOTHING = [("<", V(0, 0, 0, (0,)))]
EVERYTHING = [(">=", ZERO)]


def _lt_bump(M, m=None, p=None):
    """``<`` the first prerelease of the given triple."""
    return ("<", V(M, m or 0, p or 0, (0,)))


def _expand(op, text):
    (M, m, p), pre = _partial(text)
    full = p is not None
    if op in ("", "="):
        if M is None:
            return list(EVERYTHING)
        if full:
            return [("=", V(M, m, p, pre))]
        if m is None:
            return [(">=", V(M, 0, 0)), _lt_bump(M + 1)]
        return [(">=", V(M, m, 0)), _lt_bump(M, m + 1)]
    if op in ("~", "~>"):
        if M is None:
            return list(EVERYTHING)
        if m is None:
            return [(">=", V(M, 0, 0)), _lt_bump(M + 1)]
        lo = V(M, m, p if full else 0, pre if full else ())
        return [(">=", lo), _lt_bump(M, m + 1)]
    if op == "^":
        if M is None:
            return list(EVERYTHING)
        lo = V(M, m or 0, p or 0, pre if full else ())
        if M > 0 or m is None:
            return [(">=", lo), _lt_bump(M + 1)]
        if m > 0 or p is None:
            return [(">=", lo), _lt_bump(0, m + 1)]
        return [(">=", lo), _lt_bump(0, 0, p + 1)]
    if op == ">":
        if M is None:
            return list(NOTHING)
        if full:
            return [(">", V(M, m, p, pre))]
        if m is None:
            return [(">=", V(M + 1, 0, 0))]
        return [(">=", V(M, m + 1, 0))]
    if op == ">=":
        if M is None:
            return list(EVERYTHING)
        return [(">=", V(M, m or 0, p or 0, pre if full else ()))]
    if op == "<":
        if M is None:
            return list(NOTHING)
        if full:
            return [("<", V(M, m, p, pre))]
        return [_lt_bump(M, m or 0, 0)]
    if op == "<=":
        if M is None:
            return list(EVERYTHING)
        if full:
            return [("<=", V(M, m, p, pre))]
        if m is None:
            return [_lt_bump(M + 1)]
        return [_lt_bump(M, m + 1)]
    raise ValueError(op)


TOKEN_RE = re.compile(r"^(~>|~|\^|>=|<=|>|<|=)?(.*)$")


def desugar(text):
    """Range string to a list of comparator lists (disjunction of conjunctions)."""
    out = []
    for part in text.split("||"):
        part = part.strip()
        if not part:
            out.append(list(EVERYTHING))
            continue
        hy = re.match(r"^(\S+)\s+-\s+(\S+)$", part)
        if hy:
            (lM, lm, lp), lpre = _partial(hy.group(1))
            lo = V(lM or 0, lm or 0, lp or 0, lpre if lp is not None else ())
            comps = [(">=", lo)]
            (hM, hm, hp), hpre = _partial(hy.group(2))
            if hM is None:
                pass
            elif hp is not None:
                comps.append(("<=", V(hM, hm, hp, hpre)))
            elif hm is None:
                comps.append(_lt_bump(hM + 1))
            else:
                comps.append(_lt_bump(hM, hm + 1))
            out.append(comps)
            continue
        part = re.sub(r"(~>|~|\^|>=|<=|>|<|=)\s+", r"\1", part)
        comps = []
        for tok in part.split():
            op, rest = TOKEN_RE.match(tok).groups()
            comps.extend(_expand(op or "", rest))
        out.append(comps)
    return out


def _test(op, v, ref):
    c = ocmp(v, ref)
    return {"<": c < 0, "<=": c <= 0, ">": c > 0, ">=": c >= 0, "=": c == 0}[op]


def osatisfies(version, range_text):
    v = oparse(version) if isinstance(version, str) else version
    for comps in desugar(range_text):
        if not all(_test(op, v, ref) for op, ref in comps):
            continue
        if v[3] and not any(ref[3] and ref[:3] == v[:3] for _, ref in comps):
            continue
        return True
    return False


def omax_satisfying(versions, range_text):
    best = None
    for s in versions:
        if osatisfies(s, range_text) and (best is None or ocmp(oparse(s), oparse(best)) > 0):
            best = s
    return best


def osort(versions):
    """Insertion sort with the pairwise comparator, deliberately naive."""
    out = []
    for s in versions:
        i = 0
        while i < len(out) and ocmp(oparse(out[i]), oparse(s)) < 0:
            i += 1
        out.insert(i, s)
    return out


# ---------------------------------------------------------------- installer walk

TAG_RE = re.compile(r"^[A-Za-z][A-Za-z0-9._-]*$")
BASE_TIME = datetime(2020, 1, 1, tzinfo=timezone.utc)


def fixture_time(hours):
    return None if hours is None else BASE_TIME + timedelta(hours=hours)


def _matching(fx, lib, raw, as_of):
    """Ascending list of released versions of ``lib`` accepted by ``raw``."""
    versions = fx["libs"].get(lib)
    if versions is None:
        return []
    if TAG_RE.match(raw) and not raw.startswith(("x", "X")):
        target = fx.get("tags", {}).get(lib, {}).get(raw)
        pool = [target] if target in versions else []
    else:
        pool = [v for v in versions if osatisfies(v, raw)]
    if as_of is not None:
        pool = [v for v in pool if versions[v].get("time") is not None and fixture_time(versions[v]["time"]) < as_of]
    return osort(pool)


def _preferred(fx, lib, pool):
    latest = fx.get("tags", {}).get(lib, {}).get("latest")
    if latest in pool:
        return [latest] + [v for v in reversed(pool) if v != latest and not _dep(fx, lib, v)] + [
            v for v in reversed(pool) if v != latest and _dep(fx, lib, v)
        ]
    return [v for v in reversed(pool) if not _dep(fx, lib, v)] + [v for v in reversed(pool) if _dep(fx, lib, v)]


def _dep(fx, lib, v):
    return bool(fx["libs"][lib][v].get("deprecated"))


def _is_prefix(a, b):
    return len(a) <= len(b) and tuple(b[: len(a)]) == tuple(a)


def simulate(fx, root, as_of=None, choose=None, bad=None):
    """Run the installer walk over fixture ``fx`` from ``root = (lib, version)``.

    Returns ``(nodes, edges)``: ``nodes`` is a set of ``(location, lib, ver)``
    and ``edges`` a set of ``(src_location, dst_location, raw)``.

    With ``bad`` (a set of ``(lib, ver)``) and ``choose`` (a callback taking
    the number of options and returning an index) the walk becomes the
    remediation search space: a clean visible version is always reused,
    otherwise any matching version may be installed fresh, or the nearest
    visible affected one reused.  A version already visible from the
    depender is never installed a second time.
    """
    root_lib, root_ver = root
    entries = [{"loc": (), "parent": (), "lib": root_lib, "ver": root_ver}]
    queue = [((), root_lib, root_ver)]
    edges = set()
    while queue:
        loc, lib, ver = queue.pop(0)
        deps = fx["libs"][lib][ver].get("deps", {}) if lib in fx["libs"] and ver in fx["libs"][lib] else fx.get("root_deps", {})
        for dep in sorted(deps):
            raw = deps[dep]
            vers = _matching(fx, dep, raw, as_of)
            seen = [e for e in entries if e["lib"] == dep and e["ver"] in vers and _is_prefix(e["parent"], loc)]
            seen.sort(key=lambda e: len(e["parent"]), reverse=True)
            if bad is None:
                if seen:
                    edges.add((loc, seen[0]["loc"], raw))
                    continue
                if not vers:
                    continue
                options = [("fresh", _preferred(fx, dep, vers)[0])]
            else:
                clean = [e for e in seen if (dep, e["ver"]) not in bad]
                if clean:
                    edges.add((loc, clean[0]["loc"], raw))
                    continue
                visible = {e["ver"] for e in seen}
                options = [("fresh", v) for v in vers if v not in visible]
                if seen:
                    options.append(("reuse", seen[0]))
                if not options:
                    continue
            kind, pick = options[choose(len(options)) if len(options) > 1 and choose else 0]
            if kind == "reuse":
                edges.add((loc, pick["loc"], raw))
                continue
            target = None
            for i in range(len(loc) + 1):
                scope = tuple(loc[:i])
                if not any(e["parent"] == scope and e["lib"] == dep for e in entries):
                    target = scope
                    break
            if target is None:
                continue
            new_loc = target + (dep,)
            entries.append({"loc": new_loc, "parent": target, "lib": dep, "ver": pick})
            edges.add((loc, new_loc, raw))
            queue.append((new_loc, dep, pick))
    nodes = {(e["loc"], e["lib"], e["ver"]) for e in entries}
    return nodes, edges


def enumerate_search_space(fx, root, bad, as_of=None, limit=10_000):
    """Every tree the remediation search space can produce.

    Replays the walk with each sequence of choices (odometer order).  Returns
    the list of ``(nodes, edges)`` or ``None`` when more than ``limit``
    assignments exist.
    """
    results = []
    prefix: list[int] = []
    while True:
        arity: list[int] = []

        def choose(n):
            i = len(arity)
            arity.append(n)
            return prefix[i] if i < len(prefix) else 0

        results.append(simulate(fx, root, as_of, choose, bad))
        if len(results) > limit:
            return None
        seq = [prefix[i] if i < len(prefix) else 0 for i in range(len(arity))]
        # advance the odometer from the deepest choice
        while seq and seq[-1] + 1 >= arity[len(seq) - 1]:
            seq.pop()
        if not seq:
            return results
        seq[-1] += 1
        prefix = seq


# ---------------------------------------------------------------- paths


def all_simple_paths(edges, root, target):
    """Exhaustive simple-path enumeration via networkx."""
    import networkx as nx

    g = nx.DiGraph()
    g.add_edges_from(edges)
    if root not in g or target not in g or root == target:
        return set()
    return {tuple(p) for p in nx.all_simple_paths(g, root, target)}


def affected_set(fx):
    """``(lib, version)`` pairs hit by any advisory in the fixture."""
    bad = set()
    for a in fx.get("advisories", []):
        for v in fx["libs"].get(a["library"], {}):
            if osatisfies(v, a["affected_range"]):
                bad.add((a["library"], v))
    return bad


def score_tree(nodes, edges, root, bad):
    """(points, paths) of an oracle tree, counting paths with networkx."""
    at = {loc: (lib, ver) for loc, lib, ver in nodes}
    points = {at[loc] for loc in at if at[loc] in bad}
    logical = {(at[s], at[d]) for s, d, _ in edges}
    paths = set()
    for p in points:
        paths |= all_simple_paths(logical, root, p)
    return len(points), len(paths)
