"""Fixture builders shared by the test modules.

A fixture is a plain dict::

    {"libs": {lib: {version: {"deps": {lib: raw}, "time": hours, "deprecated": bool}}},
     "tags": {lib: {"latest": version}},
     "advisories": [{"id", "library", "affected_range", "publish_time"?}]}

``time`` counts hours after 2020-01-01 (``None`` means unknown).  The same
dict feeds both the oracle simulator and the real graph.
"""

from __future__ import annotations

import random

from depvuln.graph import DVGraph
from depvuln.timeutil import format_time

from oracles import fixture_time


def packuments(fx):
    docs = []
    for lib in sorted(fx["libs"]):
        versions = fx["libs"][lib]
        doc = {
            "name": lib,
            "dist-tags": dict(fx.get("tags", {}).get(lib, {})),
            "time": {},
            "versions": {},
        }
        for v, meta in versions.items():
            entry = {"dependencies": dict(meta.get("deps", {}))}
            if meta.get("deprecated"):
                entry["deprecated"] = "do not use"
            if meta.get("dist"):
                entry["dist"] = meta["dist"]
            doc["versions"][v] = entry
            if meta.get("time") is not None:
                doc["time"][v] = format_time(fixture_time(meta["time"]))
        docs.append(doc)
    return docs


def advisories(fx):
    out = []
    for a in fx.get("advisories", []):
        a = dict(a)
        if isinstance(a.get("publish_time"), int):
            a["publish_time"] = format_time(fixture_time(a["publish_time"]))
        out.append(a)
    return out


def build_graph(fx) -> DVGraph:
    g = DVGraph()
    for doc in packuments(fx):
        g.ingest_packument(doc)
    for a in advisories(fx):
        g.ingest_advisory(a)
    return g


def lib(versions, latest=None):
    """Shorthand: ``{"1.0.0": {...deps}}`` or ``{"1.0.0": ({deps}, hours)}``."""
    out = {}
    for i, (v, spec) in enumerate(versions.items()):
        if isinstance(spec, tuple):
            deps, hours = spec[0], spec[1]
            deprecated = spec[2] if len(spec) > 2 else False
        else:
            deps, hours, deprecated = spec, i, False
        out[v] = {"deps": deps, "time": hours, "deprecated": deprecated}
    return out


# ---------------------------------------------------------------- named fixtures


def shared_dep():
    """B and C share D; only C's range admits D@1.2.0, which pulls in E."""
    return {
        "libs": {
            "A": lib({"1.0.0": ({"B": "*", "C": "*"}, 10)}),
            "B": lib({"1.0.0": ({"D": "~1.1.0"}, 5)}),
            "C": lib({"1.0.0": ({"D": "^1.1.0"}, 5)}),
            "D": lib(
                {
                    "1.0.0": ({}, 1),
                    "1.1.0": ({}, 2),
                    "1.2.0": ({"E": "*"}, 3),
                    "2.0.0": ({}, 4),
                }
            ),
            "E": lib({"1.0.0": ({}, 1)}),
        },
        "tags": {"D": {"latest": "2.0.0"}},
        "advisories": [],
    }


def disjoint_majors():
    return {
        "libs": {
            "R": lib({"1.0.0": ({"B": "^1.0.0", "C": "^1.0.0"}, 10)}),
            "B": lib({"1.0.0": ({"D": "~1.1.0"}, 5)}),
            "C": lib({"1.0.0": ({"D": "^2.0.0"}, 5)}),
            "D": lib({"1.1.0": ({}, 1), "2.0.0": ({}, 2)}),
        },
        "tags": {},
    }


def diamond():
    """root -> B -> D and root -> C -> D with D vulnerable."""
    return {
        "libs": {
            "R": lib({"1.0.0": ({"B": "^1.0.0", "C": "^1.0.0"}, 10)}),
            "B": lib({"1.0.0": ({"D": "^1.0.0"}, 5)}),
            "C": lib({"1.0.0": ({"D": "^1.0.0"}, 5)}),
            "D": lib({"1.0.0": ({}, 1)}),
        },
        "tags": {},
        "advisories": [{"id": "CVE-D", "library": "D", "affected_range": "<2.0.0", "publish_time": 0}],
    }


# Times for the evolution scenario, in hours after the base instant.
T_ROOT, T_B_PATCH, T_C_MINOR, T_D_PATCH = 100, 200, 300, 450


def release_history(pin_d=False, with_patch=True):
    """A@1.0.0 gains two vulnerable points through two later releases.

    B@1.0.1 (vulnerable) and C@1.0.1 (which pulls vulnerable D@1.1.0) are
    released after A.  Optionally a clean D@1.1.1 follows; with ``pin_d`` C
    pins D exactly so the patch can never be picked up.
    """
    d_range = "=1.1.0" if pin_d else "~1.1.0"
    d_versions = {"1.0.0": ({}, 1), "1.1.0": ({}, 50)}
    if with_patch:
        d_versions["1.1.1"] = ({}, T_D_PATCH)
    return {
        "libs": {
            "A": lib({"1.0.0": ({"B": "^1.0.0", "C": "^1.0.0"}, T_ROOT)}),
            "B": lib({"1.0.0": ({}, 10), "1.0.1": ({}, T_B_PATCH)}),
            "C": lib({"1.0.0": ({"D": "~1.0.0"}, 10), "1.0.1": ({"D": d_range}, T_C_MINOR)}),
            "D": lib(d_versions),
        },
        "tags": {},
        "advisories": [
            {"id": "CVE-B", "library": "B", "affected_range": "=1.0.1", "publish_time": 1000},
            {"id": "CVE-D", "library": "D", "affected_range": ">=1.1.0 <1.1.1", "publish_time": 400},
        ],
    }


# ---------------------------------------------------------------- random fixtures

VERSION_POOL = ["0.1.0", "0.2.0", "1.0.0", "1.1.0", "1.1.1", "1.2.0", "2.0.0", "2.1.0", "1.2.0-beta.1"]
RANGE_POOL = [
    "*",
    "^1.0.0",
    "^1.1.0",
    "~1.1.0",
    "~1.2.0",
    "^2.0.0",
    "^0.1.0",
    ">=1.1.0 <2.0.0",
    "1.x",
    "<1.2.0",
    ">1.0.0",
    "1.0.0 - 1.2.0",
    "^1.0.0 || ^2.0.0",
    "latest",
    ">=1.2.0-beta.0",
]


def random_fixture(rng: random.Random, max_libs=8, max_versions=4, advisories_p=0.0):
    n = rng.randint(1, max_libs)
    names = [f"l{i}" for i in range(n)]
    fx = {"libs": {}, "tags": {}, "advisories": []}
    for name in names:
        versions = sorted(rng.sample(VERSION_POOL, rng.randint(1, max_versions)))
        fx["libs"][name] = {}
        for v in versions:
            deps = {}
            for other in rng.sample(names, rng.randint(0, min(3, n))):
                if other == name and rng.random() < 0.7:
                    continue
                if rng.random() < 0.2:
                    raw = rng.choice(versions if other == name else list(VERSION_POOL))
                    if rng.random() < 0.5:
                        raw = "=" + raw
                else:
                    raw = rng.choice(RANGE_POOL)
                deps[other] = raw
            fx["libs"][name][v] = {
                "deps": deps,
                "time": None if rng.random() < 0.05 else rng.randint(0, 200),
                "deprecated": rng.random() < 0.15,
            }
        if rng.random() < 0.6:
            fx["tags"][name] = {"latest": rng.choice(versions)}
        if rng.random() < advisories_p:
            fx["advisories"].append(
                {
                    "id": f"CVE-{name}",
                    "library": name,
                    "affected_range": rng.choice(["<1.1.0", "=1.2.0", ">=2.0.0", "~1.1.0", "<1.0.0", "*"]),
                    "publish_time": rng.randint(0, 200),
                }
            )
    return fx


def random_root(rng: random.Random, fx):
    name = sorted(fx["libs"])[0]
    return name, rng.choice(sorted(fx["libs"][name]))


def random_path_fixture(rng: random.Random, max_nodes=12, density=0.25, vuln_p=0.3):
    """Single-version libraries with ``*`` links, so the resolved tree is flat
    and its logical edges are exactly the links reachable from ``n0``.
    Cycles and back-links to the root are allowed."""
    n = rng.randint(1, max_nodes)
    names = [f"n{i:02d}" for i in range(n)]
    fx = {"libs": {}, "tags": {}, "advisories": []}
    for name in names:
        deps = {o: "*" for o in names if o != name and rng.random() < density}
        fx["libs"][name] = {"1.0.0": {"deps": deps, "time": 0}}
        if rng.random() < vuln_p:
            fx["advisories"].append({"id": f"CVE-{name}", "library": name, "affected_range": "*", "publish_time": 0})
    return fx


REMEDIATION_RANGES = ["*", "^1.0.0", "1.x", ">=1.0.0", "~1.1.0", "^1.1.0", ">=1.0.0 <2.1.0", "^2.0.0", "=1.1.0"]


def random_remediation_fixture(rng: random.Random, max_libs=6):
    """Versions cluster in 1.x/2.x and advisories tend to hit the newest ones,
    so the default tree is often vulnerable while older versions are clean."""
    n = rng.randint(2, max_libs)
    names = [f"l{i}" for i in range(n)]
    fx = {"libs": {}, "tags": {}, "advisories": []}
    pool = ["1.0.0", "1.1.0", "1.2.0", "2.0.0", "2.1.0"]
    for i, name in enumerate(names):
        versions = sorted(rng.sample(pool, rng.randint(1, 3)), key=lambda v: tuple(map(int, v.split("."))))
        fx["libs"][name] = {}
        for v in versions:
            deps = {}
            later = names[i + 1 :]
            for other in rng.sample(later, min(len(later), rng.randint(0 if i else 1, 2))):
                deps[other] = rng.choice(REMEDIATION_RANGES)
            if i and rng.random() < 0.1:
                deps[rng.choice(names[:i])] = "*"
            fx["libs"][name][v] = {"deps": deps, "time": rng.randint(0, 50), "deprecated": False}
        if i and rng.random() < 0.6:
            newest = versions[-1]
            rng_text = rng.choice(["=" + newest, ">=" + newest, ">=1.1.0", "*"])
            fx["advisories"].append({"id": f"CVE-{name}", "library": name, "affected_range": rng_text, "publish_time": 10})
    return fx


def write_fixture(fx, directory):
    """Write packuments (one file each) and ``advisories.json``; return their paths."""
    import json
    from pathlib import Path

    directory = Path(directory)
    pk = directory / "packuments"
    pk.mkdir(parents=True, exist_ok=True)
    for doc in packuments(fx):
        (pk / f"{doc['name']}.json").write_text(json.dumps(doc, indent=2))
    adv = directory / "advisories.json"
    adv.write_text(json.dumps(advisories(fx), indent=2))
    return pk, adv
