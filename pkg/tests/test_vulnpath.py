import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depvuln.graph import PkgId
from depvuln.resolver import DependencyTree, resolve
from depvuln.vulnpath import (
    VulnerablePath,
    audit,
    find_vulnerable_paths,
    find_vulnerable_points,
    path_metrics,
)

import fixtures
import oracles


def pid(text):
    return PkgId.parse(text)


def release_history_tree(hours=350):
    fx = fixtures.release_history(with_patch=False)
    g = fixtures.build_graph(fx)
    from depvuln.policy import SelectionPolicy

    return resolve("A@1.0.0", g, SelectionPolicy(as_of=oracles.fixture_time(hours))), g


def test_points_and_paths_release_history():
    t, g = release_history_tree()
    pts = find_vulnerable_points(t, g)
    assert [(str(p.node), sorted(p.vulnerabilities)) for p in pts] == [("B@1.0.1", ["CVE-B"]), ("D@1.1.0", ["CVE-D"])]
    paths, truncated = find_vulnerable_paths(t, pts)
    assert not truncated
    assert sorted([str(n) for n in p.nodes] for p in paths) == [
        ["A@1.0.0", "B@1.0.1"],
        ["A@1.0.0", "C@1.0.1", "D@1.1.0"],
    ]
    m = path_metrics(paths)
    assert (m.points, m.paths, m.max_steps, m.has_one_step, m.one_step_only) == (2, 2, 2, True, False)
    assert m.step_histogram == {1: 1, 2: 1}
    assert m.direct_dependencies_traversed == 2


def test_diamond_two_paths_one_point():
    g = fixtures.build_graph(fixtures.diamond())
    report = audit(resolve("R@1.0.0", g), g)
    assert report.vulnerable
    assert [str(p.node) for p in report.points] == ["D@1.0.0"]
    assert len(report.paths) == 2
    assert report.metrics.paths_per_point == {"D@1.0.0": 2}
    assert all(p.steps == 2 and p.is_well_formed() for p in report.paths)
    doc = report.to_dict()
    assert doc["metrics"]["points"] == 1 and doc["truncated"] is False


def test_no_points_no_paths():
    g = fixtures.build_graph(fixtures.shared_dep())
    report = audit(resolve("A@1.0.0", g), g)
    assert not report.vulnerable and report.paths == []
    assert report.metrics.points == 0 and report.metrics.max_steps == 0


def test_vulnerable_root_has_no_path():
    fx = fixtures.diamond()
    fx["advisories"].append({"id": "CVE-R", "library": "R", "affected_range": "*"})
    g = fixtures.build_graph(fx)
    report = audit(resolve("R@1.0.0", g), g)
    assert {str(p.node) for p in report.points} == {"R@1.0.0", "D@1.0.0"}
    assert {str(p.point) for p in report.paths} == {"D@1.0.0"}
    assert report.metrics.points == 1


def test_cap_truncates():
    g = fixtures.build_graph(fixtures.diamond())
    t = resolve("R@1.0.0", g)
    pts = find_vulnerable_points(t, g)
    paths, truncated = find_vulnerable_paths(t, pts, cap=1)
    assert len(paths) == 1 and truncated
    paths, truncated = find_vulnerable_paths(t, pts, cap=2)
    assert len(paths) == 2 and not truncated
    with pytest.raises(ValueError):
        find_vulnerable_paths(t, pts, cap=0)


def test_cycles_do_not_loop():
    fx = {
        "libs": {
            "R": fixtures.lib({"1.0.0": {"A": "*"}}),
            "A": fixtures.lib({"1.0.0": {"B": "*"}}),
            "B": fixtures.lib({"1.0.0": {"A": "*", "R": "*"}}),
        },
        "advisories": [{"id": "X", "library": "B", "affected_range": "*"}],
    }
    g = fixtures.build_graph(fx)
    report = audit(resolve("R@1.0.0", g), g)
    assert [[str(n) for n in p.nodes] for p in report.paths] == [["R@1.0.0", "A@1.0.0", "B@1.0.0"]]


def test_well_formed_check():
    a, b, c = pid("a@1.0.0"), pid("b@1.0.0"), pid("c@1.0.0")
    assert VulnerablePath((a, b), ((a, b, "*"),)).is_well_formed()
    assert not VulnerablePath((a, b), ((a, c, "*"),)).is_well_formed()
    assert not VulnerablePath((a, b, a), ((a, b, "*"), (b, a, "*"))).is_well_formed()


def tree_and_points(seed):
    fx = fixtures.random_path_fixture(random.Random(seed))
    g = fixtures.build_graph(fx)
    t = resolve("n00@1.0.0", g)
    return t, g


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 1_000_000))
def test_paths_match_exhaustive_enumeration(seed):
    t, g = tree_and_points(seed)
    assert len(t.nodes) <= 12
    pts = find_vulnerable_points(t, g)
    paths, truncated = find_vulnerable_paths(t, pts, cap=None)
    assert not truncated
    edges = [(s, d) for s, d, _ in t.logical_edges]
    expect = set()
    for p in pts:
        expect |= oracles.all_simple_paths(edges, t.root, p.node)
    got = [p.nodes for p in paths]
    assert len(got) == len(set(got))
    assert set(got) == expect
    assert all(p.is_well_formed() for p in paths)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 1_000_000))
def test_metrics_consistent(seed):
    t, g = tree_and_points(seed)
    report = audit(t, g, cap=None)
    m = report.metrics
    assert m.paths == len(report.paths) == sum(m.step_histogram.values()) == sum(m.paths_per_point.values())
    assert m.points <= len(report.points)
    assert m.one_step_only <= m.has_one_step
    direct = {e.dst.pkg for e in t.direct_edges}
    assert m.direct_dependencies_traversed <= len(direct)


def test_round_trip_tree_keeps_paths():
    g = fixtures.build_graph(fixtures.diamond())
    t = resolve("R@1.0.0", g)
    back = DependencyTree.from_dict(t.to_dict())
    assert audit(back, g).to_dict() == audit(t, g).to_dict()
