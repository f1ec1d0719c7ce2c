"""``depvuln`` command line.

Exit codes: 0 clean, 1 fatal error, 2 partial ingest (some inputs rejected),
3 vulnerabilities found.  JSON output is the stable contract.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Optional, Sequence

from . import evolution, remediation, resolver, vulnpath
from .errors import DepVulnError
from .graph import DVGraph, VerNode
from .policy import SelectionPolicy
from .store import GraphStore
from .timeutil import format_time, just_after, parse_time

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL, EXIT_VULNERABLE = 0, 1, 2, 3

ENV_STORE = "DEPVULN_STORE"
CONFIG_NAME = "depvuln.json"
SCHEMA_VERSION = resolver.SCHEMA_VERSION


class CliError(Exception):
    pass


@dataclass
class WorkspaceConfig:
    store: Path = Path(".depvuln")
    prefer_latest_tag: bool = True
    deprioritize_deprecated: bool = True
    dep_types: tuple[str, ...] = ("prod",)
    cap: int = vulnpath.DEFAULT_CAP
    budget: int = resolver.DEFAULT_BUDGET
    format: str = "json"
    sources: dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        if self.cap <= 0:
            raise CliError("cap must be positive")
        if self.budget <= 0:
            raise CliError("budget must be positive")
        if self.format not in ("json", "text"):
            raise CliError(f"unknown output format {self.format!r}")

    def policy(self) -> SelectionPolicy:
        return SelectionPolicy(
            prefer_latest_tag=self.prefer_latest_tag,
            deprioritize_deprecated=self.deprioritize_deprecated,
            dep_types=frozenset(self.dep_types),
        )


def load_config(args: argparse.Namespace, environ: Optional[dict] = None) -> WorkspaceConfig:
    """Merge settings: command-line flags over environment over config file."""
    environ = os.environ if environ is None else environ
    cfg = WorkspaceConfig()
    flag = lambda name: getattr(args, name, None)  # noqa: E731
    path = Path(flag("config")) if flag("config") else Path(CONFIG_NAME)
    if path.exists():
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {path}: {exc}") from None
        for key in ("prefer_latest_tag", "deprioritize_deprecated", "cap", "budget", "format"):
            if key in doc:
                setattr(cfg, key, doc[key])
                cfg.sources[key] = "config"
        if "dep_types" in doc:
            cfg.dep_types = tuple(doc["dep_types"])
        if "store" in doc:
            cfg.store = (path.parent / doc["store"]) if not os.path.isabs(doc["store"]) else Path(doc["store"])
            cfg.sources["store"] = "config"
    elif flag("config"):
        raise CliError(f"config file {path} not found")
    if environ.get(ENV_STORE):
        cfg.store = Path(environ[ENV_STORE])
        cfg.sources["store"] = "env"
    if flag("store"):
        cfg.store = Path(flag("store"))
        cfg.sources["store"] = "flag"
    if flag("format"):
        cfg.format = flag("format")
    for key in ("cap", "budget"):
        if flag(key) is not None:
            setattr(cfg, key, flag(key))
    if flag("include"):
        cfg.dep_types = tuple(sorted(set(cfg.dep_types) | set(flag("include"))))
    cfg.validate()
    return cfg


# ---------------------------------------------------------------- helpers


def _time(text: Optional[str], flag: str) -> Optional[datetime]:
    if text is None:
        return None
    try:
        return parse_time(text)
    except ValueError:
        raise CliError(f"{flag}: cannot parse time {text!r}") from None


def _root(spec: str, graph: DVGraph) -> VerNode:
    """A package ``name@version`` or a path to a manifest JSON file."""
    path = Path(spec)
    if path.suffix == ".json" or path.is_file():
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read manifest {spec}: {exc}") from None
        deps = doc.get("dependencies", doc) if isinstance(doc, dict) else None
        if not isinstance(deps, dict):
            raise CliError(f"manifest {spec} has no dependency map")
        name = doc.get("name", "root") if "dependencies" in doc else "root"
        version = doc.get("version", "0.0.0") if "dependencies" in doc else "0.0.0"
        return resolver.manifest_root({str(k): v for k, v in deps.items()}, graph, name, version)
    try:
        return resolver.root_node(spec, graph)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _check_released(node: VerNode, at: Optional[datetime]) -> None:
    if at is not None and node.release_time is not None and not node.release_time < at:
        raise CliError(f"{node.id} not yet released at {format_time(at)}")


def _emit(out, cfg: WorkspaceConfig, doc: dict[str, Any], text: str) -> None:
    if cfg.format == "json":
        out.write(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n")
    else:
        out.write(text.rstrip("\n") + "\n")


def _tree_text(tree: resolver.DependencyTree) -> str:
    lines = [f"{tree.root} ({tree.mode}, {len(tree.nodes)} nodes)"]
    for p in tree.nodes:
        if p.path:
            lines.append(f"  {p.key}  {p.pkg}")
    for d in tree.diagnostics:
        lines.append(f"  ! {d.kind}: {d.message} ({d.src} -> {d.library}@{d.constraint})")
    return "\n".join(lines)


def _load_tree(path: str) -> resolver.DependencyTree:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read tree {path}: {exc}") from None
    if "packages" in doc:
        return remediation.read_lockfile(doc)
    if "tree" in doc and "nodes" not in doc:
        doc = doc["tree"]
    return resolver.DependencyTree.from_dict(doc)


# ---------------------------------------------------------------- commands


def _json_files(paths: Sequence[str]) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(q for q in p.rglob("*.json") if q.is_file()))
        elif p.exists():
            files.append(p)
        else:
            raise CliError(f"no such file or directory: {p}")
    return files


def cmd_ingest(args, cfg: WorkspaceConfig, out) -> int:
    store = GraphStore(cfg.store)
    errors: list[dict[str, str]] = []

    def failed(rec, exc) -> None:
        doc = rec.get("doc")
        label = doc.get("name") or doc.get("id") if isinstance(doc, dict) else None
        errors.append({"input": str(label), "error": str(exc)})

    docs = []
    for f in _json_files(args.paths):
        try:
            data = json.loads(f.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            errors.append({"input": str(f), "error": str(exc)})
            continue
        docs.extend(data if isinstance(data, list) else [data])
    report = store.ingest_packuments(docs, on_error=failed)
    if args.advisories:
        try:
            advs = json.loads(Path(args.advisories).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read advisories {args.advisories}: {exc}") from None
        if not isinstance(advs, list):
            raise CliError("advisory file must hold a JSON array")
        report.merge(store.ingest_advisories(advs, on_error=failed))
    doc = {"schema_version": SCHEMA_VERSION, "report": report.to_dict(), "errors": errors}
    d = report.to_dict()
    text = (
        f"nodes added: {d['nodes_added']}\nedges added: {d['edges_added']}\n"
        f"rejected: {report.rejects} inputs failed: {len(errors)}"
    )
    _emit(out, cfg, doc, text)
    return EXIT_PARTIAL if errors or report.rejects else EXIT_OK


def _resolve(args, cfg: WorkspaceConfig, graph: DVGraph) -> resolver.DependencyTree:
    node = _root(args.spec, graph)
    at = _time(args.at, "--at")
    _check_released(node, at)
    policy = cfg.policy().at(at)
    fn = resolver.resolve_reach if getattr(args, "mode", "npm") == "reach" else resolver.resolve
    return fn(node, graph, policy, fail_fast=getattr(args, "fail_fast", False))


def cmd_resolve(args, cfg, out) -> int:
    graph = GraphStore(cfg.store).load()
    tree = _resolve(args, cfg, graph)
    _emit(out, cfg, tree.to_dict(), _tree_text(tree))
    return EXIT_OK


def cmd_audit(args, cfg, out) -> int:
    graph = GraphStore(cfg.store).load()
    tree = _resolve(args, cfg, graph)
    report = vulnpath.audit(tree, graph, cfg.cap)
    lines = [f"{tree.root}: {len(report.points)} vulnerable points, {len(report.paths)} paths"]
    lines += [f"  {p.node} {', '.join(sorted(p.vulnerabilities))}" for p in report.points]
    lines += [f"  [{p.steps}] {' > '.join(map(str, p.nodes))}" for p in report.paths]
    if report.truncated:
        lines.append(f"  (truncated at {cfg.cap} paths)")
    _emit(out, cfg, report.to_dict(), "\n".join(lines))
    return EXIT_VULNERABLE if report.vulnerable else EXIT_OK


def _window(args, graph: DVGraph, node: VerNode) -> tuple[datetime, datetime]:
    start = _time(args.start, "--from") or node.release_time
    end = _time(args.end, "--to")
    if start is None:
        raise CliError("--from is required when the root has no release time")
    if end is None:
        times = [n.release_time for lib in graph.libs.values() for n in lib.versions.values() if n.release_time]
        end = max(times, default=start)
    _check_released(node, just_after(start))
    if start >= end:
        raise CliError("--from must be before --to")
    return start, end


def cmd_timeline(args, cfg, out) -> int:
    graph = GraphStore(cfg.store).load()
    node = _root(args.spec, graph)
    start, end = _window(args, graph, node)
    entries = evolution.timeline(node, graph, start, end, args.mode, cfg.policy())
    doc = evolution.timeline_report(entries)
    doc["root"] = str(node.id)
    doc["mode"] = args.mode
    text = "\n".join(f"{format_time(t)}  {len(tree.nodes)} nodes" for t, tree in entries)
    _emit(out, cfg, doc, text)
    return EXIT_OK


def cmd_lifecycle(args, cfg, out) -> int:
    graph = GraphStore(cfg.store).load()
    node = _root(args.spec, graph)
    start, end = _window(args, graph, node)
    policy = cfg.policy()
    records = evolution.cve_lifecycle(node, graph, start, end, policy)
    fates = evolution.classify_paths(node, graph, start, end, policy, cap=cfg.cap)
    if args.csv:
        Path(args.csv).write_text(evolution.lifecycles_csv(records), encoding="utf-8")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "root": str(node.id),
        "from": format_time(start),
        "to": format_time(end),
        "lifecycles": [r.to_dict() for r in records],
        "paths": [f.to_dict() for f in fates],
    }
    lines = [
        f"{r.cve}: introduced {format_time(r.introduced_at)}, eliminated {format_time(r.eliminated_at) or '-'}"
        for r in records
    ]
    lines += [f"  {f.fate}: {' > '.join(map(str, f.path.nodes))}" for f in fates]
    _emit(out, cfg, doc, "\n".join(lines) or "no vulnerabilities observed")
    return EXIT_VULNERABLE if any(f.fate == "NotRemoved" for f in fates) else EXIT_OK


def cmd_remediate(args, cfg, out) -> int:
    graph = GraphStore(cfg.store).load()
    node = _root(args.spec, graph)
    at = _time(args.at, "--at")
    _check_released(node, at)
    result = remediation.remediate(node, graph, cfg.policy().at(at), cfg.budget)
    cmp = remediation.compare_remediation(result.default_tree, result.tree, graph)
    if args.lockfile:
        Path(args.lockfile).write_bytes(remediation.emit_lockfile(result.tree, graph))
    doc = result.to_dict()
    doc["comparison"] = cmp.to_dict()
    text = (
        f"{result.tree.root}: points {cmp.default_points} -> {cmp.remediated_points}, "
        f"paths {cmp.default_paths} -> {cmp.remediated_paths}"
        + (" (budget exhausted)" if result.search_exhausted else "")
    )
    _emit(out, cfg, doc, text)
    return EXIT_VULNERABLE if result.residual_points else EXIT_OK


def cmd_compare(args, cfg, out) -> int:
    diff = resolver.compare_trees(_load_tree(args.left), _load_tree(args.right))
    d = diff.to_dict()
    text = "exact match" if diff.exact else "\n".join(
        [f"- {x}" for x in d["nodes_only_left"]]
        + [f"+ {x}" for x in d["nodes_only_right"]]
        + [f"~ {r['from']} -> {r['library']}: {r['left']} => {r['right']}" for r in d["retargeted"]]
    )
    _emit(out, cfg, d, text or "placements differ")
    return EXIT_OK


def cmd_stats(args, cfg, out) -> int:
    stats = GraphStore(cfg.store).load().stats()
    doc = {"schema_version": SCHEMA_VERSION, **stats}
    text = "\n".join(f"{k}: {v}" for k, v in [*stats["nodes"].items(), *stats["edges"].items()])
    _emit(out, cfg, doc, text)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps a subcommand from resetting a flag given before it
    hide = argparse.SUPPRESS
    common.add_argument("--store", default=hide, help=f"graph store directory (env {ENV_STORE})")
    common.add_argument("--config", default=hide, help=f"workspace config file (default ./{CONFIG_NAME})")
    common.add_argument("--format", default=hide, choices=("json", "text"))
    common.add_argument(
        "--include",
        default=hide,
        action="append",
        choices=("dev", "peer", "optional"),
        help="also follow this dependency type (repeatable)",
    )

    p = argparse.ArgumentParser(prog="depvuln", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="ingest packument files and advisories")
    s.add_argument("paths", nargs="*", help="packument JSON files or directories")
    s.add_argument("--advisories", help="JSON array of advisories")
    s.set_defaults(func=cmd_ingest)

    def rooted(name: str, helptext: str, func):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("spec", help="name@version or a manifest JSON file")
        s.set_defaults(func=func)
        return s

    s = rooted("resolve", "resolve a dependency tree", cmd_resolve)
    s.add_argument("--at", help="resolve as of this time (ISO-8601)")
    s.add_argument("--mode", choices=("npm", "reach"), default="npm")
    s.add_argument("--fail-fast", action="store_true", help="abort on an unresolvable dependency")

    s = rooted("audit", "list vulnerable points and paths", cmd_audit)
    s.add_argument("--at")
    s.add_argument("--cap", type=int, help="maximum vulnerable paths per tree")

    for name, func, helptext in (
        ("timeline", cmd_timeline, "trees over a time window"),
        ("lifecycle", cmd_lifecycle, "CVE lifecycles and path fates over a window"),
    ):
        s = rooted(name, helptext, func)
        s.add_argument("--from", dest="start")
        s.add_argument("--to", dest="end")
        if name == "timeline":
            s.add_argument("--mode", choices=evolution.MODES, default="every_dtc")
        else:
            s.add_argument("--csv", help="write per-CVE living times as CSV")
            s.add_argument("--cap", type=int)

    s = rooted("remediate", "search for a tree without vulnerable versions", cmd_remediate)
    s.add_argument("--at")
    s.add_argument("--budget", type=int, help="maximum node expansions")
    s.add_argument("--lockfile", help="write the remediated lockfile here")

    s = sub.add_parser("compare", parents=[common], help="diff two tree or lockfile JSON files")
    s.add_argument("left")
    s.add_argument("right")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("stats", parents=[common], help="graph statistics")
    s.set_defaults(func=cmd_stats)
    return p


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        return args.func(args, cfg, out)
    except (CliError, DepVulnError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
