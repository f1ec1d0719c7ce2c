"""On-disk graph store.

Layout of a store directory::

    ingest.jsonl   append-only log, one canonical JSON record per line:
                   {"kind": "packument", "doc": {...}} or
                   {"kind": "advisory", "doc": {...}}
    index.pickle   rebuildable snapshot of the in-memory graph, stamped with
                   the byte size and sha256 of the log it was built from
    .lock          advisory file lock held during writes

The log is the source of truth: a missing or stale index is rebuilt by
replaying the log in order.
"""

from __future__ import annotations

import hashlib
import json
import pickle
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Mapping, Optional, Union

from filelock import FileLock

from .errors import DepVulnError
from .graph import Advisory, DVGraph, IngestReport

LOG_NAME = "ingest.jsonl"
INDEX_NAME = "index.pickle"
INDEX_FORMAT = 1


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class GraphStore:
    def __init__(self, directory: Union[str, Path]) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.log_path = self.directory / LOG_NAME
        self.index_path = self.directory / INDEX_NAME
        self._lock = FileLock(str(self.directory / ".lock"))
        self._graph: DVGraph | None = None
        self._seen: set[str] = set()

    # ------------------------------------------------------------ reading

    def records(self) -> Iterator[dict[str, Any]]:
        if not self.log_path.exists():
            return
        with self.log_path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield json.loads(line)

    def _log_stamp(self) -> tuple[int, str]:
        if not self.log_path.exists():
            return (0, _digest(b""))
        data = self.log_path.read_bytes()
        return (len(data), _digest(data))

    def rebuild(self) -> DVGraph:
        graph = DVGraph()
        seen: set[str] = set()
        for rec in self.records():
            seen.add(_digest(canonical_json(rec).encode()))
            self._apply(graph, rec)
        graph.recompute_defaults()
        self._graph, self._seen = graph, seen
        self._write_index()
        return graph

    def load(self) -> DVGraph:
        if self._graph is not None:
            return self._graph
        stamp = self._log_stamp()
        if self.index_path.exists():
            try:
                with self.index_path.open("rb") as fh:
                    payload = pickle.load(fh)
                if payload.get("format") == INDEX_FORMAT and tuple(payload["stamp"]) == stamp:
                    self._graph, self._seen = payload["graph"], set(payload["seen"])
                    return self._graph
            except (OSError, pickle.UnpicklingError, EOFError, KeyError, AttributeError):
                pass
        return self.rebuild()

    def _write_index(self) -> None:
        payload = {
            "format": INDEX_FORMAT,
            "stamp": self._log_stamp(),
            "graph": self._graph,
            "seen": sorted(self._seen),
        }
        tmp = self.index_path.with_suffix(".tmp")
        with tmp.open("wb") as fh:
            pickle.dump(payload, fh, protocol=pickle.HIGHEST_PROTOCOL)
        tmp.replace(self.index_path)

    # ------------------------------------------------------------ writing

    @staticmethod
    def _apply(graph: DVGraph, rec: Mapping[str, Any]) -> IngestReport:
        kind = rec.get("kind")
        if kind == "packument":
            return graph.ingest_packument(rec["doc"])
        if kind == "advisory":
            return graph.ingest_advisory(rec["doc"])
        raise ValueError(f"unknown log record kind {kind!r}")

    def _append(
        self,
        records: Iterable[Mapping[str, Any]],
        apply: bool,
        on_error: Optional[Callable[[Mapping[str, Any], Exception], None]] = None,
    ) -> IngestReport:
        """Apply and log records.  With ``on_error`` a failing record is reported and skipped."""
        graph = self.load()
        report = IngestReport()
        with self._lock:
            try:
                with self.log_path.open("a", encoding="utf-8") as fh:
                    for rec in records:
                        line = canonical_json(rec)
                        digest = _digest(line.encode())
                        # a record that fails to apply is never logged
                        if apply:
                            try:
                                report.merge(self._apply(graph, rec))
                            except DepVulnError as exc:
                                if on_error is None:
                                    raise
                                on_error(rec, exc)
                                continue
                        if digest in self._seen:
                            continue
                        self._seen.add(digest)
                        fh.write(line + "\n")
            finally:
                self._write_index()
        return report

    def ingest_packument(self, doc: Mapping[str, Any]) -> IngestReport:
        return self.ingest_packuments([doc])

    def ingest_packuments(self, docs: Iterable[Mapping[str, Any]], on_error=None) -> IngestReport:
        recs = ({"kind": "packument", "doc": dict(d) if isinstance(d, Mapping) else d} for d in docs)
        return self._append(recs, apply=True, on_error=on_error)

    def ingest_advisories(
        self, advisories: Iterable[Union[Advisory, Mapping[str, Any]]], on_error=None
    ) -> IngestReport:
        recs = []
        for adv in advisories:
            try:
                if not isinstance(adv, Advisory):
                    adv = Advisory.from_dict(adv)
            except DepVulnError as exc:
                if on_error is None:
                    raise
                on_error({"kind": "advisory", "doc": adv}, exc)
                continue
            recs.append({"kind": "advisory", "doc": adv.to_dict()})
        return self._append(recs, apply=True, on_error=on_error)
