"""Timestamped triple store with an in-memory working set and append-only log.

Layout under the data directory:

    graph.log            one JSON record per stored triple, append-only
    graph-<secs>.snap    header line + sorted triple records

Restore loads the latest snapshot and replays the log suffix its header
points at.  Once anything has been evicted from the working set, queries
transparently merge in a scan of the on-disk log, so budget-driven eviction
never makes history unreadable (until the log itself is compacted away).

Triples whose predicate lives in the ``cfg/`` namespace hold configuration
and are never evicted.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .util import atomic_write_text, iter_jsonl, jsonl_line

CFG_PREFIX = "cfg/"


class InvalidTriple(ValueError):
    """A triple violates the basic field invariants."""


class StorageFull(RuntimeError):
    """The persistent byte budget is exceeded and eviction cannot free space."""


@dataclass(frozen=True)
class Triple:
    subject: str
    predicate: str
    object: str
    at: int  # whole seconds since epoch, UTC

    def key(self) -> tuple[str, str, str, int]:
        return (self.subject, self.predicate, self.object, self.at)

    def is_cfg(self) -> bool:
        return self.predicate.startswith(CFG_PREFIX)


@dataclass
class StoreBudget:
    max_stm_triples: int
    max_ltm_bytes: int


@dataclass
class Subgraph:
    nodes: set[str]
    edges: list[Triple]
    truncated: bool = False


def _order(t: Triple) -> tuple:
    # query order: time ascending, stable tie order
    return (t.at, t.subject, t.predicate, t.object)


def _validate(t: Triple) -> None:
    if not t.subject or not t.predicate:
        raise InvalidTriple(f"subject and predicate must be non-empty: {t!r}")
    if not isinstance(t.at, int) or t.at <= 0:
        raise InvalidTriple(f"timestamp must be a positive integer: {t!r}")


def _record(t: Triple) -> str:
    return jsonl_line({"s": t.subject, "p": t.predicate, "o": t.object, "t": t.at})


def _from_record(rec: dict) -> Triple:
    return Triple(rec["s"], rec["p"], rec["o"], rec["t"])


class TripleStore:
    """Single-writer triple store; readers share the writer lock briefly.

    With ``data_dir=None`` the store is memory-only (no durability, eviction
    discards permanently).
    """

    def __init__(self, data_dir: str | Path | None = None, budget: StoreBudget | None = None):
        self._lock = threading.RLock()
        self._stm: dict[tuple, Triple] = {}
        self._stm_evicted = False
        self.budget = budget
        self._dir = Path(data_dir) if data_dir is not None else None
        self._log_path = self._dir / "graph.log" if self._dir else None
        self._log_records = 0
        self._log_fh = None
        if self._dir is not None:
            self._dir.mkdir(parents=True, exist_ok=True)
            self._restore()
            self._log_fh = open(self._log_path, "a", encoding="utf-8")

    # -- persistence ----------------------------------------------------

    def _snap_paths(self) -> list[Path]:
        return sorted(self._dir.glob("graph-*.snap")) if self._dir else []

    def _latest_snap(self) -> Path | None:
        best, best_key = None, None
        for p in self._snap_paths():
            try:
                header = json.loads(p.read_text(encoding="utf-8").splitlines()[0])
            except (OSError, json.JSONDecodeError, IndexError):
                continue
            key = (header.get("created_at", 0), p.name)
            if best_key is None or key > best_key:
                best, best_key = p, key
        return best

    def _restore(self) -> None:
        skip = 0
        snap = self._latest_snap()
        if snap is not None:
            lines = snap.read_text(encoding="utf-8").splitlines()
            header = json.loads(lines[0])
            skip = int(header.get("log_records", 0))
            self._stm_evicted = bool(header.get("stm_evicted", False))
            for line in lines[1:]:
                t = _from_record(json.loads(line))
                self._stm[t.key()] = t
        self._log_records = 0
        if self._log_path.exists():
            for rec in iter_jsonl(self._log_path):
                if self._log_records >= skip:
                    t = _from_record(rec)
                    self._stm[t.key()] = t
                self._log_records += 1

    def _iter_disk(self):
        if self._log_path and self._log_path.exists():
            for rec in iter_jsonl(self._log_path):
                yield _from_record(rec)

    def _disk_keys(self) -> set[tuple]:
        return {t.key() for t in self._iter_disk()}

    def _ltm_bytes(self) -> int:
        if not self._dir:
            return 0
        total = self._log_path.stat().st_size if self._log_path.exists() else 0
        return total + sum(p.stat().st_size for p in self._snap_paths())

    def close(self) -> None:
        with self._lock:
            if self._log_fh:
                self._log_fh.close()
                self._log_fh = None

    # -- writes ----------------------------------------------------------

    def put_triples(self, triples: list[Triple]) -> int:
        """Store triples; returns how many were new (exact duplicates skipped)."""
        with self._lock:
            for t in triples:
                _validate(t)
            disk_keys = self._disk_keys() if self._stm_evicted else None
            fresh: list[Triple] = []
            batch: set[tuple] = set()
            for t in triples:
                k = t.key()
                if k in self._stm or k in batch or (disk_keys is not None and k in disk_keys):
                    continue
                batch.add(k)
                fresh.append(t)
            if not fresh:
                return 0
            if self._log_fh:
                payload = "".join(_record(t) for t in fresh)
                if self.budget is not None:
                    self._ensure_ltm_space(len(payload.encode("utf-8")))
                self._log_fh.write(payload)
                self._log_fh.flush()
                self._log_records += len(fresh)
            for t in fresh:
                self._stm[t.key()] = t
            return len(fresh)

    def _ensure_ltm_space(self, incoming: int) -> None:
        limit = self.budget.max_ltm_bytes
        if self._ltm_bytes() + incoming <= limit:
            return
        self._compact_ltm(limit - incoming)
        if self._ltm_bytes() + incoming > limit:
            raise StorageFull(
                f"persistent budget {limit}B cannot hold {incoming}B more after eviction"
            )

    def _compact_ltm(self, target_bytes: int) -> set[tuple]:
        """Permanently drop oldest data triples until the log fits target_bytes."""
        survivors = sorted({t.key(): t for t in self._iter_disk()}.values(), key=_order)
        lines = [_record(t) for t in survivors]
        total = sum(len(line.encode("utf-8")) for line in lines)
        dropped: set[tuple] = set()
        i = 0
        while total > max(target_bytes, 0) and i < len(survivors):
            if not survivors[i].is_cfg():
                total -= len(lines[i].encode("utf-8"))
                dropped.add(survivors[i].key())
                lines[i] = None
            i += 1
        if self._log_fh:
            self._log_fh.close()
        atomic_write_text(self._log_path, "".join(l for l in lines if l is not None))
        self._log_fh = open(self._log_path, "a", encoding="utf-8")
        self._log_records = len(lines) - len(dropped)
        for p in self._snap_paths():  # stale after rewrite
            p.unlink()
        for k in dropped:
            self._stm.pop(k, None)
        return dropped

    # -- reads -----------------------------------------------------------

    def query_triples(
        self,
        subject: str | None = None,
        predicate: str | None = None,
        object: str | None = None,
        time_range: tuple[int, int] | None = None,
    ) -> list[Triple]:
        """All stored triples matching every supplied filter, time ascending."""
        if time_range is not None:
            t0, t1 = time_range
            if t0 > t1:
                raise ValueError(f"empty time range: {time_range}")

        def ok(t: Triple) -> bool:
            if subject is not None and t.subject != subject:
                return False
            if predicate is not None and t.predicate != predicate:
                return False
            if object is not None and t.object != object:
                return False
            if time_range is not None and not (time_range[0] <= t.at <= time_range[1]):
                return False
            return True

        with self._lock:
            found = {t.key(): t for t in self._stm.values() if ok(t)}
            if self._stm_evicted:
                for t in self._iter_disk():
                    if ok(t):
                        found.setdefault(t.key(), t)
        return sorted(found.values(), key=_order)

    def subgraph(
        self,
        seeds: list[str],
        hops: int,
        max_nodes: int,
        predicates: set[str] | None = None,
        time_range: tuple[int, int] | None = None,
    ) -> Subgraph:
        """Hop-bounded breadth-first slice around the seed nodes.

        Edges are followed in either direction.  A seed is "known" when it is
        an endpoint of at least one triple passing the predicate/time filters;
        unknown seeds are ignored.  ``truncated`` flags that the node bound
        stopped expansion (checked in BFS discovery order).
        """
        if hops < 0:
            raise ValueError("hops must be >= 0")
        if max_nodes < len(seeds):
            raise ValueError("max_nodes must be >= number of seeds")
        candidates = [
            t
            for t in self.query_triples(time_range=time_range)
            if predicates is None or t.predicate in predicates
        ]
        adj: dict[str, list[tuple[Triple, str]]] = {}
        for t in candidates:  # already in query order, so adjacency lists stay sorted
            adj.setdefault(t.subject, []).append((t, t.object))
            adj.setdefault(t.object, []).append((t, t.subject))

        nodes: dict[str, None] = {}
        for s in seeds:
            if s in adj and s not in nodes:
                nodes[s] = None
        edges: dict[tuple, Triple] = {}
        truncated = False
        frontier = list(nodes)
        for _ in range(hops):
            nxt: list[str] = []
            for u in frontier:
                for edge, v in adj.get(u, []):
                    if v in nodes:
                        edges.setdefault(edge.key(), edge)
                    elif len(nodes) < max_nodes:
                        nodes[v] = None
                        nxt.append(v)
                        edges.setdefault(edge.key(), edge)
                    else:
                        truncated = True
            frontier = nxt
        return Subgraph(set(nodes), sorted(edges.values(), key=_order), truncated)

    # -- snapshot / eviction ----------------------------------------------

    def snapshot(self, now: int | None = None) -> str:
        """Write a full snapshot of the working set; returns the file name.

        The write goes through a temp file and rename, so a failure leaves any
        previous snapshot untouched.
        """
        with self._lock:
            if self._dir is None:
                raise ValueError("snapshot requires a data directory")
            ts = int(now if now is not None else time.time())
            header = {
                "created_at": ts,
                "log_records": self._log_records,
                "stm_evicted": self._stm_evicted,
            }
            lines = [json.dumps(header, sort_keys=True)]
            lines += [_record(t).rstrip("\n") for t in sorted(self._stm.values(), key=_order)]
            name = f"graph-{ts}.snap"
            atomic_write_text(self._dir / name, "\n".join(lines) + "\n")
            return name

    def evict(self, budget: StoreBudget, now: int | None = None) -> int:
        """Drop oldest data triples until within budget; cfg/* is exempt.

        The working-set phase only unloads from memory (history stays readable
        through the log); the byte-budget phase compacts the log permanently.
        ``now`` is accepted for interface stability and not used by the policy.
        """
        with self._lock:
            evicted: set[tuple] = set()
            data = sorted((t for t in self._stm.values() if not t.is_cfg()), key=_order)
            excess = len(data) - budget.max_stm_triples
            if excess > 0:
                for t in data[:excess]:
                    del self._stm[t.key()]
                    evicted.add(t.key())
                self._stm_evicted = True
            if self._dir is not None and self._ltm_bytes() > budget.max_ltm_bytes:
                snaps = self._snap_paths()
                latest = self._latest_snap()
                for p in snaps:  # old snapshots are redundant; cheapest space first
                    if p != latest:
                        p.unlink()
                if self._ltm_bytes() > budget.max_ltm_bytes:
                    evicted |= self._compact_ltm(budget.max_ltm_bytes)
            return len(evicted)
