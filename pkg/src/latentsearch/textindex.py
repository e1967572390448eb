"""Text cache plus inverted word index.

Stores versioned page texts (one version per (url, fetched_at)) and an
inverted index from word tokens to page versions.  Lookup is conjunctive:
a version qualifies only if it contains every distinct query word.  The
index is a shortlist mechanism; exact phrase semantics are re-checked by
the pattern matcher downstream.

Persistence mirrors the triple store: an append-only ``text.log`` of JSON
lines plus ``text-<epochseconds>.snap`` snapshots, restore = latest
snapshot + log suffix replay.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field
from threading import RLock

from .patterns import Token, tokenize
from .util import atomic_write_text, iter_jsonl, jsonl_line, stable_hash64

LOG_NAME = "text.log"
SNAP_PREFIX = "text-"
SNAP_SUFFIX = ".snap"


def content_hash(raw_text: str) -> str:
    return stable_hash64(raw_text)


@dataclass(frozen=True)
class CachedPage:
    url: str
    fetched_at: int
    content_hash: str
    text: str
    tokens: tuple[Token, ...] = field(compare=False)

    def counts(self) -> Counter:
        return Counter(t.text for t in self.tokens if t.kind != "punctuation")


def _page_from_record(rec: dict) -> CachedPage:
    text = rec["text"]
    return CachedPage(
        url=rec["url"],
        fetched_at=int(rec["fetched_at"]),
        content_hash=rec.get("hash") or content_hash(text),
        text=text,
        tokens=tuple(tokenize(text)),
    )


def _record(page: CachedPage) -> dict:
    return {
        "url": page.url,
        "fetched_at": page.fetched_at,
        "hash": page.content_hash,
        "text": page.text,
    }


class TextIndex:
    """In-memory inverted index over cached page versions, logged to disk."""

    def __init__(self, data_dir: str | None = None):
        self._lock = RLock()
        self._versions: dict[str, list[CachedPage]] = {}
        self._counts: dict[tuple[str, int], Counter] = {}
        self._postings: dict[str, set[tuple[str, int]]] = {}
        self._cycle_seen: set[tuple[str, str]] = set()
        self._data_dir = data_dir
        self._log_fh = None
        if data_dir is not None:
            os.makedirs(data_dir, exist_ok=True)
            self._restore()
            self._log_fh = open(os.path.join(data_dir, LOG_NAME), "a", encoding="utf-8")

    # -- persistence --

    def _log_path(self) -> str:
        return os.path.join(self._data_dir, LOG_NAME)

    def _snapshots(self) -> list[str]:
        names = [
            n
            for n in os.listdir(self._data_dir)
            if n.startswith(SNAP_PREFIX) and n.endswith(SNAP_SUFFIX)
        ]
        return sorted(names)

    def _restore(self) -> None:
        replay_from = 0
        snaps = self._snapshots()
        if snaps:
            latest = max(snaps, key=lambda n: (self._snap_header(n)["created_at"], n))
            header = None
            for rec in iter_jsonl(os.path.join(self._data_dir, latest)):
                if header is None:
                    header = rec
                    continue
                self._admit(_page_from_record(rec))
            replay_from = header["log_records"] if header else 0
        log = self._log_path()
        if os.path.exists(log):
            for i, rec in enumerate(iter_jsonl(log)):
                if i < replay_from:
                    continue
                self._admit(_page_from_record(rec))

    def _snap_header(self, name: str) -> dict:
        with open(os.path.join(self._data_dir, name), encoding="utf-8") as fh:
            return json.loads(fh.readline())

    def _log_record_count(self) -> int:
        log = self._log_path()
        if not os.path.exists(log):
            return 0
        return sum(1 for _ in iter_jsonl(log))

    def snapshot(self, now: int | None = None) -> str:
        """Write a full snapshot; restore = this file + later log records."""
        if self._data_dir is None:
            raise ValueError("snapshot requires a data directory")
        with self._lock:
            if self._log_fh is not None:
                self._log_fh.flush()
                os.fsync(self._log_fh.fileno())
            pages = sorted(
                (p for vs in self._versions.values() for p in vs),
                key=lambda p: (p.url, p.fetched_at),
            )
            if now is None:
                import time

                now = int(time.time())
            header = {"created_at": now, "log_records": self._log_record_count()}
            name = f"{SNAP_PREFIX}{now}{SNAP_SUFFIX}"
            body = jsonl_line(header) + "".join(jsonl_line(_record(p)) for p in pages)
            atomic_write_text(os.path.join(self._data_dir, name), body)
            return name

    def evict(self, max_bytes: int) -> int:
        """Drop oldest page versions until the log fits in max_bytes."""
        if self._data_dir is None:
            return 0
        with self._lock:
            if self._log_fh is not None:
                self._log_fh.flush()
            log = self._log_path()
            if not os.path.exists(log) or os.path.getsize(log) <= max_bytes:
                return 0
            pages = sorted(
                (p for vs in self._versions.values() for p in vs),
                key=lambda p: (p.fetched_at, p.url),
            )
            keep: list[CachedPage] = list(pages)
            dropped = 0
            size = sum(len(jsonl_line(_record(p)).encode("utf-8")) for p in keep)
            while keep and size > max_bytes:
                victim = keep.pop(0)
                size -= len(jsonl_line(_record(victim)).encode("utf-8"))
                self._forget(victim)
                dropped += 1
            if self._log_fh is not None:
                self._log_fh.close()
            atomic_write_text(log, "".join(jsonl_line(_record(p)) for p in keep))
            self._log_fh = open(log, "a", encoding="utf-8")
            for name in self._snapshots():
                os.remove(os.path.join(self._data_dir, name))
            return dropped

    # -- in-memory maintenance --

    def _admit(self, page: CachedPage) -> None:
        versions = self._versions.setdefault(page.url, [])
        for idx, existing in enumerate(versions):
            if existing.fetched_at == page.fetched_at:
                self._forget(existing)
                versions = self._versions.setdefault(page.url, [])
                break
        versions.append(page)
        versions.sort(key=lambda p: p.fetched_at)
        key = (page.url, page.fetched_at)
        counts = page.counts()
        self._counts[key] = counts
        for word in counts:
            self._postings.setdefault(word, set()).add(key)

    def _forget(self, page: CachedPage) -> None:
        key = (page.url, page.fetched_at)
        counts = self._counts.pop(key, None)
        if counts:
            for word in counts:
                bucket = self._postings.get(word)
                if bucket:
                    bucket.discard(key)
                    if not bucket:
                        del self._postings[word]
        versions = self._versions.get(page.url)
        if versions:
            self._versions[page.url] = [p for p in versions if p.fetched_at != page.fetched_at]
            if not self._versions[page.url]:
                del self._versions[page.url]

    # -- operations --

    def begin_cycle(self) -> None:
        """Reset the per-cycle dedup window."""
        with self._lock:
            self._cycle_seen.clear()

    def index_page(self, url: str, raw_text: str, fetched_at: int) -> CachedPage | None:
        """Cache and index one page version.

        Returns the stored version, or None when the same (url, content)
        was already indexed in the current cycle.
        """
        digest = content_hash(raw_text)
        with self._lock:
            if (url, digest) in self._cycle_seen:
                return None
            self._cycle_seen.add((url, digest))
            existing = self._versions.get(url, [])
            if existing and existing[-1].content_hash == digest and existing[-1].fetched_at == fetched_at:
                return existing[-1]
            page = CachedPage(url, int(fetched_at), digest, raw_text, tuple(tokenize(raw_text)))
            self._admit(page)
            if self._log_fh is not None:
                self._log_fh.write(jsonl_line(_record(page)))
                self._log_fh.flush()
            return page

    def lookup(
        self,
        query_tokens: list[Token],
        time_range: tuple[int, int] | None = None,
        limit: int = 10,
    ) -> list[tuple[str, int]]:
        """Versions containing ALL distinct query words, best first.

        Ranked by total query-word occurrences, ties broken by recency
        then URL.  Punctuation tokens in the query are ignored.
        """
        words = sorted({t.text for t in query_tokens if t.kind != "punctuation"})
        if not words or limit < 1:
            return []
        with self._lock:
            candidates: set[tuple[str, int]] | None = None
            for word in words:
                bucket = self._postings.get(word)
                if not bucket:
                    return []
                candidates = set(bucket) if candidates is None else candidates & bucket
                if not candidates:
                    return []
            hits = []
            for key in candidates:
                url, fetched_at = key
                if time_range is not None and not (time_range[0] <= fetched_at <= time_range[1]):
                    continue
                score = sum(self._counts[key][w] for w in words)
                hits.append((score, fetched_at, url))
            hits.sort(key=lambda h: (-h[0], -h[1], h[2]))
            return [(url, fetched_at) for _, fetched_at, url in hits[:limit]]

    def get_cached_text(self, url: str, at_or_before: int | None = None) -> CachedPage | None:
        """Latest version with fetched_at <= at_or_before (default: newest)."""
        with self._lock:
            versions = self._versions.get(url)
            if not versions:
                return None
            if at_or_before is None:
                return versions[-1]
            best = None
            for page in versions:
                if page.fetched_at <= at_or_before:
                    best = page
            return best

    def all_urls(self) -> list[str]:
        with self._lock:
            return sorted(self._versions)

    def close(self) -> None:
        with self._lock:
            if self._log_fh is not None:
                self._log_fh.close()
                self._log_fh = None
