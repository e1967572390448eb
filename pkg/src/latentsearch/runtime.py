"""Agent runtime: topic configuration, scheduled cycles, ad-hoc search, RSS.

One Agent owns a data directory (triple store + text index share it), an
environment (live or mock), and a pattern registry built from configured
topics.  The scheduler divides each cycle's time budget evenly over due
(topic, url) pairs; only findings whose id was never stored before count
as new, and each new finding triggers one webhook POST when configured.

Configuration lives in the graph under the eviction-exempt cfg/*
namespace: topics as JSON documents, per-pair last-run marks, trust lists
and webhooks per user.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace

from .graph import StoreBudget, Triple, TripleStore
from .patterns import (
    Pattern,
    PatternRegistry,
    Sequence,
    Word,
    extract_entities,
    match_pattern,
    parse_pattern,
    serialize_pattern,
    tokenize,
)
from .relevance import (
    NEG,
    POS,
    effective_feedback,
    mine_patterns,
    rank_feed,
    record_feedback,
)
from .search import (
    Finding,
    SearchConstraints,
    TopicSpec,
    finding_id,
    search_topic,
)
from .textindex import TextIndex
from .webenv import LiveEnvironment

TOPIC_PREFIX = "cfg/topic/"
LAST_RUN = "cfg/last_run"
WEBHOOK = "cfg/webhook"
DEFAULT_USER = "default"
MIN_QUOTA_MS = 100
MIN_PERIOD = 60
DEFAULT_CYCLE_FRACTION = 0.2


class UnknownScope(ValueError):
    pass


@dataclass
class Topic:
    name: str
    pattern_source: str
    starting_urls: list[str]
    period: int = 3600
    constraints: SearchConstraints = field(default_factory=SearchConstraints)
    enabled: bool = True

    def validate(self) -> Pattern:
        if not self.name:
            raise ValueError("topic name required")
        if self.period < MIN_PERIOD:
            raise ValueError(f"period must be >= {MIN_PERIOD}s")
        if self.enabled and not self.starting_urls:
            raise ValueError("an enabled topic needs at least one starting URL")
        return parse_pattern(self.pattern_source, name=self.name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pattern": self.pattern_source,
            "urls": list(self.starting_urls),
            "period": self.period,
            "constraints": asdict(self.constraints),
            "enabled": self.enabled,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Topic":
        constraints = SearchConstraints(**data.get("constraints", {}))
        return cls(
            name=data["name"],
            pattern_source=data.get("pattern", ""),
            starting_urls=list(data.get("urls", [])),
            period=int(data.get("period", 3600)),
            constraints=constraints,
            enabled=bool(data.get("enabled", True)),
        )


@dataclass(frozen=True)
class Quota:
    topic: str
    url: str
    budget: int  # milliseconds
    due_at: int


class _IndexingEnv:
    """Wrap an environment so every fetched page lands in the text index."""

    def __init__(self, inner, index: TextIndex):
        self._inner = inner
        self._index = index

    def fetch(self, url: str):
        page = self._inner.fetch(url)
        self._index.index_page(page.url, page.text, page.fetched_at)
        return page

    def __getattr__(self, name):
        return getattr(self._inner, name)


def default_webhook_poster(url: str, payload: dict) -> str | None:
    """POST the payload as JSON; returns an error string instead of raising."""
    import requests

    try:
        requests.post(url, json=payload, timeout=5)
        return None
    except requests.exceptions.RequestException as exc:
        return str(exc)


class Agent:
    def __init__(
        self,
        data_dir: str | None = None,
        env=None,
        webhook_poster=None,
        clock=None,
        budget: StoreBudget | None = None,
    ):
        self.data_dir = data_dir
        self.store = TripleStore(data_dir=data_dir, budget=budget)
        self.index = TextIndex(data_dir=data_dir)
        raw_env = env if env is not None else LiveEnvironment()
        self.env = _IndexingEnv(raw_env, self.index)
        self.registry = PatternRegistry()
        self._poster = webhook_poster or default_webhook_poster
        self._clock = clock
        self._refresh_registry()

    def close(self) -> None:
        self.store.close()
        self.index.close()

    def now(self) -> int:
        if self._clock is not None:
            return int(self._clock())
        env_now = getattr(self.env, "now", None)
        if callable(env_now):
            return env_now()
        return int(time.time())

    # -- topic configuration --

    def _put_config(self, subject: str, predicate: str, obj: str) -> None:
        """Config rows resolve by latest timestamp, so writes in the same
        second must still be ordered; bump past the existing row if needed."""
        at = self.now()
        rows = self.store.query_triples(subject=subject, predicate=predicate)
        if rows and rows[-1].at >= at:
            at = rows[-1].at + 1
        self.store.put_triples([Triple(subject, predicate, obj, at)])

    def upsert_topic(self, user: str, topic: Topic) -> dict:
        pattern = topic.validate()
        self.registry.define(topic.name, pattern)
        self._put_config(
            _user_node(user),
            TOPIC_PREFIX + topic.name,
            json.dumps(topic.to_dict(), sort_keys=True),
        )
        return topic.to_dict()

    def remove_topic(self, user: str, name: str) -> bool:
        existing = {t.name for t in self.list_topics(user)}
        if name not in existing:
            return False
        self._put_config(_user_node(user), TOPIC_PREFIX + name, "null")
        return True

    def list_topics(self, user: str) -> list[Topic]:
        rows = [
            r
            for r in self.store.query_triples(subject=_user_node(user))
            if r.predicate.startswith(TOPIC_PREFIX)
        ]
        latest: dict[str, Triple] = {}
        for row in rows:  # rows are time-ordered; later rows overwrite
            latest[row.predicate] = row
        topics = []
        for row in latest.values():
            try:
                data = json.loads(row.object)
            except ValueError:
                continue
            if not data:  # tombstone
                continue
            topics.append(Topic.from_dict(data))
        topics.sort(key=lambda t: t.name)
        return topics

    def users(self) -> list[str]:
        found = set()
        for row in self.store.query_triples():
            if row.predicate.startswith(TOPIC_PREFIX) and row.subject.startswith("user:"):
                found.add(row.subject[len("user:") :])
        return sorted(found) or [DEFAULT_USER]

    def set_webhook(self, user: str, url: str) -> None:
        self._put_config(_user_node(user), WEBHOOK, url)

    def get_webhook(self, user: str) -> str | None:
        rows = self.store.query_triples(subject=_user_node(user), predicate=WEBHOOK)
        if not rows:
            return None
        return rows[-1].object or None

    def _refresh_registry(self) -> None:
        for user in self.users():
            for topic in self.list_topics(user):
                try:
                    self.registry.define(topic.name, parse_pattern(topic.pattern_source, name=topic.name))
                except ValueError:
                    continue

    # -- scheduling --

    def last_run(self, user: str, topic: str, url: str) -> int | None:
        subject = f"sched:{user}:{topic}:{url}"
        rows = self.store.query_triples(subject=subject, predicate=LAST_RUN)
        if not rows:
            return None
        try:
            return int(rows[-1].object)
        except ValueError:
            return None

    def mark_run(self, user: str, topic: str, url: str, at: int) -> None:
        subject = f"sched:{user}:{topic}:{url}"
        self.store.put_triples([Triple(subject, LAST_RUN, str(at), at)])

    def compute_quotas(self, user: str, cycle_budget: int, now: int) -> list[Quota]:
        """Evenly split the cycle budget over due (topic, url) pairs.

        Every due pair gets at least MIN_QUOTA_MS even when that overshoots
        the nominal budget; a floor below that starves searches entirely.
        """
        if cycle_budget <= 0:
            raise ValueError("cycle_budget must be positive")
        due: list[tuple[str, str, int]] = []
        for topic in self.list_topics(user):
            if not topic.enabled:
                continue
            for url in topic.starting_urls:
                last = self.last_run(user, topic.name, url)
                due_at = now if last is None else last + topic.period
                if now >= due_at:
                    due.append((topic.name, url, due_at))
        due.sort(key=lambda d: (d[0], d[1]))
        if not due:
            return []
        budget = max(cycle_budget // len(due), MIN_QUOTA_MS)
        return [Quota(topic, url, budget, due_at) for topic, url, due_at in due]

    def default_cycle_budget(self, user: str) -> int:
        periods = [t.period for t in self.list_topics(user) if t.enabled]
        if not periods:
            return MIN_QUOTA_MS
        return max(MIN_QUOTA_MS, int(DEFAULT_CYCLE_FRACTION * min(periods) * 1000))

    def run_cycle(self, now: int | None = None, cycle_budget: int | None = None) -> dict:
        """One scheduler pass: run every due quota, report what is new."""
        if now is None:
            now = self.now()
        self.index.begin_cycle()
        known_ids = {
            row.subject for row in self.store.query_triples(predicate="finding/topic")
        }
        report = {
            "now": now,
            "new_findings": [],
            "fetches": 0,
            "errors": [],
            "quotas": 0,
        }
        seen_this_cycle: set[str] = set()
        for user in self.users():
            topics = {t.name: t for t in self.list_topics(user)}
            budget = cycle_budget if cycle_budget is not None else self.default_cycle_budget(user)
            quotas = self.compute_quotas(user, budget, now)
            report["quotas"] += len(quotas)
            webhook = self.get_webhook(user)
            for quota in quotas:
                topic = topics[quota.topic]
                try:
                    pattern = self.registry.get(topic.name) or parse_pattern(
                        topic.pattern_source, name=topic.name
                    )
                    spec = TopicSpec(topic.name, pattern, [quota.url])
                    constraints = replace(topic.constraints, time_budget=quota.budget)
                    outcome = search_topic(
                        self.env, spec, constraints, self.store, self.registry, now
                    )
                except Exception as exc:  # quota isolation
                    report["errors"].append([quota.url, f"error:{exc}"])
                    self.mark_run(user, quota.topic, quota.url, now)
                    continue
                report["fetches"] += outcome.fetches
                report["errors"].extend(list(e) for e in outcome.errors)
                self._record_fetch_errors(outcome.errors, now)
                for finding in outcome.results:
                    node = "finding:" + finding.id
                    if node in known_ids or node in seen_this_cycle:
                        continue
                    seen_this_cycle.add(node)
                    report["new_findings"].append(finding.to_dict())
                    if webhook:
                        err = self._poster(webhook, finding.to_dict())
                        if err:
                            report["errors"].append([webhook, f"webhook:{err}"])
                self.mark_run(user, quota.topic, quota.url, now)
        return report

    def _record_fetch_errors(self, errors: list[tuple[str, str]], now: int) -> None:
        triples = [Triple(url, "fetch_error", code, now) for url, code in errors]
        if triples:
            self.store.put_triples(triples)

    # -- findings and feed --

    def load_findings(self) -> list[Finding]:
        rows = self.store.query_triples(predicate="finding/topic")
        at_by_subject: dict[str, int] = {}
        topic_by_subject: dict[str, str] = {}
        for row in rows:
            at_by_subject[row.subject] = max(row.at, at_by_subject.get(row.subject, row.at))
            topic_by_subject[row.subject] = row.object
        findings = []
        for subject in sorted(at_by_subject):
            props = {}
            for row in self.store.query_triples(subject=subject):
                props[row.predicate] = row.object  # time-ordered; latest wins
            snippet = props.get("finding/snippet", "")
            findings.append(
                Finding(
                    id=subject[len("finding:") :],
                    topic=topic_by_subject[subject],
                    url=props.get("finding/url", ""),
                    snippet=snippet,
                    bindings={},
                    image=props.get("finding/image"),
                    at=at_by_subject[subject],
                )
            )
        return findings

    def feed(self, user: str, limit: int = 20, topic: str | None = None) -> list[dict]:
        """Ranked feed items; negatively checked items are hidden."""
        findings = self.load_findings()
        if topic is not None:
            findings = [f for f in findings if f.topic == topic]
        marks = effective_feedback(self.store, user)
        visible = [f for f in findings if marks.get("finding:" + f.id, 0) >= 0]
        ranked = rank_feed(self.store, user, visible)
        items = []
        for entry in ranked[: max(0, limit)]:
            item = entry.to_dict()
            item["checked"] = marks.get("finding:" + entry.finding.id, 0) > 0
            items.append(item)
        return items

    def give_feedback(self, user: str, finding: str, polarity: int) -> dict:
        # two opinions on one finding in the same second must keep their order
        at = self.now()
        node = finding if finding.startswith("finding:") else "finding:" + finding
        prior = [
            r
            for r in self.store.query_triples(subject=_user_node(user))
            if r.predicate in (POS, NEG) and r.object == node
        ]
        if prior and prior[-1].at >= at:
            at = prior[-1].at + 1
        profile = record_feedback(self.store, user, finding, polarity, at)
        return {"user": user, "finding": finding, "polarity": polarity, "weights": profile.weights}

    def mined(self, user: str, min_support: int) -> list[dict]:
        return [
            {"pattern": serialize_pattern(p), "support": support}
            for p, support in mine_patterns(self.store, user, min_support)
        ]

    # -- ad-hoc search --

    def adhoc_search(
        self,
        user: str,
        query: str,
        scope: str = "auto",
        constraints: SearchConstraints | None = None,
        url: str | None = None,
        limit: int = 20,
    ) -> dict:
        """Escalating search: stored findings, then the index, then live on request."""
        pattern = parse_pattern(query)
        constraints = constraints or SearchConstraints()
        if scope not in ("auto", "findings", "index", "live"):
            raise UnknownScope(scope)
        tiers = {"auto": ["findings", "index"], "findings": ["findings"], "index": ["index"], "live": ["live"]}[scope]
        fetches = 0
        found: list[Finding] = []
        tier_used = None
        for tier in tiers:
            if tier == "findings":
                found = self._search_stored(pattern)
            elif tier == "index":
                found = self._search_index(pattern)
            elif tier == "live":
                if not url:
                    raise ValueError("live scope requires a URL")
                spec = TopicSpec(pattern.name or query, pattern, [url])
                outcome = search_topic(self.env, spec, constraints, self.store, self.registry, self.now())
                found = outcome.results
                fetches = outcome.fetches
            if found:
                tier_used = tier
                break
            tier_used = tier
        ranked = rank_feed(self.store, user, found)
        return {
            "query": query,
            "scope": tier_used,
            "fetches": fetches,
            "results": [r.to_dict() for r in ranked[: max(0, limit)]],
        }

    def _search_stored(self, pattern: Pattern) -> list[Finding]:
        out = []
        for finding in self.load_findings():
            if match_pattern(pattern, tokenize(finding.snippet), self.registry):
                out.append(finding)
        return out

    def _search_index(self, pattern: Pattern) -> list[Finding]:
        words = _literal_words(pattern.root)
        if words:
            hits = self.index.lookup([t for w in words for t in tokenize(w)], limit=100)
        else:
            hits = []
            for url in self.index.all_urls():
                page = self.index.get_cached_text(url)
                if page is not None:
                    hits.append((url, page.fetched_at))
        name = pattern.name or serialize_pattern(pattern)
        found = []
        entity_triples = []
        for url, fetched_at in hits:
            page = self.index.get_cached_text(url, fetched_at)
            if page is None:
                continue
            matches = match_pattern(pattern, list(page.tokens), self.registry)
            if not matches:
                continue
            first = matches[0]
            found.append(
                Finding(
                    id=finding_id(name, url, first.snippet),
                    topic=name,
                    url=url,
                    snippet=first.snippet,
                    bindings=dict(first.bindings),
                    image=None,
                    at=fetched_at,
                )
            )
            for m in matches:
                if m.bindings:
                    entity_triples.extend(extract_entities(pattern, m, url, fetched_at))
        if entity_triples:
            self.store.put_triples(entity_triples)
        return found

    # -- graph access --

    def graph_slice(
        self,
        seeds: list[str],
        hops: int = 2,
        max_nodes: int = 100,
        t0: int | None = None,
        t1: int | None = None,
        predicates: list[str] | None = None,
    ) -> dict:
        time_range = None
        if t0 is not None or t1 is not None:
            time_range = (t0 if t0 is not None else 0, t1 if t1 is not None else 2**62)
        sub = self.store.subgraph(
            seeds,
            hops=hops,
            max_nodes=max_nodes,
            predicates=set(predicates) if predicates else None,
            time_range=time_range,
        )
        return {
            "nodes": sorted(sub.nodes),
            "edges": [[e.subject, e.predicate, e.object, e.at] for e in sub.edges],
            "truncated": sub.truncated,
        }

    # -- RSS --

    def render_rss(self, topic: str | None = None, user: str = DEFAULT_USER, limit: int = 20) -> str:
        items = self.feed(user, limit=limit, topic=topic)
        return render_rss_document(topic or "feed", items)


def _user_node(user: str) -> str:
    return user if user.startswith("user:") else "user:" + user


def _literal_words(node) -> list[str]:
    """Word literals usable as conjunctive lookup terms.

    Only words that every match must contain qualify: sequence members,
    but not alternatives (AnyOf) or anything below them.
    """
    if isinstance(node, Word):
        return [node.text]
    if isinstance(node, Sequence):
        out = []
        for child in node.children:
            out.extend(_literal_words(child))
        return out
    return []


TITLE_LIMIT = 120


def render_rss_document(title: str, items: list[dict]) -> str:
    """RSS 2.0 document; one item per feed entry, in given (rank) order."""
    import xml.etree.ElementTree as ET
    from email.utils import formatdate

    rss = ET.Element("rss", version="2.0")
    channel = ET.SubElement(rss, "channel")
    ET.SubElement(channel, "title").text = f"latentsearch: {title}"
    ET.SubElement(channel, "link").text = "http://localhost/"
    ET.SubElement(channel, "description").text = "Latent search findings"
    for entry in items:
        item = ET.SubElement(channel, "item")
        snippet = entry.get("snippet", "")
        ET.SubElement(item, "title").text = snippet[:TITLE_LIMIT]
        ET.SubElement(item, "link").text = entry.get("url", "")
        ET.SubElement(item, "description").text = snippet
        guid = ET.SubElement(item, "guid", isPermaLink="false")
        guid.text = entry.get("id", "")
        ET.SubElement(item, "pubDate").text = formatdate(entry.get("at", 0), usegmt=True)
        image = entry.get("image")
        if image:
            ET.SubElement(item, "enclosure", url=image, length="0", type=_image_type(image))
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(rss, encoding="unicode")


def _image_type(url: str) -> str:
    import mimetypes

    guessed = mimetypes.guess_type(url)[0]
    return guessed if guessed and guessed.startswith("image/") else "image/jpeg"
