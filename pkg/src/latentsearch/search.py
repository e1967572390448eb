"""Adaptive targeted search: exploit known paths, explore to learn new ones.

A Path is a chain of link patterns (token sets) known to lead from an
origin page to goal matches.  ``path_tracker`` replays known paths,
cheapest first, burning out each consumed head; when nothing is found at
the top level it falls back to ``path_finder``, a depth-first exploration
that retains the chain of followed links as a proven Path whenever the
goal matches.  Both honor depth, wall-clock, fetch-count, and same-domain
constraints, and both terminate on cyclic graphs via a visited set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .graph import Triple, TripleStore
from .patterns import (
    Pattern,
    PatternRegistry,
    extract_entities,
    match_pattern,
    serialize_pattern,
)
from .util import stable_hash64
from .webenv import FetchError, PageContext, same_domain

PATH_PREDICATE_PREFIX = "path/"


@dataclass(frozen=True)
class Path:
    steps: tuple[frozenset[str], ...]
    proven_at: int = 0
    uses: int = 1

    def step_key(self) -> tuple[tuple[str, ...], ...]:
        return tuple(tuple(sorted(s)) for s in self.steps)


@dataclass
class PathSet:
    goal: str
    origin: str
    paths: list[Path] = field(default_factory=list)


@dataclass(frozen=True)
class SearchConstraints:
    modality: str = "exhaustive"  # "quick" | "exhaustive"
    max_depth: int = 3
    time_budget: int = 60_000  # milliseconds
    same_domain_only: bool = False
    max_fetches: int = 200


@dataclass(frozen=True)
class Finding:
    id: str
    topic: str
    url: str
    snippet: str
    bindings: dict
    image: str | None
    at: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "topic": self.topic,
            "url": self.url,
            "snippet": self.snippet,
            "bindings": dict(self.bindings),
            "image": self.image,
            "at": self.at,
        }


@dataclass
class SearchOutcome:
    results: list[Finding] = field(default_factory=list)
    new_paths: list[Path] = field(default_factory=list)
    fetches: int = 0
    exhausted: str | None = None  # None | "time" | "depth" | "fetches"
    errors: list[tuple[str, str]] = field(default_factory=list)
    used_finder: bool = False


def finding_id(topic: str, url: str, snippet: str) -> str:
    return stable_hash64(topic, url, snippet)


def make_finding(topic: str, page: PageContext, snippet: str, bindings: dict) -> Finding:
    return Finding(
        id=finding_id(topic, page.url, snippet),
        topic=topic,
        url=page.url,
        snippet=snippet,
        bindings=dict(bindings),
        image=page.image,
        at=page.fetched_at,
    )


class _Blocked:
    """Cache sentinel for URLs whose fetch failed."""

    def __init__(self, code: str):
        self.code = code


class _Session:
    """Shared state for one traversal family (tracker plus its finder fallback)."""

    def __init__(self, env, goal: Pattern, constraints: SearchConstraints, registry: PatternRegistry | None):
        self.env = env
        self.goal = goal
        self.goal_name = goal.name or serialize_pattern(goal)
        self.c = constraints
        self.registry = registry
        self.t0 = env.clock_ms()
        self.fetches = 0
        self.pages: dict[str, PageContext | _Blocked] = {}
        self.errors: list[tuple[str, str]] = []
        self.exhausted: str | None = None
        self.outcome = SearchOutcome()
        self.seen_results: set[str] = set()

    def note_exhausted(self, cause: str) -> None:
        if self.exhausted is None:
            self.exhausted = cause

    def over_time(self) -> bool:
        if self.env.clock_ms() - self.t0 >= self.c.time_budget:
            self.note_exhausted("time")
            return True
        return False

    def get_page(self, url: str) -> PageContext | None:
        """Fetch through the session cache; None when blocked or out of budget."""
        cached = self.pages.get(url)
        if cached is not None:
            return None if isinstance(cached, _Blocked) else cached
        if self.over_time():
            return None
        if self.fetches >= self.c.max_fetches:
            self.note_exhausted("fetches")
            return None
        self.fetches += 1
        try:
            page = self.env.fetch(url)
        except FetchError as exc:
            self.pages[url] = _Blocked(exc.code)
            self.errors.append((url, exc.code))
            return None
        self.pages[url] = page
        return page

    def match_page(self, page: PageContext) -> bool:
        """Record a Finding for the page when the goal matches. True on match."""
        matches = match_pattern(self.goal, list(page.tokens), self.registry)
        if not matches:
            return False
        first = matches[0]
        finding = make_finding(self.goal_name, page, first.snippet, first.bindings)
        if finding.id not in self.seen_results:
            self.seen_results.add(finding.id)
            self.outcome.results.append(finding)
        return True

    def in_scope(self, start: str, url: str) -> bool:
        if not self.c.same_domain_only:
            return True
        try:
            return same_domain(start, url)
        except ValueError:
            return False


def _link_matches(step: frozenset[str], link_tokens) -> bool:
    """A stored link pattern matches when its token set is a subset of the link's."""
    return step <= {t.text for t in link_tokens}


def path_finder(
    env,
    goal: Pattern,
    start: str,
    constraints: SearchConstraints,
    registry: PatternRegistry | None = None,
    _session: _Session | None = None,
) -> SearchOutcome:
    """Explore depth-first from `start`, learning link paths to goal matches."""
    session = _session or _Session(env, goal, constraints, registry)
    best_depth: dict[str, int] = {}
    retained: set[tuple[tuple[str, ...], ...]] = set()

    def dfs(url: str, chain: tuple[frozenset[str], ...], depth: int) -> bool:
        """Returns True when quick modality should stop the whole traversal."""
        prior = best_depth.get(url)
        if prior is not None and prior <= depth:
            return False
        first_visit = prior is None
        best_depth[url] = depth
        page = session.get_page(url)
        if page is None:
            return False
        if first_visit and session.match_page(page):
            if chain:
                path = Path(steps=chain, proven_at=page.fetched_at, uses=1)
                key = path.step_key()
                if key not in retained:
                    retained.add(key)
                    session.outcome.new_paths.append(path)
            if session.c.modality == "quick":
                return True
        for link in page.links:
            if not session.in_scope(start, link.href):
                continue
            if depth + 1 > session.c.max_depth:
                session.note_exhausted("depth")
                continue
            if session.over_time():
                return False
            step = frozenset(t.text for t in link.tokens)
            if not step:
                step = frozenset({""})  # unlabeled link still walkable
            if dfs(link.href, chain + (step,), depth + 1):
                return True
        return False

    dfs(start, (), 0)
    out = session.outcome
    out.fetches = session.fetches
    out.exhausted = session.exhausted
    out.errors = list(session.errors)
    return out


def path_tracker(
    env,
    goal: Pattern,
    start: str,
    known: PathSet,
    constraints: SearchConstraints,
    registry: PatternRegistry | None = None,
    burnout: str = "head",  # "head" | "path"
) -> SearchOutcome:
    """Replay known paths toward the goal, falling back to path_finder."""
    if known.goal and goal.name and known.goal != goal.name:
        raise ValueError(f"path set is for goal {known.goal!r}, not {goal.name!r}")
    session = _Session(env, goal, constraints, registry)
    visited: set[str] = set()

    def track(url: str, paths: list[Path], depth: int) -> bool:
        """Returns True when quick modality should stop."""
        if url in visited:
            return False
        visited.add(url)
        page = session.get_page(url)
        if page is None:
            return False
        matched = session.match_page(page)
        if matched and session.c.modality == "quick":
            return True
        # shortest paths first, then deterministic by serialized steps
        remaining = sorted(paths, key=lambda p: (len(p.steps), p.step_key()))
        burned: set = set()
        while remaining:
            current = remaining[0]
            head = current.steps[0]
            if head in burned:
                remaining.pop(0)
                continue
            hit = None
            for link in page.links:
                if not session.in_scope(start, link.href):
                    continue
                if _link_matches(head, link.tokens):
                    hit = link
                    break
            if hit is None:
                remaining.pop(0)
                burned.add(head)
                continue
            if depth + 1 > session.c.max_depth:
                session.note_exhausted("depth")
                break
            if session.over_time():
                break
            if burnout == "path":
                group = [current]
                remaining.pop(0)
            else:
                group = [p for p in remaining if p.steps[0] == head]
                remaining = [p for p in remaining if p.steps[0] != head]
                burned.add(head)
            tails = [
                replace(p, steps=p.steps[1:])
                for p in group
                if len(p.steps) > 1
            ]
            if track(hit.href, tails, depth + 1):
                return True
        return False

    stop = track(start, list(known.paths), 0)
    out = session.outcome
    if not out.results and not stop:
        finder_out = path_finder(env, goal, start, constraints, registry, _session=session)
        finder_out.used_finder = True
        finder_out.fetches = session.fetches
        return finder_out
    out.fetches = session.fetches
    out.exhausted = session.exhausted
    out.errors = list(session.errors)
    return out


# -- path set persistence -----------------------------------------------------


def merge_path_sets(known: PathSet, found: list[Path]) -> PathSet:
    """Union by step-list equality; duplicates add up their use counts."""
    by_key: dict[tuple, Path] = {p.step_key(): p for p in known.paths}
    for path in found:
        key = path.step_key()
        if key in by_key:
            old = by_key[key]
            by_key[key] = Path(
                steps=old.steps,
                proven_at=max(old.proven_at, path.proven_at),
                uses=old.uses + path.uses,
            )
        else:
            by_key[key] = path
    merged = sorted(by_key.values(), key=lambda p: (len(p.steps), p.step_key()))
    return PathSet(goal=known.goal, origin=known.origin, paths=merged)


def save_path_set(store: TripleStore, path_set: PathSet, now: int) -> None:
    triples = []
    for path in path_set.paths:
        payload = json.dumps(
            {
                "steps": [sorted(s) for s in path.steps],
                "uses": path.uses,
                "proven_at": path.proven_at,
            },
            sort_keys=True,
        )
        triples.append(
            Triple(path_set.origin, PATH_PREDICATE_PREFIX + path_set.goal, payload, now)
        )
    if triples:
        store.put_triples(triples)


def load_path_set(store: TripleStore, origin: str, goal: str) -> PathSet:
    """Latest stored record per step-list wins, so use counts never inflate."""
    rows = store.query_triples(subject=origin, predicate=PATH_PREDICATE_PREFIX + goal)
    latest: dict[tuple, tuple[int, Path]] = {}
    for row in rows:
        try:
            payload = json.loads(row.object)
            steps = tuple(frozenset(step) for step in payload["steps"])
            if not steps or any(not s for s in steps):
                continue
            path = Path(steps=steps, proven_at=int(payload.get("proven_at", row.at)), uses=int(payload.get("uses", 1)))
        except (ValueError, KeyError, TypeError):
            continue
        key = path.step_key()
        if key not in latest or row.at >= latest[key][0]:
            latest[key] = (row.at, path)
    paths = sorted((p for _, p in latest.values()), key=lambda p: (len(p.steps), p.step_key()))
    return PathSet(goal=goal, origin=origin, paths=paths)


# -- topic-level search --------------------------------------------------------


@dataclass
class TopicSpec:
    name: str
    pattern: Pattern
    starting_urls: list[str]


def search_topic(
    env,
    topic: TopicSpec,
    constraints: SearchConstraints,
    store: TripleStore | None = None,
    registry: PatternRegistry | None = None,
    now: int | None = None,
) -> SearchOutcome:
    """Run path_tracker from every starting URL; merge, store, report."""
    if not topic.starting_urls:
        raise ValueError("topic has no starting URLs")
    goal = topic.pattern if topic.pattern.name else Pattern(topic.pattern.root, name=topic.name)
    per_url = replace(
        constraints,
        time_budget=max(1, constraints.time_budget // len(topic.starting_urls)),
    )
    combined = SearchOutcome()
    seen_ids: set[str] = set()
    for start in topic.starting_urls:
        known = (
            load_path_set(store, start, goal.name)
            if store is not None
            else PathSet(goal=goal.name, origin=start)
        )
        try:
            outcome = path_tracker(env, goal, start, known, per_url, registry)
        except Exception as exc:  # per-URL isolation
            combined.errors.append((start, f"error:{exc}"))
            continue
        combined.fetches += outcome.fetches
        combined.errors.extend(outcome.errors)
        combined.used_finder = combined.used_finder or outcome.used_finder
        if outcome.exhausted and combined.exhausted is None:
            combined.exhausted = outcome.exhausted
        for finding in outcome.results:
            if finding.id not in seen_ids:
                seen_ids.add(finding.id)
                combined.results.append(finding)
        combined.new_paths.extend(outcome.new_paths)
        if store is not None and outcome.new_paths:
            merged = merge_path_sets(known, outcome.new_paths)
            save_path_set(store, merged, now if now is not None else _env_now(env))
    if store is not None:
        _store_findings(store, env, goal, combined.results, registry)
    return combined


def _env_now(env) -> int:
    now = getattr(env, "now", None)
    if callable(now):
        return now()
    import time

    return int(time.time())


def finding_triples(finding: Finding) -> list[Triple]:
    subject = "finding:" + finding.id
    triples = [
        Triple(subject, "finding/topic", finding.topic, finding.at),
        Triple(subject, "finding/url", finding.url, finding.at),
        Triple(subject, "finding/snippet", finding.snippet, finding.at),
    ]
    if finding.image:
        triples.append(Triple(subject, "finding/image", finding.image, finding.at))
    return triples


def _store_findings(store, env, goal: Pattern, findings: list[Finding], registry) -> None:
    from .patterns import tokenize

    triples: list[Triple] = []
    for finding in findings:
        triples.extend(finding_triples(finding))
        if finding.bindings:
            # re-match within the stored snippet; ids stay stable per content
            matches = match_pattern(goal, tokenize(finding.snippet), registry)
            if matches:
                triples.extend(extract_entities(goal, matches[0], finding.url, finding.at))
    if triples:
        store.put_triples(triples)
