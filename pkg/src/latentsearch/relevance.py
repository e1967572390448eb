"""Feedback, personal/social relevance scoring, feed ranking, pattern mining.

All state lives in the temporal graph: feedback records are triples
(user:U, feedback/pos|feedback/neg, finding:F, t) with later records
overwriting earlier ones per (user, finding).  Profiles and rankings are
pure functions of those logs, so any replay reproduces them exactly.

The concrete scoring formulas:

    weight(w)  = (pos(w) - neg(w)) / (pos(w) + neg(w) + 1)
    personal   = clamp(0.5 + 0.5 * mean weight over distinct snippet tokens)
    social     = mean of trusted peers' personal scores (0.5 when no peers)
    rank key   = 0.7 * personal + 0.3 * social
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from .graph import Triple, TripleStore
from .patterns import Pattern, Sequence, Word, tokenize
from .search import Finding

POS = "feedback/pos"
NEG = "feedback/neg"
TRUST = "cfg/trust"
DEFAULT_ALPHA = 0.7
MINING_WINDOW = 3


class UnknownFinding(KeyError):
    pass


@dataclass
class FeatureProfile:
    user: str
    weights: dict[str, float] = field(default_factory=dict)


def _user_node(user: str) -> str:
    return user if user.startswith("user:") else "user:" + user


def _finding_node(finding_id: str) -> str:
    return finding_id if finding_id.startswith("finding:") else "finding:" + finding_id


def snippet_tokens(snippet: str) -> set[str]:
    return {t.text for t in tokenize(snippet) if t.kind != "punctuation"}


def finding_exists(store: TripleStore, finding_id: str) -> bool:
    return bool(store.query_triples(subject=_finding_node(finding_id), predicate="finding/topic"))


def finding_snippet(store: TripleStore, finding_id: str) -> str | None:
    rows = store.query_triples(subject=_finding_node(finding_id), predicate="finding/snippet")
    return rows[-1].object if rows else None


def effective_feedback(store: TripleStore, user: str) -> dict[str, int]:
    """Latest polarity per finding; rows come back time-ordered so last wins."""
    out: dict[str, int] = {}
    subject = _user_node(user)
    rows = [
        r
        for r in store.query_triples(subject=subject)
        if r.predicate in (POS, NEG)
    ]
    for row in rows:
        out[row.object] = 1 if row.predicate == POS else -1
    return out


def build_profile(store: TripleStore, user: str) -> FeatureProfile:
    """Recompute token weights from the user's full feedback history."""
    pos_counts: Counter = Counter()
    neg_counts: Counter = Counter()
    for finding_node, polarity in effective_feedback(store, user).items():
        snippet = finding_snippet(store, finding_node)
        if snippet is None:
            continue
        for token in snippet_tokens(snippet):
            if polarity > 0:
                pos_counts[token] += 1
            else:
                neg_counts[token] += 1
    weights = {}
    for token in set(pos_counts) | set(neg_counts):
        p, n = pos_counts[token], neg_counts[token]
        weights[token] = (p - n) / (p + n + 1)
    return FeatureProfile(user=user, weights=weights)


def record_feedback(
    store: TripleStore, user: str, finding_id: str, polarity: int, at: int
) -> FeatureProfile:
    """Store one feedback event and return the recomputed profile."""
    if polarity not in (1, -1):
        raise ValueError(f"polarity must be +1 or -1, got {polarity!r}")
    if not finding_exists(store, finding_id):
        raise UnknownFinding(finding_id)
    predicate = POS if polarity > 0 else NEG
    store.put_triples([Triple(_user_node(user), predicate, _finding_node(finding_id), at)])
    return build_profile(store, user)


def personal_relevance(profile: FeatureProfile, finding: "Finding | str") -> float:
    """0.5-neutral score from the mean profile weight of the snippet's tokens."""
    snippet = finding if isinstance(finding, str) else finding.snippet
    tokens = snippet_tokens(snippet)
    if not tokens or not profile.weights:
        return 0.5
    total = sum(profile.weights.get(t, 0.0) for t in tokens)
    return min(1.0, max(0.0, 0.5 + 0.5 * total / len(tokens)))


def set_trust(store: TripleStore, user: str, peers: list[str], at: int) -> None:
    peers = sorted({p for p in peers if p and p != user})
    store.put_triples([Triple(_user_node(user), TRUST, json.dumps(peers), at)])


def get_trust(store: TripleStore, user: str) -> list[str]:
    rows = store.query_triples(subject=_user_node(user), predicate=TRUST)
    if not rows:
        return []
    try:
        peers = json.loads(rows[-1].object)
    except ValueError:
        return []
    return [p for p in peers if isinstance(p, str) and p != user]


def social_relevance(
    store: TripleStore,
    user: str,
    finding: "Finding | str",
    peer_profiles: dict[str, FeatureProfile] | None = None,
) -> float:
    """Mean of trusted peers' personal scores; neutral without peers."""
    peers = get_trust(store, user)
    if not peers:
        return 0.5
    scores = []
    for peer in peers:
        profile = (peer_profiles or {}).get(peer) or build_profile(store, peer)
        scores.append(personal_relevance(profile, finding))
    return sum(scores) / len(scores)


@dataclass
class RankedFinding:
    finding: Finding
    personal: float
    social: float

    def to_dict(self) -> dict:
        out = self.finding.to_dict()
        out["personal"] = self.personal
        out["social"] = self.social
        return out


def rank_feed(
    store: TripleStore,
    user: str,
    findings: list[Finding],
    alpha: float = DEFAULT_ALPHA,
) -> list[RankedFinding]:
    """Blend of personal and social scores, ties broken by recency then id."""
    profile = build_profile(store, user)
    peer_profiles = {p: build_profile(store, p) for p in get_trust(store, user)}
    ranked = []
    for finding in findings:
        personal = personal_relevance(profile, finding)
        social = social_relevance(store, user, finding, peer_profiles)
        ranked.append(RankedFinding(finding, personal, social))
    ranked.sort(
        key=lambda r: (
            -(alpha * r.personal + (1 - alpha) * r.social),
            -r.finding.at,
            r.finding.id,
        )
    )
    return ranked


def mine_patterns(store: TripleStore, user: str, min_support: int) -> list[tuple[Pattern, int]]:
    """Ordered token pairs common to the user's positively checked findings.

    A pair (a, b) counts once per distinct positive finding where b follows
    a within a 3-token window. Candidates are suggestions only.
    """
    if min_support < 2:
        raise ValueError("min_support must be >= 2")
    support: Counter = Counter()
    for finding_node, polarity in effective_feedback(store, user).items():
        if polarity <= 0:
            continue
        snippet = finding_snippet(store, finding_node)
        if snippet is None:
            continue
        words = [t.text for t in tokenize(snippet) if t.kind != "punctuation"]
        pairs = set()
        for i, a in enumerate(words):
            for j in range(i + 1, min(i + MINING_WINDOW, len(words))):
                pairs.add((a, words[j]))
        for pair in pairs:
            support[pair] += 1
    candidates = [
        (Pattern(Sequence((Word(a), Word(b)))), count)
        for (a, b), count in support.items()
        if count >= min_support
    ]
    candidates.sort(key=lambda c: (-c[1], c[0].root.children[0].text, c[0].root.children[1].text))
    return candidates
