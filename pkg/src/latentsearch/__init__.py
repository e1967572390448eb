"""latentsearch: a self-hosted latent semantic search agent.

Standing topics are searched periodically over the web (or a mock site
graph), matches become findings in a temporal triple graph, and a
feedback-driven ranker orders the resulting news feed.
"""

from .graph import StoreBudget, Subgraph, Triple, TripleStore
from .patterns import (
    MatchResult,
    Pattern,
    PatternRegistry,
    PatternSyntaxError,
    Token,
    extract_entities,
    match_pattern,
    parse_pattern,
    serialize_pattern,
    tokenize,
)
from .relevance import (
    FeatureProfile,
    build_profile,
    mine_patterns,
    personal_relevance,
    rank_feed,
    record_feedback,
    social_relevance,
)
from .runtime import Agent, Quota, Topic
from .search import (
    Finding,
    Path,
    PathSet,
    SearchConstraints,
    SearchOutcome,
    merge_path_sets,
    path_finder,
    path_tracker,
    search_topic,
)
from .textindex import CachedPage, TextIndex
from .webenv import (
    FetchPolicy,
    LinkContext,
    LiveEnvironment,
    MockEnvironment,
    PageContext,
    build_mock_env,
    extract_page,
    same_domain,
)

__version__ = "0.1.0"

__all__ = [
    "Agent",
    "CachedPage",
    "FeatureProfile",
    "FetchPolicy",
    "Finding",
    "LinkContext",
    "LiveEnvironment",
    "MatchResult",
    "MockEnvironment",
    "PageContext",
    "Path",
    "PathSet",
    "Pattern",
    "PatternRegistry",
    "PatternSyntaxError",
    "Quota",
    "SearchConstraints",
    "SearchOutcome",
    "StoreBudget",
    "Subgraph",
    "TextIndex",
    "Token",
    "Topic",
    "Triple",
    "TripleStore",
    "build_mock_env",
    "build_profile",
    "extract_entities",
    "extract_page",
    "match_pattern",
    "merge_path_sets",
    "mine_patterns",
    "parse_pattern",
    "path_finder",
    "path_tracker",
    "personal_relevance",
    "rank_feed",
    "record_feedback",
    "same_domain",
    "search_topic",
    "serialize_pattern",
    "social_relevance",
    "tokenize",
]
