"""Hierarchical match patterns: tokenization, parsing, matching, extraction.

Surface syntax (items separated by whitespace form a sequence):

    good news           two keywords in order
    {ai agi}            any-of alternatives
    $topic              variable capturing one word/number token
    $topic+             variable capturing a shortest non-empty token run
    $price:money        variable restricted to the named pattern "money"
    /[0-9]+(st|nd)?/    regular-expression token (restricted subset)
    (breaking news)     nested sequence

Matching scans a token stream left to right and reports non-overlapping
leftmost matches.  Between consecutive sequence elements up to ``gap``
extra tokens may intervene (default 2).  Variables bind word/number tokens
only, never punctuation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Union

from .graph import Triple
from .util import stable_hash64

DEFAULT_GAP = 2


# -- tokens ---------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    text: str
    kind: str  # "word" | "number" | "punctuation"


def tokenize(text: str) -> list[Token]:
    """Lowercase tokens: alphanumeric runs, single punctuation characters."""
    out: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isalnum():
            j = i + 1
            while j < n and text[j].isalnum():
                j += 1
            run = text[i:j].lower()
            out.append(Token(run, "number" if run.isdigit() else "word"))
            i = j
        else:
            out.append(Token(ch.lower(), "punctuation"))
            i += 1
    return out


def token_from_text(text: str) -> Token:
    """Rebuild a token from its stored text (used when reloading caches)."""
    if len(text) == 1 and not text.isalnum():
        return Token(text, "punctuation")
    return Token(text, "number" if text.isdigit() else "word")


# -- pattern tree ----------------------------------------------------------


@dataclass(frozen=True)
class Word:
    text: str


@dataclass(frozen=True)
class Regex:
    expr: str


@dataclass(frozen=True)
class Variable:
    name: str
    domain: str | None = None
    arity: str = "one"  # "one" | "plus"


@dataclass(frozen=True)
class Sequence:
    children: tuple["PatternNode", ...]


@dataclass(frozen=True)
class AnyOf:
    children: tuple["PatternNode", ...]


PatternNode = Union[Word, Regex, Variable, Sequence, AnyOf]


@dataclass(frozen=True)
class Pattern:
    root: PatternNode
    name: str | None = None


class PatternSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class DomainUnresolvedError(LookupError):
    def __init__(self, name: str):
        super().__init__(f"pattern domain not registered: {name!r}")
        self.name = name


class PatternRegistry:
    """Named patterns; a variable's domain resolves against this."""

    def __init__(self):
        self._patterns: dict[str, Pattern] = {}

    def define(self, name: str, pattern: "Pattern | str") -> Pattern:
        if isinstance(pattern, str):
            pattern = parse_pattern(pattern, name=name)
        elif pattern.name != name:
            pattern = Pattern(pattern.root, name=name)
        self._patterns[name] = pattern
        return pattern

    def get(self, name: str) -> Pattern | None:
        return self._patterns.get(name)

    def names(self) -> list[str]:
        return sorted(self._patterns)

    def __contains__(self, name: str) -> bool:
        return name in self._patterns


# -- parsing ---------------------------------------------------------------

_STRUCTURAL = set("{}()$/")
_IDENT_RE = re.compile(r"[A-Za-z0-9_]+")


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.i = 0

    def fail(self, message: str, pos: int | None = None):
        raise PatternSyntaxError(message, self.i if pos is None else pos)

    def skip_ws(self) -> None:
        while self.i < len(self.src) and self.src[self.i].isspace():
            self.i += 1

    def items(self, closer: str | None) -> list[PatternNode]:
        out: list[PatternNode] = []
        while True:
            self.skip_ws()
            if self.i >= len(self.src):
                if closer is not None:
                    self.fail(f"missing closing {closer!r}")
                break
            ch = self.src[self.i]
            if closer is not None and ch == closer:
                break
            if ch in ")}":
                self.fail(f"unbalanced {ch!r}")
            out.append(self.item())
        return out

    def item(self) -> PatternNode:
        ch = self.src[self.i]
        if ch == "(":
            open_at = self.i
            self.i += 1
            children = self.items(")")
            self.i += 1  # consume ')'
            if not children:
                self.fail("empty sequence", open_at)
            return Sequence(tuple(children))
        if ch == "{":
            open_at = self.i
            self.i += 1
            children = self.items("}")
            self.i += 1
            if not children:
                self.fail("empty alternative set", open_at)
            return AnyOf(tuple(children))
        if ch == "$":
            return self.variable()
        if ch == "/":
            return self.regex()
        return self.bareword()

    def variable(self) -> Variable:
        self.i += 1
        m = _IDENT_RE.match(self.src, self.i)
        if not m:
            self.fail("variable name expected after '$'")
        name = m.group(0).lower()
        self.i = m.end()
        domain = None
        if self.i < len(self.src) and self.src[self.i] == ":":
            self.i += 1
            m = _IDENT_RE.match(self.src, self.i)
            if not m:
                self.fail("domain name expected after ':'")
            domain = m.group(0).lower()
            self.i = m.end()
        arity = "one"
        if self.i < len(self.src) and self.src[self.i] == "+":
            arity = "plus"
            self.i += 1
        return Variable(name, domain, arity)

    def regex(self) -> Regex:
        open_at = self.i
        self.i += 1
        body: list[str] = []
        while self.i < len(self.src):
            ch = self.src[self.i]
            if ch == "\\" and self.i + 1 < len(self.src):
                body.append(self.src[self.i : self.i + 2])
                self.i += 2
                continue
            if ch == "/":
                self.i += 1
                expr = "".join(body)
                _validate_regex(expr, open_at + 1)
                return Regex(expr)
            body.append(ch)
            self.i += 1
        self.fail("unterminated regular expression", open_at)

    def bareword(self) -> PatternNode:
        start = self.i
        while self.i < len(self.src):
            ch = self.src[self.i]
            if ch.isspace() or ch in _STRUCTURAL:
                break
            self.i += 1
        words = [Word(t.text) for t in tokenize(self.src[start : self.i])]
        if not words:  # unreachable: bareword starts at a non-space char
            self.fail("empty item", start)
        return words[0] if len(words) == 1 else Sequence(tuple(words))


def _validate_regex(expr: str, offset: int) -> None:
    """Accept only the portable subset: literals, [...], ., *, +, ?, |, (...)."""
    depth = 0
    in_class = False
    i = 0
    while i < len(expr):
        ch = expr[i]
        if ch == "\\":
            if i + 1 >= len(expr):
                raise PatternSyntaxError("dangling escape", offset + i)
            nxt = expr[i + 1]
            if nxt.isalnum():
                raise PatternSyntaxError(f"unknown escape \\{nxt}", offset + i)
            i += 2
            continue
        if in_class:
            if ch == "]":
                in_class = False
        elif ch == "[":
            in_class = True
        elif ch == "(":
            if expr[i + 1 : i + 2] == "?":
                raise PatternSyntaxError("groups with '?' are not supported", offset + i)
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise PatternSyntaxError("unbalanced ')'", offset + i)
        i += 1
    if in_class:
        raise PatternSyntaxError("unterminated character class", offset + len(expr))
    if depth != 0:
        raise PatternSyntaxError("unbalanced '('", offset + len(expr))
    try:
        _compile(expr)
    except re.error as exc:
        raise PatternSyntaxError(f"bad regular expression: {exc}", offset) from exc


@lru_cache(maxsize=512)
def _compile(expr: str) -> re.Pattern:
    return re.compile(expr)


def parse_pattern(source: str, name: str | None = None) -> Pattern:
    """Parse surface syntax into a Pattern; parse -> serialize -> parse is stable."""
    if not source or not source.strip():
        raise PatternSyntaxError("empty pattern", 0)
    parser = _Parser(source)
    items = parser.items(closer=None)
    root = items[0] if len(items) == 1 else Sequence(tuple(items))
    return Pattern(root, name=name)


def serialize_pattern(pattern: Pattern) -> str:
    return _serialize(pattern.root, top=True)


def _serialize(node: PatternNode, top: bool = False) -> str:
    if isinstance(node, Word):
        return node.text
    if isinstance(node, Regex):
        return f"/{node.expr}/"
    if isinstance(node, Variable):
        out = f"${node.name}"
        if node.domain:
            out += f":{node.domain}"
        if node.arity == "plus":
            out += "+"
        return out
    if isinstance(node, Sequence):
        inner = " ".join(_serialize(c) for c in node.children)
        return inner if top else f"({inner})"
    if isinstance(node, AnyOf):
        return "{" + " ".join(_serialize(c) for c in node.children) + "}"
    raise TypeError(f"unknown node {node!r}")


# -- matching ---------------------------------------------------------------


@dataclass
class MatchResult:
    matched: bool
    bindings: dict[str, str] = field(default_factory=dict)
    span: tuple[int, int] | None = None
    snippet: str = ""


NO_MATCH = MatchResult(False)

_SNIPPET_CONTEXT = 10


def check_domains(node: PatternNode, registry: PatternRegistry | None, _seen: frozenset = frozenset()) -> None:
    """Raise DomainUnresolvedError if any referenced domain is missing."""
    if isinstance(node, Variable):
        if node.domain is not None:
            if registry is None or node.domain not in registry:
                raise DomainUnresolvedError(node.domain)
            if node.domain not in _seen:
                check_domains(registry.get(node.domain).root, registry, _seen | {node.domain})
    elif isinstance(node, (Sequence, AnyOf)):
        for child in node.children:
            check_domains(child, registry, _seen)


def _alignments(
    node: PatternNode,
    tokens: list[Token],
    pos: int,
    registry: PatternRegistry | None,
    gap: int,
    active: frozenset,
) -> Iterator[tuple[int, dict[str, str]]]:
    """Yield (end, bindings) for every way `node` can match starting at `pos`.

    Order is canonical: alternatives in listed order, smaller gaps first,
    shorter variable runs first.  The first yield is the match reported.
    """
    n = len(tokens)
    if isinstance(node, Word):
        if pos < n and tokens[pos].text == node.text:
            yield pos + 1, {}
    elif isinstance(node, Regex):
        if pos < n and _compile(node.expr).fullmatch(tokens[pos].text):
            yield pos + 1, {}
    elif isinstance(node, Variable):
        end = pos
        while end < n and tokens[end].kind != "punctuation":
            end += 1
            run = tokens[pos:end]
            if _domain_covers(node, run, registry, gap, active):
                yield end, {node.name: " ".join(t.text for t in run)}
            if node.arity == "one":
                break
    elif isinstance(node, AnyOf):
        for child in node.children:
            yield from _alignments(child, tokens, pos, registry, gap, active)
    elif isinstance(node, Sequence):

        def rec(idx: int, at: int, bound: dict) -> Iterator[tuple[int, dict]]:
            if idx == len(node.children):
                yield at, bound
                return
            slack = gap if idx > 0 else 0
            for g in range(slack + 1):
                start = at + g
                if start > n:
                    break
                for end, b in _alignments(node.children[idx], tokens, start, registry, gap, active):
                    yield from rec(idx + 1, end, {**bound, **b})

        yield from rec(0, pos, {})
    else:
        raise TypeError(f"unknown node {node!r}")


def _domain_covers(
    var: Variable,
    run: list[Token],
    registry: PatternRegistry | None,
    gap: int,
    active: frozenset,
) -> bool:
    if var.domain is None:
        return True
    if registry is None or var.domain not in registry:
        raise DomainUnresolvedError(var.domain)
    key = (var.domain, tuple(t.text for t in run))
    if key in active:  # self-referential domain: cut the cycle
        return False
    sub = registry.get(var.domain).root
    return any(
        end == len(run)
        for end, _ in _alignments(sub, run, 0, registry, gap, active | {key})
    )


def match_pattern(
    pattern: Pattern,
    tokens: list[Token],
    registry: PatternRegistry | None = None,
    gap: int = DEFAULT_GAP,
) -> list[MatchResult]:
    """All non-overlapping leftmost matches, scanning left to right."""
    check_domains(pattern.root, registry)
    results: list[MatchResult] = []
    pos, n = 0, len(tokens)
    while pos < n:
        hit = next(_alignments(pattern.root, tokens, pos, registry, gap, frozenset()), None)
        if hit is None:
            pos += 1
            continue
        end, bindings = hit
        lo = max(0, pos - _SNIPPET_CONTEXT)
        hi = min(n, end + _SNIPPET_CONTEXT)
        snippet = " ".join(t.text for t in tokens[lo:hi])
        results.append(MatchResult(True, dict(bindings), (pos, end), snippet))
        pos = end
    return results


def match_first(
    pattern: Pattern,
    tokens: list[Token],
    registry: PatternRegistry | None = None,
    gap: int = DEFAULT_GAP,
) -> MatchResult:
    found = match_pattern(pattern, tokens, registry, gap)
    return found[0] if found else NO_MATCH


# -- entity extraction -------------------------------------------------------


def entity_id(pattern_name: str, page: str, span: tuple[int, int]) -> str:
    return "entity:" + stable_hash64(pattern_name, page, f"{span[0]}:{span[1]}")


def extract_entities(pattern: Pattern, result: MatchResult, page: str, at: int) -> list[Triple]:
    """Turn a variable-bearing match into property triples on a fresh entity node.

    A match with no bindings yields only the origin triple.  Identical inputs
    always produce the same entity id, so re-extraction is idempotent.
    """
    if not result.matched:
        raise ValueError("cannot extract entities from a failed match")
    name = pattern.name or serialize_pattern(pattern)
    eid = entity_id(name, page, result.span)
    triples = [Triple(eid, key, value, at) for key, value in sorted(result.bindings.items())]
    triples.append(Triple(eid, "origin", page, at))
    return triples
