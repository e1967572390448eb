"""Web environment: fetch a URL and reduce it to a PageContext.

Two interchangeable environments share the interface ``fetch(url) ->
PageContext`` / ``clock_ms() -> float``:

* ``LiveEnvironment`` does real HTTP with politeness controls (robots.txt,
  per-host delay, body size cap, redirect limit).
* ``MockEnvironment`` serves a scripted in-memory site graph with a virtual
  clock, so searches are deterministic and fetch counts observable.

Page context is the visible text only; link context is the anchor text plus
the title attribute plus any nested image alt text.
"""

from __future__ import annotations

import threading
import time
import urllib.robotparser
from dataclasses import dataclass, field
from html.parser import HTMLParser
from urllib.parse import urljoin, urlparse

from .patterns import Token, tokenize

DEFAULT_IMAGE_MIN_PX = 64

_SKIP_TAGS = {"script", "style", "head", "title", "noscript", "template"}


@dataclass(frozen=True)
class LinkContext:
    href: str
    tokens: tuple[Token, ...]


@dataclass(frozen=True)
class PageContext:
    url: str
    tokens: tuple[Token, ...]
    links: tuple[LinkContext, ...]
    image: str | None
    fetched_at: int
    text: str = ""  # visible text the tokens were derived from


@dataclass(frozen=True)
class FetchPolicy:
    timeout: int = 10_000  # milliseconds
    max_body_bytes: int = 1_000_000
    min_delay_per_host: int = 1_000  # milliseconds
    user_agent: str = "latentsearch/0.1"
    respect_robots: bool = True


class FetchError(Exception):
    """Base for fetch failures; `code` is the short string stored in the graph."""

    code = "fetch"


class FetchTimeout(FetchError):
    code = "timeout"


class HttpError(FetchError):
    def __init__(self, status: int):
        super().__init__(f"HTTP {status}")
        self.status = status
        self.code = f"http:{status}"


class RobotsDisallowed(FetchError):
    code = "robots"


class NotHtml(FetchError):
    code = "not_html"


# -- URL helpers -------------------------------------------------------------


def _host(url: str) -> str:
    host = urlparse(url).hostname
    if not host:
        raise ValueError(f"URL has no host: {url!r}")
    host = host.lower()
    return host[4:] if host.startswith("www.") else host


def same_domain(a: str, b: str) -> bool:
    """Exact host match after lowercasing and stripping a leading www."""
    return _host(a) == _host(b)


# -- HTML reduction ----------------------------------------------------------


class _PageExtractor(HTMLParser):
    """Collect visible text, link contexts, and candidate images."""

    def __init__(self, base_url: str):
        super().__init__(convert_charrefs=True)
        self.base = base_url
        self.text_parts: list[str] = []
        self.links: list[tuple[str, list[str]]] = []
        self.images: list[tuple[str, int | None, int | None]] = []
        self._skip_depth = 0
        self._link: tuple[str, list[str]] | None = None

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS:
            self._skip_depth += 1
            return
        if self._skip_depth:
            return
        a = dict(attrs)
        if tag == "a":
            self._finish_link()
            href = (a.get("href") or "").strip()
            if href:
                resolved = urljoin(self.base, href)
                if urlparse(resolved).scheme in ("http", "https"):
                    parts = []
                    if a.get("title"):
                        parts.append(a["title"])
                    self._link = (resolved, parts)
        elif tag == "img":
            src = (a.get("src") or "").strip()
            if src:
                self.images.append((urljoin(self.base, src), _px(a.get("width")), _px(a.get("height"))))
            if self._link is not None and a.get("alt"):
                self._link[1].append(a["alt"])

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS:
            self._skip_depth = max(0, self._skip_depth - 1)
        elif tag == "a":
            self._finish_link()

    def handle_data(self, data):
        if self._skip_depth:
            return
        if data.strip():
            self.text_parts.append(data)
            if self._link is not None:
                self._link[1].append(data)

    def _finish_link(self):
        if self._link is not None:
            href, parts = self._link
            self.links.append((href, parts))
            self._link = None

    def close(self):
        super().close()
        self._finish_link()


def _px(value) -> int | None:
    if value is None:
        return None
    try:
        return int(str(value).strip().rstrip("px"))
    except ValueError:
        return None


def extract_page(
    url: str,
    html_text: str,
    fetched_at: int,
    image_min_px: int = DEFAULT_IMAGE_MIN_PX,
) -> PageContext:
    """Reduce raw HTML to a PageContext; deterministic for identical input."""
    parser = _PageExtractor(url)
    parser.feed(html_text)
    parser.close()
    links = []
    for href, parts in parser.links:
        links.append(LinkContext(href, tuple(tokenize(_anchor_text(parts)))))
    image = None
    for src, w, h in parser.images:
        if w is not None and h is not None:
            if w >= image_min_px and h >= image_min_px:
                image = src
                break
        else:
            image = src
            break
    text = " ".join(part.strip() for part in parser.text_parts)
    return PageContext(
        url=url,
        tokens=tuple(tokenize(text)),
        links=tuple(links),
        image=image,
        fetched_at=fetched_at,
        text=text,
    )


def _anchor_text(parts: list[str]) -> str:
    # title attribute was queued first; anchor text should lead
    if len(parts) > 1:
        return " ".join(parts[1:]) + " " + parts[0]
    return " ".join(parts)


# -- live environment --------------------------------------------------------


class LiveEnvironment:
    """Real HTTP fetching with robots.txt, per-host delays, and size caps."""

    def __init__(self, policy: FetchPolicy | None = None):
        self.policy = policy or FetchPolicy()
        self.fetch_count = 0
        self.fetch_log: list[str] = []
        self._robots: dict[str, urllib.robotparser.RobotFileParser | None] = {}
        self._last_start: dict[str, float] = {}
        self._host_locks: dict[str, threading.Lock] = {}
        self._lock = threading.Lock()
        import requests

        self._session = requests.Session()
        self._session.max_redirects = 5
        self._requests = requests

    def clock_ms(self) -> float:
        return time.monotonic() * 1000.0

    def _host_lock(self, host: str) -> threading.Lock:
        with self._lock:
            return self._host_locks.setdefault(host, threading.Lock())

    def _robots_for(self, url: str):
        root = "{0.scheme}://{0.netloc}".format(urlparse(url))
        with self._lock:
            if root in self._robots:
                return self._robots[root]
        parser = None
        try:
            resp = self._session.get(
                root + "/robots.txt",
                timeout=self.policy.timeout / 1000.0,
                headers={"User-Agent": self.policy.user_agent},
            )
            if resp.status_code == 200:
                parser = urllib.robotparser.RobotFileParser()
                parser.parse(resp.text.splitlines())
        except Exception:
            parser = None  # unreachable robots.txt means allow
        with self._lock:
            self._robots[root] = parser
        return parser

    def fetch(self, url: str) -> PageContext:
        policy = self.policy
        if urlparse(url).scheme not in ("http", "https"):
            raise ValueError(f"not an http(s) URL: {url!r}")
        if policy.respect_robots:
            robots = self._robots_for(url)
            if robots is not None and not robots.can_fetch(policy.user_agent, url):
                raise RobotsDisallowed(url)
        host = _host(url)
        with self._host_lock(host):
            last = self._last_start.get(host)
            if last is not None:
                wait = policy.min_delay_per_host / 1000.0 - (time.monotonic() - last)
                if wait > 0:
                    time.sleep(wait)
            self._last_start[host] = time.monotonic()
            self.fetch_count += 1
            self.fetch_log.append(url)
            try:
                resp = self._session.get(
                    url,
                    timeout=policy.timeout / 1000.0,
                    headers={"User-Agent": policy.user_agent},
                    stream=True,
                )
            except self._requests.exceptions.Timeout as exc:
                raise FetchTimeout(url) from exc
            except self._requests.exceptions.RequestException as exc:
                raise HttpError(0) from exc
            with resp:
                if resp.status_code >= 400:
                    raise HttpError(resp.status_code)
                ctype = resp.headers.get("Content-Type", "text/html")
                if "html" not in ctype and "xml" not in ctype:
                    raise NotHtml(ctype)
                body = b""
                for chunk in resp.iter_content(chunk_size=65536):
                    body += chunk
                    if len(body) >= policy.max_body_bytes:
                        body = body[: policy.max_body_bytes]
                        break
                encoding = resp.encoding or "utf-8"
        text = body.decode(encoding, errors="replace")
        return extract_page(url, text, int(time.time()))


# -- mock environment --------------------------------------------------------


@dataclass
class _MockPage:
    text: str
    links: list[dict]
    image: str | None = None
    latency_ms: int | None = None
    html: str | None = None  # when set, page is reduced via extract_page


class MockEnvironment:
    """Deterministic scripted site graph with a virtual clock."""

    def __init__(
        self,
        pages: dict[str, _MockPage],
        default_latency_ms: int = 10,
        start_time: int = 1_700_000_000,
    ):
        self.pages = pages
        self.default_latency_ms = default_latency_ms
        self.start_time = start_time
        self._elapsed_ms = 0.0
        self.fetch_count = 0
        self.fetch_log: list[str] = []
        self._lock = threading.Lock()

    def clock_ms(self) -> float:
        with self._lock:
            return self._elapsed_ms

    def now(self) -> int:
        with self._lock:
            return self.start_time + int(self._elapsed_ms / 1000)

    def fetch(self, url: str) -> PageContext:
        with self._lock:
            self.fetch_count += 1
            self.fetch_log.append(url)
            page = self.pages.get(url)
            latency = (
                page.latency_ms
                if page is not None and page.latency_ms is not None
                else self.default_latency_ms
            )
            self._elapsed_ms += latency
            fetched_at = self.start_time + int(self._elapsed_ms / 1000)
        if page is None:
            raise HttpError(404)
        if page.html is not None:
            return extract_page(url, page.html, fetched_at)
        links = tuple(
            LinkContext(
                link["href"],
                tuple(tokenize(" ".join(str(link.get(k, "")) for k in ("anchor", "title")))),
            )
            for link in page.links
            if link.get("href")
        )
        return PageContext(
            url=url,
            tokens=tuple(tokenize(page.text)),
            links=links,
            image=page.image,
            fetched_at=fetched_at,
            text=page.text,
        )

    def set_page(
        self,
        url: str,
        text: str = "",
        links: list[dict] | None = None,
        image: str | None = None,
        latency_ms: int | None = None,
        html: str | None = None,
    ) -> None:
        with self._lock:
            self.pages[url] = _MockPage(text, list(links or []), image, latency_ms, html)

    def to_spec(self) -> dict:
        out: dict = {"pages": {}}
        if self.default_latency_ms != 10:
            out["default_latency_ms"] = self.default_latency_ms
        if self.start_time != 1_700_000_000:
            out["start_time"] = self.start_time
        for url in sorted(self.pages):
            page = self.pages[url]
            entry: dict = {"text": page.text, "links": page.links}
            if page.image:
                entry["image"] = page.image
            if page.latency_ms is not None:
                entry["latency_ms"] = page.latency_ms
            if page.html is not None:
                entry["html"] = page.html
            out["pages"][url] = entry
        return out


def build_mock_env(spec: dict) -> MockEnvironment:
    """Build a MockEnvironment from a site-graph description (JSON-shaped dict)."""
    pages = {}
    for url, entry in spec.get("pages", {}).items():
        pages[url] = _MockPage(
            text=entry.get("text", ""),
            links=list(entry.get("links", [])),
            image=entry.get("image"),
            latency_ms=entry.get("latency_ms"),
            html=entry.get("html"),
        )
    return MockEnvironment(
        pages,
        default_latency_ms=spec.get("default_latency_ms", 10),
        start_time=spec.get("start_time", 1_700_000_000),
    )
