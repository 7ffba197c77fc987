"""Event-log and edge-list ingestion, URL expansion and slant matching."""
from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence
from urllib.parse import unquote, urlsplit

from .graph import FollowerGraph

log = logging.getLogger(__name__)

SHORTENER_HOSTS = frozenset({
    "bit.ly", "t.co", "tinyurl.com", "ow.ly", "goo.gl", "is.gd", "buff.ly",
    "dlvr.it", "j.mp", "fb.me", "tr.im", "su.pr", "ff.im", "tiny.cc", "lnkd.in",
})

TWO_WEEKS = 14 * 24 * 3600


@dataclass(frozen=True)
class TweetRecord:
    tweet_id: str
    author_id: int
    timestamp: float
    raw_urls: tuple[str, ...]
    retweet: bool = False


@dataclass(frozen=True)
class NewsTweet:
    tweet_id: str
    author_id: int
    domain_id: int
    slant: float
    quality: float
    retweet: bool = False


@dataclass
class ParseCounters:
    lines: int = 0
    records: int = 0
    malformed: int = 0
    duplicates: int = 0


def _lines(source) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            yield from fh
    else:
        yield from source


def parse_events(source) -> tuple[list[TweetRecord], ParseCounters]:
    """Read a JSON-lines event log.

    Each line holds ``tweet_id``, ``author_id``, ``timestamp`` and ``urls``
    (plus an optional boolean ``retweet``).  Malformed lines and repeated
    tweet ids are logged and skipped; an unreadable path raises.
    """
    records: list[TweetRecord] = []
    counters = ParseCounters()
    seen: set[str] = set()
    for lineno, line in enumerate(_lines(source), 1):
        if not line.strip():
            continue
        counters.lines += 1
        try:
            obj = json.loads(line)
            urls = obj["urls"]
            if not isinstance(urls, list) or not all(isinstance(u, str) for u in urls):
                raise ValueError("urls must be a list of strings")
            rec = TweetRecord(
                tweet_id=str(obj["tweet_id"]),
                author_id=int(obj["author_id"]),
                timestamp=float(obj["timestamp"]),
                raw_urls=tuple(urls),
                retweet=bool(obj.get("retweet", False)),
            )
        except (ValueError, KeyError, TypeError) as exc:
            counters.malformed += 1
            log.warning("events line %d skipped: %s", lineno, exc)
            continue
        if rec.tweet_id in seen:
            counters.duplicates += 1
            log.warning("events line %d skipped: duplicate tweet_id %s", lineno, rec.tweet_id)
            continue
        seen.add(rec.tweet_id)
        records.append(rec)
    counters.records = len(records)
    return records, counters


def write_events(records: Iterable[TweetRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            obj = {"tweet_id": r.tweet_id, "author_id": r.author_id,
                   "timestamp": r.timestamp, "urls": list(r.raw_urls)}
            if r.retweet:
                obj["retweet"] = True
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def normalize_url(url: str) -> str:
    """Canonical ``host[/path]`` form used for cache lookups and matching.

    Drops scheme, userinfo, port, query and fragment, lower-cases the host,
    strips a leading ``www.``, percent-decodes the path and removes a
    trailing slash.
    """
    url = url.strip()
    if "://" not in url:
        url = "//" + url.lstrip("/")
    parts = urlsplit(url)
    host = unquote(parts.hostname or "").lower().rstrip(".")
    if host.startswith("www."):
        host = host[4:]
    path = unquote(parts.path).rstrip("/")
    return host + path


class ResolverCycle(Exception):
    pass


class ResolverMiss(KeyError):
    pass


MISS_POLICIES = ("fail", "drop", "passthrough")


class ResolverCache:
    """Offline redirect table mapping short URLs to their targets.

    Keys and values are stored normalised.  A URL absent from the table is
    its own final destination, except for known shortener hosts, where the
    miss policy decides: ``fail`` raises, ``drop`` discards the URL and
    ``passthrough`` keeps the short URL as-is.
    """

    def __init__(self, mapping: dict[str, str] | None = None, miss_policy: str = "passthrough",
                 shorteners: Iterable[str] = SHORTENER_HOSTS):
        if miss_policy not in MISS_POLICIES:
            raise ValueError(f"miss_policy must be one of {MISS_POLICIES}")
        self.miss_policy = miss_policy
        self.shorteners = frozenset(shorteners)
        self.mapping: dict[str, str] = {}
        for k, v in (mapping or {}).items():
            self.add(k, v)

    def add(self, short_url: str, final_url: str) -> None:
        k, v = normalize_url(short_url), normalize_url(final_url)
        if k != v:
            self.mapping[k] = v

    def __len__(self) -> int:
        return len(self.mapping)

    def resolve(self, url: str) -> str | None:
        """Follow redirects to a fixed point; None means drop (miss policy)."""
        cur = normalize_url(url)
        seen = {cur}
        while cur in self.mapping:
            cur = self.mapping[cur]
            if cur in seen:
                raise ResolverCycle(url)
            seen.add(cur)
        if cur.split("/", 1)[0] in self.shorteners:
            if self.miss_policy == "fail":
                raise ResolverMiss(url)
            if self.miss_policy == "drop":
                return None
        return cur

    @classmethod
    def load(cls, path: str | Path, miss_policy: str = "passthrough") -> "ResolverCache":
        cache = cls(miss_policy=miss_policy)
        with open(path, encoding="utf-8") as fh:
            for row in csv.reader(fh, delimiter="\t"):
                if len(row) < 2 or row[0].startswith("#"):
                    continue
                cache.add(row[0], row[1])
        return cache

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            for k in sorted(self.mapping):
                w.writerow([k, self.mapping[k]])


def populate_cache(cache: ResolverCache, urls: Iterable[str],
                   client: Callable[[str], str | None], max_hops: int = 10) -> int:
    """Fill ``cache`` by asking ``client`` for one redirect hop at a time.

    ``client(url)`` returns the Location target or None when the URL does not
    redirect.  Returns the number of new cache entries.
    """
    added = 0
    for url in urls:
        cur = url
        for _ in range(max_hops):
            key = normalize_url(cur)
            if key in cache.mapping:
                cur = cache.mapping[key]
                continue
            nxt = client(cur)
            if not nxt or normalize_url(nxt) == key:
                break
            cache.add(cur, nxt)
            added += 1
            cur = nxt
    return added


def http_redirect_client(timeout: float = 10.0) -> Callable[[str], str | None]:
    """One-hop HEAD resolver using the standard library (network access)."""
    import urllib.error
    import urllib.request

    class _NoRedirect(urllib.request.HTTPRedirectHandler):
        def redirect_request(self, *args, **kwargs):
            return None

    opener = urllib.request.build_opener(_NoRedirect)

    def client(url: str) -> str | None:
        if "://" not in url:
            url = "http://" + url
        req = urllib.request.Request(url, method="HEAD")
        try:
            with opener.open(req, timeout=timeout):
                return None
        except urllib.error.HTTPError as exc:
            if 300 <= exc.code < 400:
                return exc.headers.get("Location")
            return None
        except (urllib.error.URLError, OSError):
            return None

    return client


@dataclass(frozen=True)
class SlantEntry:
    pattern: str
    slant: float
    quality: float
    label: str


class SlantTable:
    """News-domain patterns with slant and quality scores.

    Patterns are ``host`` or ``host/path-prefix``.  A URL matches a pattern
    when its host equals the pattern host or is a subdomain of it, and its
    path equals the prefix or continues it past a ``/``.  The longest
    matching pattern wins.
    """

    def __init__(self, entries: Sequence[SlantEntry]):
        self.entries: list[SlantEntry] = []
        self._by_host: dict[str, list[tuple[str, int]]] = {}
        seen: set[str] = set()
        for e in entries:
            pat = normalize_url(e.pattern)
            if not pat:
                raise ValueError(f"empty slant pattern {e.pattern!r}")
            if pat in seen:
                raise ValueError(f"duplicate slant pattern {pat!r}")
            seen.add(pat)
            idx = len(self.entries)
            self.entries.append(SlantEntry(pat, float(e.slant), float(e.quality), e.label))
            host, _, path = pat.partition("/")
            self._by_host.setdefault(host, []).append(("/" + path if path else "", idx))
        for lst in self._by_host.values():
            lst.sort(key=lambda p: -len(p[0]))

    def __len__(self) -> int:
        return len(self.entries)

    def match(self, url: str) -> int | None:
        """Index of the longest matching pattern for a normalised URL."""
        host, sep, path = url.partition("/")
        path = sep + path
        labels = host.split(".")
        best: tuple[int, int] | None = None
        for k in range(len(labels)):
            cand = ".".join(labels[k:])
            for prefix, idx in self._by_host.get(cand, ()):
                if path == prefix or not prefix or path.startswith(prefix + "/"):
                    length = len(cand) + len(prefix)
                    if best is None or length > best[0]:
                        best = (length, idx)
                    break
        return None if best is None else best[1]

    @classmethod
    def load(cls, path: str | Path) -> "SlantTable":
        with open(path, encoding="utf-8", newline="") as fh:
            return cls.from_csv(fh)

    @classmethod
    def from_csv(cls, fh) -> "SlantTable":
        entries = []
        for row in csv.DictReader(fh):
            q = row.get("quality")
            entries.append(SlantEntry(
                pattern=row["pattern"], slant=float(row["slant"]),
                quality=float(q) if q not in (None, "") else 0.0,
                label=row.get("label") or "",
            ))
        if not entries:
            raise ValueError("slant table is empty")
        return cls(entries)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pattern", "slant", "quality", "label"])
            for e in self.entries:
                w.writerow([e.pattern, repr(e.slant), repr(e.quality), e.label])


@dataclass
class UrlCounters:
    attempted: int = 0
    matched: int = 0
    unmatched: int = 0
    cycles: int = 0
    misses: int = 0
    too_old: int = 0
    empty_records: int = 0

    @property
    def dropped(self) -> int:
        return self.unmatched + self.cycles + self.misses + self.too_old


def process_urls(records: Iterable[TweetRecord], resolver: ResolverCache, table: SlantTable,
                 max_age: float | None = None,
                 now: float | None = None) -> tuple[list[NewsTweet], UrlCounters]:
    """Expand, normalise and match every URL; one NewsTweet per matched URL.

    With ``max_age`` set, records older than ``now - max_age`` are discarded
    (``now`` defaults to the newest timestamp in ``records``).
    """
    if len(table) == 0:
        raise ValueError("slant table is empty")
    records = list(records)
    counters = UrlCounters()
    cutoff = None
    if max_age is not None:
        ref = now if now is not None else max((r.timestamp for r in records), default=0.0)
        cutoff = ref - max_age
    out: list[NewsTweet] = []
    for rec in records:
        if not rec.raw_urls:
            counters.empty_records += 1
            continue
        for raw in rec.raw_urls:
            counters.attempted += 1
            if cutoff is not None and rec.timestamp < cutoff:
                counters.too_old += 1
                continue
            try:
                final = resolver.resolve(raw)
            except ResolverCycle:
                counters.cycles += 1
                continue
            if final is None:
                counters.misses += 1
                continue
            idx = table.match(final)
            if idx is None:
                counters.unmatched += 1
                continue
            e = table.entries[idx]
            counters.matched += 1
            out.append(NewsTweet(rec.tweet_id, rec.author_id, idx, e.slant, e.quality, rec.retweet))
    return out, counters


@dataclass
class EdgeCounters:
    lines: int = 0
    edges: int = 0
    duplicates: int = 0
    self_loops: int = 0
    bad_ids: int = 0


def read_edges(source) -> tuple[list[int], list[int], EdgeCounters]:
    """Parse a two-column (followee, follower) tab-separated edge list."""
    counters = EdgeCounters()
    pairs: set[tuple[int, int]] = set()
    a: list[int] = []
    b: list[int] = []
    for line in _lines(source):
        if not line.strip() or line.startswith("#"):
            continue
        counters.lines += 1
        cols = line.rstrip("\r\n").split("\t")
        if len(cols) < 2:
            cols = line.split()
        try:
            u, v = int(cols[0]), int(cols[1])
        except (ValueError, IndexError):
            counters.bad_ids += 1
            continue
        if u == v:
            counters.self_loops += 1
            continue
        if (u, v) in pairs:
            counters.duplicates += 1
            continue
        pairs.add((u, v))
        a.append(u)
        b.append(v)
    counters.edges = len(a)
    return a, b, counters


def load_edges(source, extra_ids: Iterable[int] = ()) -> tuple[FollowerGraph, EdgeCounters]:
    a, b, counters = read_edges(source)
    return FollowerGraph.from_id_edges(a, b, extra_ids), counters


def write_edges(g: FollowerGraph, path: str | Path) -> None:
    src, dst = g.edges()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, v in zip(g.ids[src], g.ids[dst]):
            fh.write(f"{u}\t{v}\n")


NEWSTWEET_FIELDS = ("tweet_id", "author_id", "domain_id", "slant", "quality", "retweet")


def write_newstweets(tweets: Iterable[NewsTweet], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NEWSTWEET_FIELDS)
        for t in tweets:
            w.writerow([t.tweet_id, t.author_id, t.domain_id, repr(t.slant),
                        repr(t.quality), int(t.retweet)])


def read_newstweets(path: str | Path) -> list[NewsTweet]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [NewsTweet(r["tweet_id"], int(r["author_id"]), int(r["domain_id"]),
                          float(r["slant"]), float(r["quality"]), r.get("retweet") == "1")
                for r in csv.DictReader(fh)]


def retweet_counts(tweets: Iterable[NewsTweet]) -> Counter:
    return Counter(t.author_id for t in tweets if t.retweet)

