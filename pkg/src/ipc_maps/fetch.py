from __future__ import annotations

import hashlib
import logging
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Protocol
from urllib.parse import parse_qsl, urlencode, urlsplit

import httpx

from .config import FetchConfig
from .errors import ParseFailure, TransportError, UnrecognizedUrl
from .models import Kind, PatentRecord
from .uspto import parse_hitlist_page, parse_page

logger = logging.getLogger(__name__)

RETRY_STATUSES = {429, 500, 502, 503, 504}
_DATABASES: dict[str, str] = {"grant": "PTXT", "application": "PG01"}


@dataclass(slots=True)
class SearchSpec:
    db: Kind
    query: str
    start: int = 1


@dataclass(slots=True)
class FetchLimits:
    max_records: int | None = None
    page_size: int = 50
    window: int = 1000


@dataclass(slots=True)
class FetchReport:
    db: str
    query: str
    start: int
    total_hits: int = 0
    fetched: int = 0
    parsed: int = 0
    failed: int = 0
    list_pages: int = 0
    windows: list[int] = field(default_factory=list)
    resume_token: int = 1
    complete: bool = False
    error: str | None = None

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


class Transport(Protocol):
    def get(self, url: str) -> bytes: ...


def cache_key(url: str) -> str:
    return hashlib.sha1(url.encode("utf-8")).hexdigest() + ".html"


class HttpTransport:
    """Live transport: one request at a time, spaced by ``delay_ms``, with retries."""

    def __init__(
        self,
        config: FetchConfig | None = None,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        self.config = config or FetchConfig()
        self.requests: list[str] = []
        self._client = client or httpx.Client(
            timeout=self.config.timeout_seconds,
            headers={"User-Agent": self.config.user_agent},
            follow_redirects=True,
        )
        self._sleep = sleep
        self._clock = clock
        self._last: float | None = None

    def get(self, url: str) -> bytes:
        attempts = max(1, self.config.attempts)
        backoff = max(0.0, self.config.backoff_seconds)
        last_error: Exception | None = None

        for attempt in range(attempts):
            self._wait_turn()
            self.requests.append(url)
            try:
                resp = self._client.get(url)
                resp.raise_for_status()
                return resp.content
            except httpx.HTTPStatusError as exc:
                last_error = exc
                if exc.response.status_code not in RETRY_STATUSES:
                    break
            except httpx.RequestError as exc:
                last_error = exc
            if attempt + 1 < attempts:
                delay = backoff * (2**attempt)
                logger.warning(
                    "request failed (%s); retry %d/%d in %.1fs",
                    last_error,
                    attempt + 1,
                    attempts - 1,
                    delay,
                )
                self._sleep(delay)

        raise TransportError(f"{url}: {last_error}")

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> HttpTransport:
        return self

    def __exit__(self, *_: object) -> None:
        self.close()

    def _wait_turn(self) -> None:
        delay = self.config.delay_ms / 1000.0
        if self._last is not None and delay > 0:
            remaining = delay - (self._clock() - self._last)
            if remaining > 0:
                self._sleep(remaining)
        self._last = self._clock()


class FixtureTransport:
    """Offline transport reading pages saved under their cache key."""

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)
        self.requests: list[str] = []

    def get(self, url: str) -> bytes:
        self.requests.append(url)
        path = self.directory / cache_key(url)
        if not path.exists():
            raise TransportError(f"no fixture page for {url}")
        return path.read_bytes()


class CachedTransport:
    def __init__(self, inner: Transport, cache_dir: str | Path, overwrite: bool = False) -> None:
        self.inner = inner
        self.cache_dir = Path(cache_dir)
        self.overwrite = overwrite
        self.hits = 0
        if overwrite and self.cache_dir.exists():
            logger.warning("overwriting pages cached in %s", self.cache_dir)

    def get(self, url: str) -> bytes:
        path = self.cache_dir / cache_key(url)
        if path.exists() and not self.overwrite:
            self.hits += 1
            return path.read_bytes()
        body = self.inner.get(url)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        path.write_bytes(body)
        return body


def harvest_query(url: str) -> SearchSpec:
    """Recover the search behind a hit-list or record url copied from a browser."""
    parts = urlsplit(url.strip())
    if parts.scheme not in ("http", "https") or not parts.netloc:
        raise UnrecognizedUrl(url)
    params = {key.lower(): value for key, value in parse_qsl(parts.query, keep_blank_values=True)}
    host = parts.netloc.lower()
    database = params.get("d", "").upper()
    if "appft" in host or database.startswith("PG01"):
        db: Kind = "application"
    elif "patft" in host or database.startswith("PTXT"):
        db = "grant"
    else:
        raise UnrecognizedUrl(url)

    query = params.get("query") or params.get("os") or params.get("s1")
    if not query:
        raise UnrecognizedUrl(url)
    try:
        record = int(params.get("r") or 0)
        page = int(params.get("p") or 1)
        per_page = int(params.get("l") or 50)
    except ValueError as exc:
        raise UnrecognizedUrl(url) from exc
    start = record if record > 0 else (page - 1) * per_page + 1
    return SearchSpec(db=db, query=query.strip(), start=max(start, 1))


def hitlist_url(endpoint: str, spec: SearchSpec, offset: int, page: int, page_size: int) -> str:
    params = [
        ("Sect1", "PTO2"),
        ("Sect2", "HITOFF"),
        ("u", "/netahtml/PTO/search-adv.htm"),
        ("r", str(offset)),
        ("p", str(page)),
        ("f", "S"),
        ("l", str(page_size)),
        ("Query", spec.query),
        ("d", _DATABASES[spec.db]),
    ]
    return f"{endpoint}?{urlencode(params)}"


def endpoint_for(db: str, config: FetchConfig) -> str:
    return config.application_endpoint if db == "application" else config.grant_endpoint


def fetch_all(
    spec: SearchSpec,
    sink: Callable[[PatentRecord], None],
    transport: Transport,
    limits: FetchLimits | None = None,
    endpoint: str | None = None,
) -> FetchReport:
    """Walk hit lists page by page, re-issuing the query past each download window."""
    limits = limits or FetchLimits()
    endpoint = endpoint or endpoint_for(spec.db, FetchConfig())
    report = FetchReport(db=spec.db, query=spec.query, start=spec.start)
    next_seq = spec.start
    total: int | None = None

    try:
        while total is None or next_seq <= total:
            if _at_limit(report, limits):
                break
            window_start = next_seq
            report.windows.append(window_start)
            page = 1
            while True:
                url = hitlist_url(endpoint, spec, window_start, page, limits.page_size)
                hits = parse_hitlist_page(transport.get(url), base_url=url)
                report.list_pages += 1
                total = report.total_hits = hits.total_hits
                for record_url in hits.record_urls:
                    if next_seq > total or _at_limit(report, limits):
                        break
                    _fetch_record(record_url, spec.db, transport, sink, report)
                    next_seq += 1
                if (
                    hits.next_page_url is None
                    or not hits.record_urls
                    or next_seq > total
                    or _at_limit(report, limits)
                    or page * limits.page_size >= limits.window
                ):
                    break
                page += 1
            if next_seq == window_start and next_seq <= total:
                logger.warning("hit list at %d returned no records; stopping", window_start)
                break
    except (TransportError, ParseFailure) as exc:
        report.error = str(exc)
        logger.error("fetch stopped at record %d: %s", next_seq, exc)

    report.resume_token = next_seq
    report.complete = report.error is None and total is not None and next_seq > total
    logger.info(
        "fetched %d records (%d parsed, %d failed) over %d list pages; resume at %d",
        report.fetched,
        report.parsed,
        report.failed,
        report.list_pages,
        report.resume_token,
    )
    return report


def _fetch_record(
    url: str,
    db: Kind,
    transport: Transport,
    sink: Callable[[PatentRecord], None],
    report: FetchReport,
) -> None:
    page = transport.get(url)
    report.fetched += 1
    try:
        record = parse_page(page, db)
    except ParseFailure as exc:
        report.failed += 1
        logger.warning("%s: %s", url, exc)
        return
    sink(record)
    report.parsed += 1


def _at_limit(report: FetchReport, limits: FetchLimits) -> bool:
    return limits.max_records is not None and report.fetched >= limits.max_records
