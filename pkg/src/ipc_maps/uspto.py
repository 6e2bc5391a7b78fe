"""Adapters from USPTO full-text search pages to :class:`PatentRecord`.

The parsers read pages as a sequence of text lines (one per table cell or
block element) and locate fields by their label text, so they survive the
markup changes between page vintages.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from datetime import date, datetime
from html.parser import HTMLParser
from urllib.parse import urljoin

from .errors import MalformedIpc, ParseFailure
from .models import IpcCode, Kind, PatentRecord, parse_ipc

logger = logging.getLogger(__name__)

GRANT_ID_LABELS = ("United States Patent",)
APPLICATION_ID_LABELS = ("United States Patent Application",)
IPC_LABELS = ("Current International Class:", "International Class:", "Intern'l Class:")
FILED_LABELS = ("Filed:",)
REFERENCES_START = ("U.S. Patent Documents",)
REFERENCES_END = (
    "Foreign Patent Documents",
    "Other References",
    "Primary Examiner",
    "Assistant Examiner",
    "Attorney, Agent or Firm",
    "Claims",
)
NO_HITS_MARKERS = ("No patents have matched your query", "No applications have matched")

_ID_RE = re.compile(r"^(?:RE|D|PP|H|T)?[\d,]{4,14}$")
_DATE_RE = re.compile(r"^[A-Z][a-z]+\.? \d{1,2}, \d{4}$")
_IPC_PREFIX_RE = re.compile(
    r"^[A-Ha-h]\s*\d{2}(?:\s*[A-Za-z](?:\s*\d{1,4}\s*/\s*\d{1,6})?)?(?![A-Za-z0-9])"
)
_HITS_RE = re.compile(r"out of\s+([\d,]+)", re.IGNORECASE)
_HITS_ALT_RE = re.compile(r":\s*([\d,]+)\s+(?:patents|applications)\b", re.IGNORECASE)


@dataclass(slots=True)
class ParsedLine:
    text: str
    hrefs: list[str]


@dataclass(slots=True)
class HitList:
    total_hits: int
    record_urls: list[str]
    next_page_url: str | None


_BREAK_TAGS = frozenset({"br", "center", "hr", "p", "table", "td", "th", "title", "tr"})


class _LineParser(HTMLParser):
    """Flattens a page into text lines, one per table cell or break tag."""

    def __init__(self) -> None:
        super().__init__()
        self.lines: list[ParsedLine] = []
        self._words: list[str] = []
        self._links: dict[str, None] = {}
        self._href: str | None = None

    def handle_starttag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        if tag in _BREAK_TAGS:
            self._end_line()
        elif tag == "a":
            self._href = dict(attrs).get("href") or None

    def handle_endtag(self, tag: str) -> None:
        if tag in _BREAK_TAGS:
            self._end_line()
        elif tag == "a":
            self._href = None

    def handle_data(self, data: str) -> None:
        words = data.split()
        if not words:
            return
        self._words.extend(words)
        if self._href:
            self._links.setdefault(self._href)

    def close(self) -> None:
        super().close()
        self._end_line()

    def _end_line(self) -> None:
        if self._words:
            self.lines.append(ParsedLine(text=" ".join(self._words), hrefs=list(self._links)))
        self._words = []
        self._links = {}


def parse_lines(html: bytes | str) -> list[ParsedLine]:
    if isinstance(html, bytes):
        html = html.decode("utf-8", errors="replace")
    parser = _LineParser()
    parser.feed(html)
    parser.close()
    return parser.lines


def parse_grant_page(html: bytes | str) -> PatentRecord:
    lines = parse_lines(html)
    patent_id = _find_id(lines, GRANT_ID_LABELS, exclude=APPLICATION_ID_LABELS)
    codes = _find_ipc(lines)
    issued = _issue_date(lines)
    return PatentRecord(
        patent_id=patent_id,
        kind="grant",
        issue_or_filing_date=issued,
        ipc_codes=codes,
        cited_ids=_find_references(lines),
        title=_find_title(lines),
    )


def parse_application_page(html: bytes | str) -> PatentRecord:
    lines = parse_lines(html)
    patent_id = _find_id(lines, APPLICATION_ID_LABELS)
    codes = _find_ipc(lines)
    filed = _labeled_date(lines, FILED_LABELS)
    return PatentRecord(
        patent_id=patent_id,
        kind="application",
        issue_or_filing_date=filed,
        ipc_codes=codes,
        cited_ids=(),
        title=_find_title(lines),
    )


def parse_page(html: bytes | str, kind: Kind) -> PatentRecord:
    if kind == "grant":
        return parse_grant_page(html)
    return parse_application_page(html)


def parse_hitlist_page(html: bytes | str, base_url: str | None = None) -> HitList:
    lines = parse_lines(html)
    if any(marker in line.text for line in lines for marker in NO_HITS_MARKERS):
        return HitList(total_hits=0, record_urls=[], next_page_url=None)

    total = _hit_count(lines)
    record_urls: list[str] = []
    next_page: str | None = None
    for line in lines:
        if not line.hrefs:
            continue
        if line.text.lower().startswith("next "):
            next_page = _absolute(base_url, line.hrefs[0])
            continue
        if _ID_RE.match(line.text):
            url = _absolute(base_url, line.hrefs[0])
            if url not in record_urls:
                record_urls.append(url)
    return HitList(total_hits=total, record_urls=record_urls, next_page_url=next_page)


def normalize_id(text: str) -> str:
    return text.replace(",", "").strip()


def split_ipc_field(text: str) -> list[IpcCode]:
    """Split a classification cell like ``H04L 12/58 (20060101); G06F 15/16``."""
    codes: list[IpcCode] = []
    for chunk in re.split(r"[;,]", text):
        chunk = re.sub(r"\(\s*\d+\s*\)", " ", chunk).strip()
        if not chunk:
            continue
        match = _IPC_PREFIX_RE.match(chunk)
        if match is None:
            logger.debug("ignoring classification fragment %r", chunk)
            continue
        try:
            codes.append(parse_ipc(match.group(0)))
        except MalformedIpc:
            logger.debug("ignoring classification fragment %r", chunk)
    return codes


def _find_id(
    lines: list[ParsedLine], labels: tuple[str, ...], exclude: tuple[str, ...] = ()
) -> str:
    for position, line in enumerate(lines):
        for label in labels:
            if not line.text.startswith(label):
                continue
            if any(line.text.startswith(other) for other in exclude):
                continue
            rest = line.text[len(label) :].lstrip(" :")
            candidate = rest or _next_text(lines, position)
            candidate = normalize_id(candidate.split()[0]) if candidate else ""
            if candidate and _ID_RE.match(candidate):
                return candidate
    raise ParseFailure("patent_id")


def _find_ipc(lines: list[ParsedLine]) -> tuple[IpcCode, ...]:
    for label in IPC_LABELS:
        value = _labeled_value(lines, label)
        if value is None:
            continue
        codes = split_ipc_field(value)
        if codes:
            return tuple(codes)
        raise ParseFailure("ipc", f"no IPC symbol in {value!r}")
    raise ParseFailure("ipc")


def _find_references(lines: list[ParsedLine]) -> tuple[str, ...]:
    cited: list[str] = []
    inside = False
    for line in lines:
        if not inside:
            inside = any(line.text.startswith(label) for label in REFERENCES_START)
            continue
        if any(line.text.startswith(label) for label in REFERENCES_END):
            break
        if _ID_RE.match(line.text):
            cited.append(normalize_id(line.text))
    return tuple(cited)


def _find_title(lines: list[ParsedLine]) -> str:
    for position, line in enumerate(lines):
        if line.text == "Abstract" and position > 0:
            title = lines[position - 1].text
            if not _DATE_RE.match(title):
                return title
    return ""


def _issue_date(lines: list[ParsedLine]) -> date | None:
    for line in lines:
        if line.text == "Abstract":
            break
        if _DATE_RE.match(line.text):
            return _parse_date(line.text)
    logger.warning("issue date not found; record kept with unknown date")
    return None


def _labeled_date(lines: list[ParsedLine], labels: tuple[str, ...]) -> date | None:
    for label in labels:
        value = _labeled_value(lines, label)
        if value:
            return _parse_date(value)
    logger.warning("filing date not found; record kept with unknown date")
    return None


def _parse_date(text: str) -> date | None:
    cleaned = text.replace(".", "").strip()
    for pattern in ("%B %d, %Y", "%b %d, %Y"):
        try:
            return datetime.strptime(cleaned, pattern).date()
        except ValueError:
            continue
    logger.warning("unparsable date %r; record kept with unknown date", text)
    return None


def _labeled_value(lines: list[ParsedLine], label: str) -> str | None:
    for position, line in enumerate(lines):
        if line.text.startswith(label):
            rest = line.text[len(label) :].strip()
            return rest or _next_text(lines, position)
    return None


def _next_text(lines: list[ParsedLine], position: int) -> str:
    if position + 1 < len(lines):
        return lines[position + 1].text
    return ""


def _hit_count(lines: list[ParsedLine]) -> int:
    for pattern in (_HITS_RE, _HITS_ALT_RE):
        for line in lines:
            match = pattern.search(line.text)
            if match:
                return int(match.group(1).replace(",", ""))
    raise ParseFailure("hitcount")


def _absolute(base_url: str | None, href: str) -> str:
    return urljoin(base_url, href) if base_url else href
