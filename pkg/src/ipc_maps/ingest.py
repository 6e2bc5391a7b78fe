"""Record sources and the canonical line-delimited record format.

Canonical line: ``patent_id<TAB>G|A<TAB>YYYY-MM-DD|?<TAB>ipc;ipc<TAB>cited;cited<TAB>title``.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Literal, TextIO

from .errors import DataError, MalformedIpc, MalformedRecord, ParseFailure
from .models import PatentRecord, parse_ipc
from .uspto import parse_page

logger = logging.getLogger(__name__)

SourceKind = Literal["grant_html", "application_html", "canonical"]

_KIND_CODES = {"G": "grant", "A": "application"}
_KIND_LETTERS = {"grant": "G", "application": "A"}
_HTML_SUFFIXES = {".html", ".htm"}


@dataclass(frozen=True, slots=True)
class RecordSource:
    kind: SourceKind
    origin: str


@dataclass(slots=True)
class IngestTally:
    records: int = 0
    errors: int = 0

    def count(self, item: PatentRecord | DataError) -> None:
        if isinstance(item, PatentRecord):
            self.records += 1
        else:
            self.errors += 1


def read_canonical(stream: Iterable[str]) -> Iterator[PatentRecord | MalformedRecord]:
    for number, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        try:
            yield _parse_line(line, number)
        except MalformedRecord as exc:
            yield exc


def write_canonical(records: Iterable[PatentRecord], stream: TextIO) -> int:
    written = 0
    for record in records:
        stream.write(format_canonical(record))
        stream.write("\n")
        written += 1
    return written


def format_canonical(record: PatentRecord) -> str:
    day = record.issue_or_filing_date.isoformat() if record.issue_or_filing_date else "?"
    fields = [
        record.patent_id,
        _KIND_LETTERS[record.kind],
        day,
        ";".join(code.full_symbol for code in record.ipc_codes),
        ";".join(record.cited_ids),
        record.title.replace("\t", " ").replace("\r", " ").replace("\n", " "),
    ]
    return "\t".join(fields)


def read_records(source: RecordSource) -> Iterator[PatentRecord | DataError]:
    """Yield records and per-item errors from any supported source."""
    if source.kind == "canonical":
        with open(source.origin, encoding="utf-8", newline="") as handle:
            yield from read_canonical(handle)
        return

    kind = "grant" if source.kind == "grant_html" else "application"
    for name, page in _html_pages(source.origin):
        try:
            yield parse_page(page, kind)
        except ParseFailure as exc:
            logger.warning("%s: %s", name, exc)
            yield exc


def iter_admissible(
    items: Iterable[PatentRecord | DataError], tally: IngestTally | None = None
) -> Iterator[PatentRecord]:
    """Drop per-item errors, logging each one."""
    tally = tally if tally is not None else IngestTally()
    for item in items:
        tally.count(item)
        if isinstance(item, PatentRecord):
            yield item
        else:
            logger.warning("skipped record: %s", item)
    if tally.errors:
        logger.info("read %d records, skipped %d", tally.records, tally.errors)


def source_for(path: str, kind: SourceKind | None = None) -> RecordSource:
    if kind is not None:
        return RecordSource(kind=kind, origin=path)
    target = Path(path)
    if target.is_dir() or target.suffix.lower() in _HTML_SUFFIXES:
        return RecordSource(kind="grant_html", origin=path)
    return RecordSource(kind="canonical", origin=path)


def _parse_line(line: str, number: int) -> PatentRecord:
    parts = line.split("\t", 5)
    if len(parts) != 6:
        raise MalformedRecord(number, f"expected 6 tab-separated fields, found {len(parts)}")
    patent_id, kind_code, day, ipc_field, cited_field, title = parts
    if not patent_id.strip():
        raise MalformedRecord(number, "empty patent id")
    kind = _KIND_CODES.get(kind_code)
    if kind is None:
        raise MalformedRecord(number, f"unknown kind {kind_code!r}")
    if not ipc_field:
        raise MalformedRecord(number, "empty ipc list")
    try:
        codes = tuple(parse_ipc(symbol) for symbol in ipc_field.split(";"))
    except MalformedIpc as exc:
        raise MalformedRecord(number, str(exc)) from exc
    return PatentRecord(
        patent_id=patent_id,
        kind=kind,
        issue_or_filing_date=_parse_day(day, number),
        ipc_codes=codes,
        cited_ids=tuple(cited_field.split(";")) if cited_field else (),
        title=title,
    )


def _parse_day(text: str, number: int) -> date | None:
    """ISO date, or None for "?" and for dates that do not parse."""
    if text == "?":
        return None
    try:
        parsed = date.fromisoformat(text)
    except ValueError:
        parsed = None
    if parsed is None or parsed.isoformat() != text:
        logger.warning("line %d: bad date %r, year treated as unknown", number, text)
        return None
    return parsed


def _html_pages(origin: str) -> Iterator[tuple[str, bytes]]:
    if origin.startswith(("http://", "https://")):
        from .fetch import HttpTransport

        with HttpTransport() as transport:
            yield origin, transport.get(origin)
        return
    target = Path(origin)
    if target.is_dir():
        for path in sorted(target.iterdir()):
            if path.suffix.lower() in _HTML_SUFFIXES:
                yield path.name, path.read_bytes()
        return
    yield target.name, target.read_bytes()
