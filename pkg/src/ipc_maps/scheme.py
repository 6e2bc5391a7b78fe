from __future__ import annotations

import logging
from collections.abc import Iterable
from dataclasses import dataclass
from importlib import resources

from .errors import SchemeError
from .models import IpcCode

logger = logging.getLogger(__name__)

SCHEME_VERSION = "2012"
EXPECTED_CLASSES = 129
EXPECTED_SUBCLASSES = 637
PLACEHOLDER_HEADING = "subject matter not otherwise provided for"


@dataclass(frozen=True, slots=True)
class IpcScheme:
    valid3: frozenset[str]
    valid4: frozenset[str]
    placeholders: frozenset[str]
    headings: dict[str, str]
    version: str = SCHEME_VERSION

    def usable(self, level: int) -> tuple[str, ...]:
        """Sorted symbols at ``level`` that may carry data."""
        pool = self.valid3 if level == 3 else self.valid4
        return tuple(sorted(pool - self.placeholders))

    def heading(self, symbol: str) -> str:
        return self.headings.get(symbol, symbol)

    def is_valid(self, symbol: str | None, level: int) -> bool:
        if symbol is None or symbol in self.placeholders:
            return False
        pool = self.valid3 if level == 3 else self.valid4
        return symbol in pool


def validate(code: IpcCode, scheme: IpcScheme, level: int) -> bool:
    return scheme.is_valid(code.at_level(level), level)


def load_scheme(expect_counts: bool = True) -> IpcScheme:
    text = resources.files("ipc_maps").joinpath("data", "ipc2012.tsv").read_text(encoding="utf-8")
    scheme = parse_scheme(text.splitlines())
    if expect_counts and (
        len(scheme.valid3) != EXPECTED_CLASSES or len(scheme.valid4) != EXPECTED_SUBCLASSES
    ):
        raise SchemeError(
            f"IPC {SCHEME_VERSION} scheme has {len(scheme.valid3)} classes and "
            f"{len(scheme.valid4)} subclasses, expected "
            f"{EXPECTED_CLASSES}/{EXPECTED_SUBCLASSES}"
        )
    logger.debug(
        "loaded IPC %s scheme: %d classes (%d usable), %d subclasses (%d usable)",
        scheme.version,
        len(scheme.valid3),
        len(scheme.usable(3)),
        len(scheme.valid4),
        len(scheme.usable(4)),
    )
    return scheme


def parse_scheme(lines: Iterable[str]) -> IpcScheme:
    valid3: set[str] = set()
    valid4: set[str] = set()
    headings: dict[str, str] = {}
    for number, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        symbol, sep, heading = line.partition("\t")
        if not sep:
            raise SchemeError(f"scheme line {number}: expected symbol<TAB>heading")
        symbol = symbol.strip()
        if len(symbol) == 3:
            valid3.add(symbol)
        elif len(symbol) == 4:
            valid4.add(symbol)
        else:
            raise SchemeError(f"scheme line {number}: unexpected symbol {symbol!r}")
        headings[symbol] = heading.strip()

    orphans = sorted(symbol for symbol in valid4 if symbol[:3] not in valid3)
    if orphans:
        raise SchemeError(f"subclasses without a parent class: {', '.join(orphans)}")

    placeholders = frozenset(
        symbol for symbol, heading in headings.items() if _is_placeholder(heading)
    )
    return IpcScheme(
        valid3=frozenset(valid3),
        valid4=frozenset(valid4),
        placeholders=placeholders,
        headings=headings,
    )


def scheme_from_entries(entries: dict[str, str]) -> IpcScheme:
    return parse_scheme(f"{symbol}\t{heading}" for symbol, heading in entries.items())


def _is_placeholder(heading: str) -> bool:
    return heading.lower().startswith(PLACEHOLDER_HEADING)
