from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from datetime import date
from typing import Literal

from .errors import IndexMisalignment, MalformedIpc

Kind = Literal["grant", "application"]
Level = Literal[3, 4]

LEVELS: tuple[int, ...] = (3, 4)
SECTIONS = "ABCDEFGH"

_IPC_RE = re.compile(
    r"""
    ^(?P<section>[A-H])
    \s*(?P<class2>\d{2})
    (?:
        \s*(?P<subclass>[A-Z])
        (?:\s*\d{1,4}(?:\s*/\s*\d{1,6})?)?
    )?
    $""",
    re.VERBOSE | re.IGNORECASE,
)


@dataclass(frozen=True, slots=True)
class IpcCode:
    section: str
    class2: str
    subclass: str | None
    full_symbol: str

    def level3(self) -> str:
        return f"{self.section}{self.class2}"

    def level4(self) -> str | None:
        if self.subclass is None:
            return None
        return f"{self.section}{self.class2}{self.subclass}"

    def at_level(self, level: int) -> str | None:
        return self.level3() if level == 3 else self.level4()


def parse_ipc(symbol: str) -> IpcCode:
    """Parse an IPC symbol such as ``A01B`` or ``h04l 12/58``.

    Group and subgroup digits are accepted and discarded; the stored
    ``full_symbol`` keeps the trimmed input so records re-serialize unchanged.
    """
    text = symbol.strip()
    match = _IPC_RE.match(text)
    if not text or match is None:
        raise MalformedIpc(symbol)
    subclass = match.group("subclass")
    return IpcCode(
        section=match.group("section").upper(),
        class2=match.group("class2"),
        subclass=subclass.upper() if subclass else None,
        full_symbol=text,
    )


@dataclass(frozen=True, slots=True)
class PatentRecord:
    patent_id: str
    kind: Kind
    issue_or_filing_date: date | None
    ipc_codes: tuple[IpcCode, ...]
    cited_ids: tuple[str, ...] = ()
    title: str = ""

    @property
    def primary(self) -> IpcCode | None:
        return self.ipc_codes[0] if self.ipc_codes else None

    @property
    def year(self) -> int | None:
        return self.issue_or_filing_date.year if self.issue_or_filing_date else None


@dataclass(frozen=True, slots=True)
class ClassCitationMatrix:
    """Citing x cited counts between IPC classes at one digit level."""

    level: int
    classes: tuple[str, ...]
    counts: dict[tuple[int, int], int]

    def __post_init__(self) -> None:
        size = len(self.classes)
        for (row, col), value in self.counts.items():
            if not (0 <= row < size and 0 <= col < size):
                raise IndexMisalignment(f"cell ({row}, {col}) outside {size} classes")
            if value < 0:
                raise ValueError(f"negative count at ({row}, {col})")

    @property
    def total_citations(self) -> int:
        return sum(self.counts.values())

    @property
    def links(self) -> int:
        return sum(1 for value in self.counts.values() if value)

    def cell(self, citing: str, cited: str) -> int:
        index = {symbol: i for i, symbol in enumerate(self.classes)}
        return self.counts.get((index[citing], index[cited]), 0)

    def row_sums(self) -> list[int]:
        sums = [0] * len(self.classes)
        for (row, _), value in self.counts.items():
            sums[row] += value
        return sums

    def to_sparse(self):
        from scipy import sparse

        size = len(self.classes)
        if not self.counts:
            return sparse.csr_matrix((size, size), dtype=float)
        rows, cols = zip(*self.counts, strict=True)
        values = list(self.counts.values())
        return sparse.csr_matrix((values, (rows, cols)), shape=(size, size), dtype=float)


@dataclass(frozen=True, slots=True)
class BaseMapEntry:
    symbol: str
    label: str
    x: float
    y: float
    cluster: int
    citations: int = 0
    isolated: bool = False


@dataclass(frozen=True, slots=True)
class BaseMap:
    level: int
    entries: tuple[BaseMapEntry, ...]
    stress: float = 0.0

    def __post_init__(self) -> None:
        for entry in self.entries:
            if not (math.isfinite(entry.x) and math.isfinite(entry.y)):
                raise ValueError(f"non-finite coordinate for {entry.symbol}")
        clusters = {entry.cluster for entry in self.entries}
        if clusters and clusters != set(range(1, len(clusters) + 1)):
            raise ValueError(f"cluster ids are not contiguous from 1: {sorted(clusters)}")

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(entry.symbol for entry in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(slots=True)
class Overlay:
    level: int
    weights: dict[str, float]
    patent_count: int
    class_attribution_count: int
    diversity: float = 0.0
    skipped: int = 0
    patent_counts: dict[str, int] = field(default_factory=dict)

    def weight(self, symbol: str) -> float:
        return self.weights.get(symbol, 0.0)
