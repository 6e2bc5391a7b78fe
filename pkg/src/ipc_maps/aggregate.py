from __future__ import annotations

import logging
import shutil
import sqlite3
import tempfile
from collections import Counter
from collections.abc import Callable, Iterable, Iterator, Sequence
from concurrent.futures import FIRST_COMPLETED, Future, ProcessPoolExecutor, wait
from dataclasses import dataclass, field
from itertools import islice
from pathlib import Path

from .errors import DataError, EmptyCorpus
from .models import LEVELS, ClassCitationMatrix, IpcCode, PatentRecord, parse_ipc
from .scheme import IpcScheme

logger = logging.getLogger(__name__)

_FLUSH_EVERY = 10_000
_SQL_BATCH = 900
# Level-4 projection of a code that carries no subclass; never valid in a scheme.
_NO_SUBCLASS = "-"

Pair = tuple[str, str]
Chunk = list[tuple[str | None, tuple[str, ...]]]


@dataclass(frozen=True, slots=True)
class DuplicateId:
    patent_id: str
    kept: str
    rejected: str


@dataclass(slots=True)
class CorrectionReport:
    level: int
    classes_before: int = 0
    links_before: int = 0
    citations_before: int = 0
    classes_after: int = 0
    links_after: int = 0
    citations_after: int = 0
    unresolvable: int = 0
    duplicate_references: int = 0
    records: int = 0
    skipped_records: int = 0
    dropped_classes: list[str] = field(default_factory=list)


class PrimaryIndex:
    """Patent id to primary class, spilling to SQLite past ``memory_cap`` ids."""

    def __init__(self, memory_cap: int = 2_000_000, path: str | Path | None = None) -> None:
        self.memory_cap = memory_cap
        self.conflicts: list[DuplicateId] = []
        self._memory: dict[str, str] = {}
        self._pending: dict[str, str] = {}
        self._requested_path = Path(path) if path else None
        self._tmpdir: str | None = None
        self._path: Path | None = None
        self._conn: sqlite3.Connection | None = None
        self._size = 0

    @property
    def spilled(self) -> bool:
        return self._conn is not None

    @property
    def path(self) -> Path | None:
        return self._path

    def add(self, patent_id: str, code: IpcCode) -> None:
        symbol = code.level4() or code.level3()
        if self._conn is None:
            existing = self._memory.get(patent_id)
            if existing is None:
                self._memory[patent_id] = symbol
                self._size += 1
                if self._size > self.memory_cap:
                    self._spill()
            elif existing != symbol:
                self._conflict(patent_id, existing, symbol)
            return

        existing = self._pending.get(patent_id)
        if existing is None:
            self._pending[patent_id] = symbol
            if len(self._pending) >= _FLUSH_EVERY:
                self._flush()
        elif existing != symbol:
            self._conflict(patent_id, existing, symbol)

    def freeze(self) -> PrimaryIndex:
        if self._conn is not None:
            self._flush()
            self._conn.commit()
        return self

    def symbol(self, patent_id: str) -> str | None:
        if self._conn is None:
            return self._memory.get(patent_id)
        return self.lookup_many([patent_id]).get(patent_id)

    def lookup_many(self, ids: Iterable[str]) -> dict[str, str]:
        return _lookup(self._memory if self._conn is None else self._conn, ids)

    def get(self, patent_id: str) -> IpcCode | None:
        symbol = self.symbol(patent_id)
        return parse_ipc(symbol) if symbol else None

    def __getitem__(self, patent_id: str) -> IpcCode:
        code = self.get(patent_id)
        if code is None:
            raise KeyError(patent_id)
        return code

    def __contains__(self, patent_id: object) -> bool:
        return isinstance(patent_id, str) and self.symbol(patent_id) is not None

    def __len__(self) -> int:
        return self._size

    def items(self) -> Iterator[tuple[str, str]]:
        if self._conn is None:
            yield from self._memory.items()
            return
        yield from self._conn.execute("SELECT patent_id, symbol FROM primary_class")

    def reader(self) -> dict[str, str] | str:
        """Picklable handle for worker processes."""
        if self._conn is None:
            return self._memory
        return str(self._path)

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None
        if self._tmpdir:
            shutil.rmtree(self._tmpdir, ignore_errors=True)
            self._tmpdir = None

    def __enter__(self) -> PrimaryIndex:
        return self

    def __exit__(self, *_: object) -> None:
        self.close()

    def _conflict(self, patent_id: str, kept: str, rejected: str) -> None:
        self.conflicts.append(DuplicateId(patent_id=patent_id, kept=kept, rejected=rejected))
        logger.warning(
            "duplicate id %s with different primary classes: kept %s, ignored %s",
            patent_id,
            kept,
            rejected,
        )

    def _spill(self) -> None:
        if self._requested_path is not None:
            self._path = self._requested_path
            self._path.parent.mkdir(parents=True, exist_ok=True)
            self._path.unlink(missing_ok=True)
        else:
            self._tmpdir = tempfile.mkdtemp(prefix="ipc-maps-index-")
            self._path = Path(self._tmpdir) / "index.sqlite"
        logger.info("index exceeds %d ids; spilling to %s", self.memory_cap, self._path)
        self._conn = sqlite3.connect(self._path)
        self._conn.execute("PRAGMA journal_mode=OFF")
        self._conn.execute("PRAGMA synchronous=OFF")
        self._conn.execute(
            "CREATE TABLE primary_class (patent_id TEXT PRIMARY KEY, symbol TEXT NOT NULL)"
        )
        self._conn.executemany("INSERT INTO primary_class VALUES (?, ?)", self._memory.items())
        self._conn.commit()
        self._memory = {}

    def _flush(self) -> None:
        if not self._pending or self._conn is None:
            return
        existing = self.lookup_many(self._pending)
        fresh = []
        for patent_id, symbol in self._pending.items():
            kept = existing.get(patent_id)
            if kept is None:
                fresh.append((patent_id, symbol))
            elif kept != symbol:
                self._conflict(patent_id, kept, symbol)
        self._conn.executemany("INSERT INTO primary_class VALUES (?, ?)", fresh)
        self._size += len(fresh)
        self._pending = {}


def two_pass_index(
    records: Iterable[PatentRecord],
    memory_cap: int = 2_000_000,
    path: str | Path | None = None,
) -> PrimaryIndex:
    """First pass over the corpus: map every patent id to its primary class."""
    index = PrimaryIndex(memory_cap=memory_cap, path=path)
    for record in records:
        if record.primary is not None:
            index.add(record.patent_id, record.primary)
    index.freeze()
    logger.info(
        "indexed %d patents (%s, %d conflicts)",
        len(index),
        "on disk" if index.spilled else "in memory",
        len(index.conflicts),
    )
    return index


@dataclass(slots=True)
class _Tally:
    counts: dict[int, Counter[Pair]]
    unresolvable: int = 0
    duplicate_references: int = 0
    records: int = 0
    skipped: int = 0

    def merge(self, other: _Tally) -> None:
        for level, counter in other.counts.items():
            self.counts[level].update(counter)
        self.unresolvable += other.unresolvable
        self.duplicate_references += other.duplicate_references
        self.records += other.records
        self.skipped += other.skipped


def build_citation_matrices(
    records: Iterable[PatentRecord],
    index: PrimaryIndex,
    scheme: IpcScheme,
    levels: Sequence[int] = LEVELS,
    workers: int = 1,
    chunk_size: int = 50_000,
) -> dict[int, tuple[ClassCitationMatrix, CorrectionReport]]:
    """Second pass: aggregate primary-class citations at every requested level."""
    levels = tuple(sorted(set(levels)))
    for level in levels:
        if level not in LEVELS:
            raise DataError(f"unsupported level {level}")
    tally = _aggregate(records, index, levels, workers, chunk_size)

    results: dict[int, tuple[ClassCitationMatrix, CorrectionReport]] = {}
    for level in levels:
        matrix, report = _correct(tally, scheme, level)
        if matrix.total_citations == 0:
            raise EmptyCorpus(f"no admissible citation at level {level}")
        logger.info(
            "level %d: %d classes, %d links, %d citations after correction "
            "(%d before; %d unresolvable references)",
            level,
            report.classes_after,
            report.links_after,
            report.citations_after,
            report.citations_before,
            report.unresolvable,
        )
        results[level] = (matrix, report)
    return results


def build_citation_matrix(
    records: Iterable[PatentRecord],
    index: PrimaryIndex,
    scheme: IpcScheme,
    level: int,
    workers: int = 1,
    chunk_size: int = 50_000,
) -> tuple[ClassCitationMatrix, CorrectionReport]:
    return build_citation_matrices(
        records, index, scheme, levels=(level,), workers=workers, chunk_size=chunk_size
    )[level]


def format_citation_matrix(matrix: ClassCitationMatrix) -> str:
    rows = sorted(
        (matrix.classes[row], matrix.classes[col], count)
        for (row, col), count in matrix.counts.items()
        if count
    )
    lines = [
        f"#level={matrix.level} classes={len(matrix.classes)} "
        f"citations={matrix.total_citations}"
    ]
    lines.extend(f"{citing}\t{cited}\t{count}" for citing, cited, count in rows)
    return "\n".join(lines) + "\n"


def parse_citation_matrix(text: str, classes: Sequence[str]) -> ClassCitationMatrix:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#level="):
        raise DataError("citation matrix: missing header")
    header = dict(part.split("=", 1) for part in lines[0][1:].split())
    level = int(header["level"])
    if int(header["classes"]) != len(classes):
        raise DataError(
            f"citation matrix: header lists {header['classes']} classes, "
            f"index space has {len(classes)}"
        )
    position = {symbol: i for i, symbol in enumerate(classes)}
    counts: dict[tuple[int, int], int] = {}
    for number, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3 or parts[0] not in position or parts[1] not in position:
            raise DataError(f"citation matrix line {number}: {line!r}")
        counts[(position[parts[0]], position[parts[1]])] = int(parts[2])
    matrix = ClassCitationMatrix(level=level, classes=tuple(classes), counts=counts)
    if matrix.total_citations != int(header["citations"]):
        raise DataError("citation matrix: cell sum disagrees with header")
    return matrix


def format_correction_report(report: CorrectionReport) -> str:
    rows = [
        ("classes", report.classes_before, report.classes_after),
        ("links", report.links_before, report.links_after),
        ("citations", report.citations_before, report.citations_after),
    ]
    lines = [f"#level={report.level}", "measure\tbefore\tafter"]
    lines.extend(f"{name}\t{before}\t{after}" for name, before, after in rows)
    lines.append(f"unresolvable\t{report.unresolvable}\t")
    lines.append(f"duplicate_references\t{report.duplicate_references}\t")
    lines.append(f"records\t{report.records}\t")
    lines.append(f"skipped_records\t{report.skipped_records}\t")
    lines.append(f"dropped_classes\t{' '.join(report.dropped_classes)}\t")
    return "\n".join(lines) + "\n"


def _aggregate(
    records: Iterable[PatentRecord],
    index: PrimaryIndex,
    levels: tuple[int, ...],
    workers: int,
    chunk_size: int,
) -> _Tally:
    total = _Tally(counts={level: Counter() for level in levels})
    chunks = _chunks(records, chunk_size)
    if workers <= 1:
        for chunk in chunks:
            total.merge(_count_chunk(chunk, levels, index.lookup_many))
        return total

    with ProcessPoolExecutor(
        max_workers=workers, initializer=_init_worker, initargs=(index.reader(),)
    ) as executor:
        in_flight: set[Future[_Tally]] = set()
        for chunk in chunks:
            in_flight.add(executor.submit(_count_chunk_in_worker, chunk, levels))
            if len(in_flight) >= 2 * workers:
                done, in_flight = wait(in_flight, return_when=FIRST_COMPLETED)
                for future in done:
                    total.merge(future.result())
        for future in in_flight:
            total.merge(future.result())
    return total


def _chunks(records: Iterable[PatentRecord], size: int) -> Iterator[Chunk]:
    iterator = iter(records)
    while True:
        batch = list(islice(iterator, size))
        if not batch:
            return
        yield [(_canonical(record.primary), record.cited_ids) for record in batch]


def _count_chunk(
    chunk: Chunk, levels: tuple[int, ...], lookup: Callable[[Iterable[str]], dict[str, str]]
) -> _Tally:
    tally = _Tally(counts={level: Counter() for level in levels})
    wanted = {cited for symbol, cited_ids in chunk if symbol for cited in cited_ids}
    resolved = lookup(wanted)
    for symbol, cited_ids in chunk:
        if symbol is None:
            tally.skipped += 1
            continue
        tally.records += 1
        unique = tuple(dict.fromkeys(cited_ids))
        tally.duplicate_references += len(cited_ids) - len(unique)
        citing = {level: _project(symbol, level) for level in levels}
        for cited_id in unique:
            target = resolved.get(cited_id)
            if target is None:
                tally.unresolvable += 1
                continue
            for level in levels:
                tally.counts[level][(citing[level], _project(target, level))] += 1
    return tally


_WORKER_SOURCE: dict[str, str] | sqlite3.Connection | None = None


def _init_worker(reader: dict[str, str] | str) -> None:
    global _WORKER_SOURCE
    if isinstance(reader, dict):
        _WORKER_SOURCE = reader
    else:
        _WORKER_SOURCE = sqlite3.connect(f"file:{reader}?mode=ro", uri=True)


def _count_chunk_in_worker(chunk: Chunk, levels: tuple[int, ...]) -> _Tally:
    source = _WORKER_SOURCE
    if source is None:
        raise RuntimeError("aggregation worker used before initialization")
    return _count_chunk(chunk, levels, lambda ids: _lookup(source, ids))


def _lookup(source: dict[str, str] | sqlite3.Connection, ids: Iterable[str]) -> dict[str, str]:
    if isinstance(source, dict):
        return {patent_id: source[patent_id] for patent_id in ids if patent_id in source}
    found: dict[str, str] = {}
    batch_ids = list(ids)
    for start in range(0, len(batch_ids), _SQL_BATCH):
        batch = batch_ids[start : start + _SQL_BATCH]
        marks = ",".join("?" * len(batch))
        query = f"SELECT patent_id, symbol FROM primary_class WHERE patent_id IN ({marks})"
        found.update(source.execute(query, batch))
    return found


def _canonical(code: IpcCode | None) -> str | None:
    if code is None:
        return None
    return code.level4() or code.level3()


def _project(symbol: str, level: int) -> str:
    if level == 3:
        return symbol[:3]
    return symbol if len(symbol) == 4 else symbol[:3] + _NO_SUBCLASS


def _correct(
    tally: _Tally, scheme: IpcScheme, level: int
) -> tuple[ClassCitationMatrix, CorrectionReport]:
    counter = tally.counts[level]
    report = CorrectionReport(
        level=level,
        unresolvable=tally.unresolvable,
        duplicate_references=tally.duplicate_references,
        records=tally.records,
        skipped_records=tally.skipped,
    )
    seen: set[str] = set()
    kept: set[str] = set()
    classes = scheme.usable(level)
    position = {symbol: i for i, symbol in enumerate(classes)}
    counts: dict[tuple[int, int], int] = {}
    for (citing, cited), value in counter.items():
        seen.update((citing, cited))
        report.links_before += 1
        report.citations_before += value
        if citing in position and cited in position:
            counts[(position[citing], position[cited])] = value
            kept.update((citing, cited))
            report.links_after += 1
            report.citations_after += value
    report.classes_before = len(seen)
    report.classes_after = len(kept)
    report.dropped_classes = sorted(symbol for symbol in seen if symbol not in position)
    if report.dropped_classes:
        logger.info("level %d: dropped classes %s", level, ", ".join(report.dropped_classes))
    return ClassCitationMatrix(level=level, classes=classes, counts=counts), report
