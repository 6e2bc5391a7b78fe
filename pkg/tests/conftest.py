from __future__ import annotations

import random
from collections.abc import Callable, Sequence
from datetime import date
from pathlib import Path

import pytest

from ipc_maps.ingest import write_canonical
from ipc_maps.models import Kind, PatentRecord, parse_ipc
from ipc_maps.scheme import IpcScheme, load_scheme

FIXTURES = Path(__file__).parent / "fixtures"

# Three technology groups that cite mostly within themselves.
GROUPS: tuple[tuple[str, ...], ...] = (
    ("A01B", "A01C", "A01K", "B60K", "F16H"),
    ("H04L", "H04N", "G06F", "G06Q", "H01L"),
    ("C07D", "C07K", "A61K", "C12N", "A61B"),
)


@pytest.fixture(scope="session")
def scheme() -> IpcScheme:
    return load_scheme()


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def make_record(
    patent_id: str,
    codes: Sequence[str],
    cited: Sequence[str] = (),
    day: date | None = date(2007, 6, 1),
    kind: Kind = "grant",
    title: str = "",
) -> PatentRecord:
    return PatentRecord(
        patent_id=patent_id,
        kind=kind,
        issue_or_filing_date=day,
        ipc_codes=tuple(parse_ipc(code) for code in codes),
        cited_ids=tuple(cited),
        title=title,
    )


@pytest.fixture
def record() -> Callable[..., PatentRecord]:
    return make_record


def synthetic_records(count: int = 600, seed: int = 3) -> list[PatentRecord]:
    """Patents in three citation communities, issued 2005-2008."""
    rng = random.Random(seed)
    records: list[PatentRecord] = []
    for number in range(count):
        group = number % len(GROUPS)
        members = GROUPS[group]
        codes = [rng.choice(members)]
        if rng.random() < 0.4:
            codes.append(rng.choice(members))
        cited: list[str] = []
        for _ in range(rng.randint(2, 6) if number >= 30 else 0):
            target = rng.randrange(number)
            if rng.random() < 0.9:
                # Same community: step to a patent with the same group index.
                target -= (target - group) % len(GROUPS)
                if target < 0:
                    continue
            cited.append(f"P{target:05d}")
        records.append(
            make_record(
                f"P{number:05d}",
                codes,
                cited,
                day=date(2005 + number % 4, 1 + number % 12, 1 + number % 28),
                title=f"Synthetic patent {number}",
            )
        )
    return records


@pytest.fixture
def corpus_file(tmp_path: Path) -> Path:
    path = tmp_path / "corpus.tsv"
    with path.open("w", encoding="utf-8", newline="") as handle:
        write_canonical(synthetic_records(), handle)
    return path


@pytest.fixture
def patent_set_file(tmp_path: Path) -> Path:
    path = tmp_path / "patent-set.tsv"
    records = [
        make_record("S1", ["A01B 1/00", "A01C 5/06"], day=date(2006, 3, 1)),
        make_record("S2", ["H04L 12/58"], day=date(2006, 5, 1)),
        make_record("S3", ["H04N 5/225", "G06F 3/01"], day=date(2008, 7, 1)),
        make_record("S4", ["C07D 401/04", "A61K 31/00"], day=date(2008, 9, 1)),
    ]
    with path.open("w", encoding="utf-8", newline="") as handle:
        write_canonical(records, handle)
    return path
