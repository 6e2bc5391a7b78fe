from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class FetchState:
    db: str = ""
    query: str = ""
    next_start: int = 1
    total_hits: int = 0
    complete: bool = False

    def matches(self, db: str, query: str) -> bool:
        return self.db == db and self.query == query


def load_state(path: Path) -> FetchState:
    if not path.exists():
        return FetchState()
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        logger.warning("ignoring unreadable resume state %s", path)
        return FetchState()
    if not isinstance(data, dict):
        return FetchState()
    return FetchState(
        db=str(data.get("db", "")),
        query=str(data.get("query", "")),
        next_start=int(data.get("next_start", 1)),
        total_hits=int(data.get("total_hits", 0)),
        complete=bool(data.get("complete", False)),
    )


def save_state(path: Path, state: FetchState) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "complete": state.complete,
        "db": state.db,
        "next_start": state.next_start,
        "query": state.query,
        "total_hits": state.total_hits,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
