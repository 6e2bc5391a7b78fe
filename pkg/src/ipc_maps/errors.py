from __future__ import annotations

from collections.abc import Iterator
from contextlib import contextmanager


class IpcMapsError(Exception):
    """Base for every error the pipeline raises on purpose."""

    exit_code = 1

    def __init__(self, *args: object) -> None:
        super().__init__(*args)
        self.stages: list[str] = []

    def describe(self) -> str:
        return ": ".join([*self.stages, str(self)])


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Tag errors raised inside the block with the pipeline stage name."""
    try:
        yield
    except IpcMapsError as exc:
        exc.stages.insert(0, name)
        raise


class ConfigError(IpcMapsError):
    exit_code = 2


class DataError(IpcMapsError):
    exit_code = 3


class TransportError(IpcMapsError):
    exit_code = 4


class MalformedIpc(DataError):
    def __init__(self, symbol: str) -> None:
        super().__init__(f"malformed IPC symbol: {symbol!r}")
        self.symbol = symbol


class SchemeError(DataError):
    pass


class ParseFailure(DataError):
    def __init__(self, field: str, detail: str = "") -> None:
        message = f"could not locate field {field!r}"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)
        self.field = field


class MalformedRecord(DataError):
    def __init__(self, line_number: int, reason: str) -> None:
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


class EmptyCorpus(DataError):
    pass


class LevelMismatch(DataError):
    def __init__(self, expected: int, actual: int) -> None:
        super().__init__(f"level mismatch: expected {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class MissingBasemap(DataError):
    pass


class IndexMisalignment(DataError):
    pass


class LengthMismatch(DataError):
    def __init__(self, expected: int, actual: int) -> None:
        super().__init__(f"length mismatch: expected {expected} values, got {actual}")
        self.expected = expected
        self.actual = actual


class PajekSyntaxError(DataError):
    def __init__(self, line: int, reason: str) -> None:
        super().__init__(f"pajek line {line}: {reason}")
        self.line = line


class VosSyntaxError(DataError):
    def __init__(self, line: int, reason: str) -> None:
        super().__init__(f"vos map line {line}: {reason}")
        self.line = line


class UnrecognizedUrl(DataError):
    def __init__(self, url: str) -> None:
        super().__init__(f"not a recognized search url: {url!r}")
        self.url = url
