"""Exception hierarchy shared by every partmatch module."""

from __future__ import annotations


class PartmatchError(Exception):
    """Base class for all errors raised by partmatch."""


class ConfigurationError(PartmatchError, ValueError):
    """A run, strategy or sizing setting is invalid.

    ``field`` names the offending setting (dotted path) when known.
    """

    def __init__(self, message: str, field: str | None = None) -> None:
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class SelfPairError(PartmatchError, ValueError):
    """An entity was paired with itself."""


class IntegrityError(PartmatchError):
    """Two results disagree about the same entity pair or task."""


class LoadError(PartmatchError):
    """Input data could not be loaded."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class PartitionNotFound(PartmatchError, KeyError):
    def __str__(self) -> str:
        return f"unknown partition {self.args[0]!r}"


class UnknownTaskError(PartmatchError, KeyError):
    def __str__(self) -> str:
        return f"unknown task {self.args[0]!r}"


class DuplicateWorkerError(PartmatchError, ValueError):
    pass


class PartialResultsError(PartmatchError):
    """The run stopped before every task completed.

    ``correspondences`` holds whatever was merged from completed tasks and
    ``open_tasks`` the ids that never finished.
    """

    def __init__(self, message: str, correspondences=frozenset(), open_tasks=()) -> None:
        self.correspondences = correspondences
        self.open_tasks = tuple(open_tasks)
        super().__init__(message)
