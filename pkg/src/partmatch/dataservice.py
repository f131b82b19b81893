"""Central store for entities, partition payloads and match results."""

from __future__ import annotations

import csv
import io
import threading
from collections import Counter
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

from .errors import IntegrityError, LoadError, PartitionNotFound, UnknownTaskError
from .model import DEFAULT_SOURCE, Correspondence, Entity, EntityKey, MatchResult, MatchTask, Partition


@dataclass(frozen=True)
class Schema:
    """Column mapping for delimited input.

    ``attributes=None`` keeps every non-id column. Empty cells load as absent
    values.
    """

    id_column: str = "id"
    blocking_column: str | None = None
    attributes: tuple[str, ...] | None = None
    delimiter: str = ","


def read_entities(stream: TextIO, schema: Schema, source_id: str = DEFAULT_SOURCE) -> Iterator[Entity]:
    """Parse a header-prefixed delimited stream into entities.

    Raises :class:`LoadError` carrying the physical line number of the bad
    record; duplicate ids within the stream are rejected.
    """
    reader = csv.reader(stream, delimiter=schema.delimiter, strict=True)
    try:
        header = next(reader)
    except StopIteration:
        raise LoadError("input is empty, expected a header row", 1) from None
    except csv.Error as exc:
        raise LoadError(str(exc), reader.line_num) from None
    header = [h.strip() for h in header]
    if schema.id_column not in header:
        raise LoadError(f"id column {schema.id_column!r} missing from header {header}", 1)
    wanted = [h for h in header if h != schema.id_column] if schema.attributes is None else list(schema.attributes)
    for col in wanted + ([schema.blocking_column] if schema.blocking_column else []):
        if col not in header:
            raise LoadError(f"column {col!r} missing from header {header}", 1)
    if schema.blocking_column and schema.blocking_column not in wanted:
        wanted.append(schema.blocking_column)
    id_pos = header.index(schema.id_column)
    positions = [(name, header.index(name)) for name in wanted]

    seen: dict[str, int] = {}
    while True:
        try:
            row = next(reader)
        except StopIteration:
            return
        except csv.Error as exc:
            raise LoadError(f"malformed record: {exc}", reader.line_num) from None
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(header):
            raise LoadError(f"expected {len(header)} fields, found {len(row)}", line)
        eid = row[id_pos].strip()
        if not eid:
            raise LoadError("empty id", line)
        if eid in seen:
            raise LoadError(f"duplicate id {eid!r} (first seen on line {seen[eid]})", line)
        seen[eid] = line
        attrs = {name: (row[pos] if row[pos] != "" else None) for name, pos in positions}
        yield Entity(eid, source_id, attrs)


def format_entity_id(key: EntityKey, qualified: bool) -> str:
    return f"{key[0]}:{key[1]}" if qualified else key[1]


def write_correspondences(
    out: TextIO | str | Path, correspondences: Iterable[Correspondence], *, qualified: bool | None = None
) -> None:
    """Write ``idA,idB,sim`` rows sorted by ``(idA, idB)`` with 6-decimal similarities.

    Ids are written ``source:id`` when the result spans several sources.
    """
    corrs = list(correspondences)
    if qualified is None:
        qualified = len({k[0] for c in corrs for k in (c.a, c.b)}) > 1
    rows = sorted(
        (format_entity_id(c.a, qualified), format_entity_id(c.b, qualified), c.sim) for c in corrs
    )
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="", encoding="utf-8") as fh:
            _write_rows(fh, rows)
    else:
        _write_rows(out, rows)


def _write_rows(fh: TextIO, rows: Sequence[tuple[str, str, float]]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["idA", "idB", "sim"])
    for a, b, s in rows:
        w.writerow([a, b, f"{s:.6f}"])


def write_entities(out: TextIO, entities: Sequence[Entity], columns: Sequence[str], delimiter: str = ",") -> None:
    w = csv.writer(out, delimiter=delimiter, lineterminator="\n")
    w.writerow(["id", *columns])
    for e in entities:
        w.writerow([e.id, *((e.get(c) or "") for c in columns)])


class DataStore:
    """In-memory data service.

    Mutations are serialized by one lock; partition payloads are immutable
    tuples and can be handed out without copying.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.entities: dict[EntityKey, Entity] = {}
        self._partitions: dict[str, tuple[Entity, ...]] = {}
        self.fetch_counter: Counter[str] = Counter()
        self._tasks: set[str] = set()
        self._results: dict[str, MatchResult] = {}

    # -- entities ----------------------------------------------------------
    def add_entities(self, entities: Iterable[Entity]) -> int:
        batch = list(entities)
        with self._lock:
            for e in batch:
                if e.key in self.entities:
                    raise LoadError(f"duplicate entity {e.source_id}:{e.id}")
            keys = [e.key for e in batch]
            if len(set(keys)) != len(keys):
                dup = next(k for k, n in Counter(keys).items() if n > 1)
                raise LoadError(f"duplicate entity {dup[0]}:{dup[1]}")
            for e in batch:
                self.entities[e.key] = e
        return len(batch)

    def load_entities(self, source: TextIO | str | Path, schema: Schema, source_id: str = DEFAULT_SOURCE) -> int:
        if isinstance(source, (str, Path)):
            with open(source, newline="", encoding="utf-8") as fh:
                return self.add_entities(read_entities(fh, schema, source_id))
        return self.add_entities(read_entities(source, schema, source_id))

    def entities_of(self, source_id: str | None = None) -> list[Entity]:
        return [e for e in self.entities.values() if source_id is None or e.source_id == source_id]

    # -- partitions --------------------------------------------------------
    def register_partitions(self, partitions: Iterable[Partition]) -> None:
        with self._lock:
            for p in partitions:
                payload = tuple(self.entities[k] for k in p.members)
                existing = self._partitions.get(p.partition_id)
                if existing is not None and existing != payload:
                    raise IntegrityError(f"partition {p.partition_id} already registered with other members")
                self._partitions[p.partition_id] = payload

    def fetch_partition(self, partition_id: str) -> tuple[Entity, ...]:
        with self._lock:
            try:
                payload = self._partitions[partition_id]
            except KeyError:
                raise PartitionNotFound(partition_id) from None
            self.fetch_counter[partition_id] += 1
        return payload

    @property
    def total_fetches(self) -> int:
        with self._lock:
            return sum(self.fetch_counter.values())

    # -- results -----------------------------------------------------------
    def register_tasks(self, tasks: Iterable[MatchTask]) -> None:
        with self._lock:
            self._tasks.update(t.task_id for t in tasks)

    def store_result(self, result: MatchResult) -> bool:
        """Persist a task result; returns ``False`` for an identical repeat."""
        with self._lock:
            if result.task_id not in self._tasks:
                raise UnknownTaskError(result.task_id)
            prev = self._results.get(result.task_id)
            if prev is None:
                self._results[result.task_id] = result
                return True
            if prev.same_outcome(result):
                return False
            raise IntegrityError(f"task {result.task_id} completed twice with different results")

    def has_result(self, task_id: str) -> bool:
        with self._lock:
            return task_id in self._results

    def results(self) -> list[MatchResult]:
        with self._lock:
            return list(self._results.values())


def entities_from_rows(rows: Iterable[Mapping[str, str | None]], id_column: str = "id", source_id: str = DEFAULT_SOURCE) -> list[Entity]:
    return [
        Entity(str(r[id_column]), source_id, {k: v for k, v in r.items() if k != id_column}) for r in rows
    ]


def parse_entities(text: str, schema: Schema | None = None, source_id: str = DEFAULT_SOURCE) -> list[Entity]:
    return list(read_entities(io.StringIO(text), schema or Schema(), source_id))
