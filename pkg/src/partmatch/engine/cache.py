"""Per-worker LRU partition cache shared by all of a worker's threads."""

from __future__ import annotations

import threading
from collections import OrderedDict
from collections.abc import Callable
from dataclasses import dataclass
from typing import Any


@dataclass(frozen=True)
class Access:
    payload: Any
    hit: bool
    evicted: str | None = None


class PartitionCache:
    """Holds at most ``capacity`` partitions; ``capacity == 0`` disables caching."""

    def __init__(self, capacity: int) -> None:
        if capacity < 0:
            raise ValueError("cache capacity must be >= 0")
        self.capacity = capacity
        self._entries: OrderedDict[str, Any] = OrderedDict()
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, partition_id: str) -> bool:
        return partition_id in self._entries

    def resident(self) -> tuple[str, ...]:
        """Resident ids, least recently used first."""
        with self._lock:
            return tuple(self._entries)

    def lookup(self, partition_id: str) -> tuple[bool, Any]:
        with self._lock:
            if partition_id in self._entries:
                self._entries.move_to_end(partition_id)
                return True, self._entries[partition_id]
        return False, None

    def insert(self, partition_id: str, payload: Any) -> str | None:
        """Add ``payload`` as most recently used; returns the evicted id, if any."""
        if self.capacity == 0:
            return None
        with self._lock:
            if partition_id in self._entries:
                self._entries.move_to_end(partition_id)
                return None
            victim = None
            if len(self._entries) >= self.capacity:
                victim, _ = self._entries.popitem(last=False)
            self._entries[partition_id] = payload
            return victim

    def access(self, partition_id: str, fetch: Callable[[str], Any]) -> Access:
        """Serve from the cache or call ``fetch`` on a miss and cache the result.

        The fetch runs outside the lock so other threads keep hitting the cache
        while a slow fetch is in progress.
        """
        hit, payload = self.lookup(partition_id)
        if hit:
            return Access(payload, True)
        payload = fetch(partition_id)
        return Access(payload, False, self.insert(partition_id, payload))
