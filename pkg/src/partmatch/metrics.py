"""Run metrics reported by the engine and the CLI."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field


@dataclass
class RunMetrics:
    task_count: int
    partition_count: int
    total_elapsed: float
    per_worker_busy_time: dict[str, float] = field(default_factory=dict)
    pairs_compared: int = 0
    fetches: int = 0
    cache_hits: int = 0
    hit_ratio: float = 0.0
    correspondence_count: int = 0
    speedup_baseline: float | None = None

    @classmethod
    def build(cls, **kw) -> RunMetrics:
        hits, fetches = kw.get("cache_hits", 0), kw.get("fetches", 0)
        kw["hit_ratio"] = hits / (hits + fetches) if hits + fetches else 0.0
        return cls(**kw)

    @property
    def partition_accesses(self) -> int:
        return self.cache_hits + self.fetches

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
