"""Domain vocabulary: entities, partitions, match tasks, correspondences.

Everything here is immutable once built, so instances can be shared freely
between the coordinator and worker threads.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigurationError, IntegrityError, SelfPairError

# (source_id, entity_id); ordering of these tuples defines canonical orientation.
EntityKey = tuple[str, str]

DEFAULT_SOURCE = "src"


@dataclass(frozen=True, eq=True)
class Entity:
    id: str
    source_id: str = DEFAULT_SOURCE
    attributes: Mapping[str, Optional[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("entity id must be non-empty")
        object.__setattr__(self, "attributes", dict(self.attributes))

    def __hash__(self) -> int:
        return hash((self.source_id, self.id))

    @property
    def key(self) -> EntityKey:
        return (self.source_id, self.id)

    def get(self, attribute: str) -> Optional[str]:
        """Value of ``attribute``; ``None`` means absent (distinct from ``""``)."""
        return self.attributes.get(attribute)


def _key(e: Entity | EntityKey) -> EntityKey:
    return e.key if isinstance(e, Entity) else (e[0], e[1])


def canonical_pair(e1: Entity | EntityKey, e2: Entity | EntityKey) -> tuple[EntityKey, EntityKey]:
    """Order two entities by ``(source_id, id)``.

    >>> canonical_pair(("src1", "b"), ("src1", "a"))
    (('src1', 'a'), ('src1', 'b'))
    """
    k1, k2 = _key(e1), _key(e2)
    if k1 == k2:
        raise SelfPairError(f"entity {k1[0]}:{k1[1]} paired with itself")
    return (k1, k2) if k1 < k2 else (k2, k1)


@dataclass(frozen=True, order=True)
class Correspondence:
    a: EntityKey
    b: EntityKey
    sim: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.sim <= 1.0:
            raise ValueError(f"similarity {self.sim} outside [0, 1]")
        if self.a == self.b:
            raise SelfPairError(f"self-correspondence for {self.a}")
        if self.b < self.a:
            raise ValueError("correspondence is not in canonical orientation")

    @classmethod
    def of(cls, e1: Entity | EntityKey, e2: Entity | EntityKey, sim: float) -> Correspondence:
        a, b = canonical_pair(e1, e2)
        return cls(a, b, sim)

    @property
    def pair(self) -> tuple[EntityKey, EntityKey]:
        return (self.a, self.b)

    @property
    def id_a(self) -> str:
        return self.a[1]

    @property
    def id_b(self) -> str:
        return self.b[1]


@dataclass(frozen=True)
class ComputingEnvironment:
    """``CE = (#nodes, #cores, max_mem)`` plus the thread count actually used."""

    num_nodes: int
    cores_per_node: int
    max_mem_per_node: int
    threads_per_node: int | None = None

    def __post_init__(self) -> None:
        if self.threads_per_node is None:
            object.__setattr__(self, "threads_per_node", self.cores_per_node)
        for name in ("num_nodes", "cores_per_node", "threads_per_node"):
            if getattr(self, name) < 1:
                raise ConfigurationError("must be >= 1", name)
        if self.max_mem_per_node <= 0:
            raise ConfigurationError("must be > 0", "max_mem_per_node")


class PartitionKind(str, enum.Enum):
    PLAIN = "plain"
    BLOCK_WHOLE = "blockWhole"
    BLOCK_SPLIT = "blockSplit"
    AGGREGATE = "aggregate"
    MISC = "misc"


@dataclass(frozen=True)
class Partition:
    partition_id: str
    members: tuple[EntityKey, ...]
    kind: PartitionKind = PartitionKind.PLAIN
    origin_block_key: str | None = None
    split_index: int | None = None
    split_count: int | None = None
    member_block_keys: tuple[str, ...] = ()
    source_id: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ValueError(f"partition {self.partition_id} is empty")
        if self.kind is PartitionKind.BLOCK_SPLIT:
            if self.split_count is None or self.split_index is None:
                raise ValueError("blockSplit partitions need split_index and split_count")
            if self.split_count < 2 or not 0 <= self.split_index < self.split_count:
                raise ValueError(
                    f"invalid split {self.split_index}/{self.split_count} for {self.partition_id}"
                )

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def is_misc(self) -> bool:
        return self.kind is PartitionKind.MISC

    @property
    def block_keys(self) -> frozenset[str]:
        """Blocking keys whose entities this partition holds (empty for plain/misc)."""
        if self.kind is PartitionKind.AGGREGATE:
            return frozenset(self.member_block_keys)
        if self.kind in (PartitionKind.BLOCK_WHOLE, PartitionKind.BLOCK_SPLIT):
            return frozenset((self.origin_block_key,))
        return frozenset()


@dataclass(frozen=True)
class MatchTask:
    task_id: str
    partition_a: str
    partition_b: str
    strategy_id: str = "default"
    index: int = 0

    @classmethod
    def between(cls, p1: str, p2: str, *, index: int = 0, strategy_id: str = "default") -> MatchTask:
        a, b = (p1, p2) if p1 <= p2 else (p2, p1)
        return cls(task_id=f"{a}|{b}", partition_a=a, partition_b=b, strategy_id=strategy_id, index=index)

    @property
    def self_task(self) -> bool:
        return self.partition_a == self.partition_b

    @property
    def partition_ids(self) -> tuple[str, ...]:
        return (self.partition_a,) if self.self_task else (self.partition_a, self.partition_b)


@dataclass(frozen=True)
class MatchResult:
    task_id: str
    correspondences: frozenset[Correspondence]
    pairs_compared: int
    elapsed: float = 0.0

    def same_outcome(self, other: MatchResult) -> bool:
        """Equality ignoring wall-clock time."""
        return (
            self.task_id == other.task_id
            and self.pairs_compared == other.pairs_compared
            and self.correspondences == other.correspondences
        )


def merge_results(results: Iterable[MatchResult]) -> frozenset[Correspondence]:
    """Union of all task results.

    The same pair reported twice with the same similarity collapses; with a
    different similarity it raises :class:`IntegrityError`.
    """
    merged: dict[tuple[EntityKey, EntityKey], float] = {}
    for result in results:
        for c in result.correspondences:
            prev = merged.setdefault(c.pair, c.sim)
            if prev != c.sim:
                raise IntegrityError(
                    f"conflicting similarity for pair {c.a[0]}:{c.a[1]} / {c.b[0]}:{c.b[1]}: "
                    f"{prev!r} vs {c.sim!r} (task {result.task_id})"
                )
    return frozenset(Correspondence(a, b, s) for (a, b), s in merged.items())
