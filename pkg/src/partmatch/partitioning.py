"""Partition planning: sizing, size-based and blocking-based partitioning,
partition tuning, and match-task generation for one or two sources.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement

from .errors import ConfigurationError
from .model import Entity, EntityKey, MatchTask, Partition, PartitionKind

SIZE_BASED = "sizeBased"
BLOCKING_BASED = "blockingBased"
MODES = (SIZE_BASED, BLOCKING_BASED)

DEFAULT_MIN_SIZE_FRACTION = 0.3


class _MiscKey:
    """Sentinel key of the block holding entities without a blocking value."""

    def __repr__(self) -> str:
        return "MISC"

    def __reduce__(self):
        return "MISC"


MISC = _MiscKey()


@dataclass(frozen=True)
class SizingInput:
    max_mem_per_node: float
    threads_per_node: int
    pair_memory_cost: float

    def __post_init__(self) -> None:
        for name in ("max_mem_per_node", "threads_per_node", "pair_memory_cost"):
            if getattr(self, name) <= 0:
                raise ConfigurationError("must be > 0", f"sizing.{name}")


@dataclass(frozen=True)
class Block:
    key: object  # str, or MISC
    members: tuple[EntityKey, ...]

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def is_misc(self) -> bool:
        return self.key is MISC


@dataclass(frozen=True)
class PartitionPlan:
    partitions: tuple[Partition, ...]
    tasks: tuple[MatchTask, ...]
    max_partition_size: int
    min_partition_size: int = 0
    mode: str = SIZE_BASED
    blocks: tuple[Block, ...] = field(default=(), compare=False)

    def partition(self, partition_id: str) -> Partition:
        return self.partition_index[partition_id]

    @property
    def partition_index(self) -> dict[str, Partition]:
        return {p.partition_id: p for p in self.partitions}

    def predicted_pairs(self) -> int:
        """Entity pairs the task set compares, from the triangular/product formulas."""
        sizes = {p.partition_id: p.size for p in self.partitions}
        total = 0
        for t in self.tasks:
            a = sizes[t.partition_a]
            total += a * (a - 1) // 2 if t.self_task else a * sizes[t.partition_b]
        return total


def max_partition_size(s: SizingInput) -> int:
    """``floor(sqrt(max_mem / (threads * c_ms)))``, computed exactly."""
    budget = Fraction(s.max_mem_per_node) / (s.threads_per_node * Fraction(s.pair_memory_cost))
    m = math.isqrt(math.floor(budget))
    if m < 1:
        raise ConfigurationError(
            f"memory per thread ({float(Fraction(s.max_mem_per_node) / s.threads_per_node):g} B) "
            f"is below the cost of one entity pair ({s.pair_memory_cost} B)",
            "sizing",
        )
    return m


def _escape(key: str) -> str:
    return key.replace("%", "%25").replace("|", "%7C").replace("#", "%23").replace("/", "%2F")


def _prefix(source: str | None) -> str:
    return f"{_escape(source)}/" if source else ""


def _balanced_chunks(items: Sequence, k: int) -> list[Sequence]:
    """Split into ``k`` contiguous chunks whose sizes differ by at most one."""
    q, r = divmod(len(items), k)
    out, start = [], 0
    for i in range(k):
        end = start + q + (1 if i < r else 0)
        out.append(items[start:end])
        start = end
    return out


def triangular_tasks(partition_ids: Sequence[str], start: int = 0, strategy_id: str = "default") -> list[MatchTask]:
    """One task per unordered pair ``(P_i, P_j)``, ``i <= j``, in row order."""
    return [
        MatchTask.between(a, b, index=start + n, strategy_id=strategy_id)
        for n, (a, b) in enumerate(combinations_with_replacement(partition_ids, 2))
    ]


def size_based_partitions(entities: Sequence[Entity], m: int, source: str | None = None) -> list[Partition]:
    if m < 1:
        raise ConfigurationError("must be >= 1", "max_partition_size")
    if not entities:
        return []
    p = -(-len(entities) // m)
    keys = [e.key for e in entities]
    pre = _prefix(source)
    return [
        Partition(f"{pre}S{i:05d}", tuple(chunk), PartitionKind.PLAIN, source_id=source)
        for i, chunk in enumerate(_balanced_chunks(keys, p))
    ]


def size_based_partition(
    entities: Sequence[Entity], m: int, *, source: str | None = None, strategy_id: str = "default"
) -> PartitionPlan:
    """Equal-size partitions in input order and all ``p(p+1)/2`` partition pairs."""
    parts = size_based_partitions(entities, m, source)
    tasks = triangular_tasks([p.partition_id for p in parts], strategy_id=strategy_id)
    return PartitionPlan(tuple(parts), tuple(tasks), m, 0, SIZE_BASED)


def block_by_key(entities: Iterable[Entity], attribute: str) -> list[Block]:
    """One block per distinct trimmed value; absent or blank values go to MISC.

    Blocks are ordered by key; the MISC block, if non-empty, comes last.
    """
    groups: dict[str, list[EntityKey]] = {}
    misc: list[EntityKey] = []
    for e in entities:
        value = e.get(attribute)
        key = value.strip() if value is not None else ""
        if key:
            groups.setdefault(key, []).append(e.key)
        else:
            misc.append(e.key)
    blocks = [Block(k, tuple(groups[k])) for k in sorted(groups)]
    if misc:
        blocks.append(Block(MISC, tuple(misc)))
    return blocks


def _first_fit_decreasing(blocks: Sequence[Block], capacity: int) -> list[list[Block]]:
    bins: list[list[Block]] = []
    loads: list[int] = []
    for blk in sorted(blocks, key=lambda b: (-b.size, b.key)):
        for i, load in enumerate(loads):
            if load + blk.size <= capacity:
                bins[i].append(blk)
                loads[i] += blk.size
                break
        else:
            bins.append([blk])
            loads.append(blk.size)
    return bins


def tune_partitions(
    blocks: Sequence[Block], m: int, min_size: int, source: str | None = None
) -> list[Partition]:
    """Split blocks larger than ``m`` and pack blocks smaller than ``min_size``.

    Output order: whole and split blocks in block order, then aggregates, then
    misc partitions.
    """
    if m < 1:
        raise ConfigurationError("must be >= 1", "max_partition_size")
    if not 0 <= min_size <= m:
        raise ConfigurationError(f"min size {min_size} must lie in [0, {m}]", "min_partition_size")
    pre = _prefix(source)
    regular: list[Partition] = []
    small: list[Block] = []
    misc: list[Partition] = []

    for blk in blocks:
        if blk.size == 0:
            continue
        if blk.is_misc:
            if blk.size > m:
                k = -(-blk.size // m)
                for i, chunk in enumerate(_balanced_chunks(blk.members, k)):
                    misc.append(
                        Partition(
                            f"{pre}M#{i:04d}/{k:04d}", chunk, PartitionKind.MISC,
                            split_index=i, split_count=k, source_id=source,
                        )
                    )
            else:
                misc.append(Partition(f"{pre}M", blk.members, PartitionKind.MISC, source_id=source))
        elif blk.size > m:
            k = -(-blk.size // m)
            for i, chunk in enumerate(_balanced_chunks(blk.members, k)):
                regular.append(
                    Partition(
                        f"{pre}B:{_escape(blk.key)}#{i:04d}/{k:04d}", chunk, PartitionKind.BLOCK_SPLIT,
                        origin_block_key=blk.key, split_index=i, split_count=k, source_id=source,
                    )
                )
        elif blk.size < min_size:
            small.append(blk)
        else:
            regular.append(
                Partition(
                    f"{pre}B:{_escape(blk.key)}", blk.members, PartitionKind.BLOCK_WHOLE,
                    origin_block_key=blk.key, source_id=source,
                )
            )

    aggregates = [
        Partition(
            f"{pre}A{i:05d}",
            tuple(k for blk in group for k in blk.members),
            PartitionKind.AGGREGATE,
            member_block_keys=tuple(blk.key for blk in group),
            source_id=source,
        )
        for i, group in enumerate(_first_fit_decreasing(small, m))
    ]
    return regular + aggregates + misc


def generate_blocking_tasks(
    partitions: Sequence[Partition], start: int = 0, strategy_id: str = "default"
) -> list[MatchTask]:
    """Tasks for a tuned single-source partition set.

    Whole blocks and aggregates get one self task, each split family all its
    internal pairs, and every misc partition is paired with every partition
    (itself and other misc partitions included). Misc tasks are emitted grouped
    by the non-misc partition they touch so consecutive tasks share inputs.
    """
    tasks: list[MatchTask] = []
    seen: set[tuple[str, str]] = set()

    def add(p1: str, p2: str) -> None:
        t = MatchTask.between(p1, p2, index=start + len(tasks), strategy_id=strategy_id)
        key = (t.partition_a, t.partition_b)
        if key not in seen:
            seen.add(key)
            tasks.append(t)

    families: dict[object, list[str]] = {}
    for p in partitions:
        if p.kind is PartitionKind.BLOCK_SPLIT:
            families.setdefault(p.origin_block_key, []).append(p.partition_id)
        elif p.kind in (PartitionKind.BLOCK_WHOLE, PartitionKind.AGGREGATE, PartitionKind.PLAIN):
            add(p.partition_id, p.partition_id)
    for ids in families.values():
        for a, b in combinations_with_replacement(ids, 2):
            add(a, b)

    misc_ids = [p.partition_id for p in partitions if p.is_misc]
    for p in partitions:
        if p.is_misc:
            continue
        for mid in misc_ids:
            add(mid, p.partition_id)
    for a, b in combinations_with_replacement(misc_ids, 2):
        add(a, b)
    return tasks


def _mode_of(partitions: Sequence[Partition]) -> str | None:
    modes = {SIZE_BASED if p.kind is PartitionKind.PLAIN else BLOCKING_BASED for p in partitions}
    if len(modes) > 1:
        raise ConfigurationError("partition list mixes size-based and blocking-based partitions", "mode")
    return modes.pop() if modes else None


def _cross_source_tasks(a_parts: Sequence[Partition], b_parts: Sequence[Partition], mode: str) -> list[tuple[str, str]]:
    if mode == SIZE_BASED:
        return [(pa.partition_id, pb.partition_id) for pa in a_parts for pb in b_parts]
    pairs = []
    for pa in a_parts:
        for pb in b_parts:
            if pa.is_misc or (pb.is_misc and not pa.is_misc) or (pa.block_keys & pb.block_keys):
                pairs.append((pa.partition_id, pb.partition_id))
    return pairs


def generate_two_source_tasks(
    partitions_a: Sequence[Partition],
    partitions_b: Sequence[Partition],
    duplicate_free: bool,
    strategy_id: str = "default",
) -> list[MatchTask]:
    """Tasks for matching two sources partitioned with the same mode.

    Duplicate-free sources are only compared across sources. Otherwise each
    source is also matched internally, which yields the same task set as
    partitioning the union.
    """
    mode_a, mode_b = _mode_of(partitions_a), _mode_of(partitions_b)
    if mode_a and mode_b and mode_a != mode_b:
        raise ConfigurationError(f"sources use different modes ({mode_a} vs {mode_b})", "mode")
    mode = mode_a or mode_b or SIZE_BASED
    ids_a = {p.partition_id for p in partitions_a}
    if ids_a & {p.partition_id for p in partitions_b}:
        raise ConfigurationError("partition ids of the two sources overlap", "input")

    tasks: list[MatchTask] = []
    if not duplicate_free:
        for parts in (partitions_a, partitions_b):
            if mode == SIZE_BASED:
                tasks += triangular_tasks([p.partition_id for p in parts], len(tasks), strategy_id)
            else:
                tasks += generate_blocking_tasks(parts, len(tasks), strategy_id)
    for a, b in _cross_source_tasks(partitions_a, partitions_b, mode):
        tasks.append(MatchTask.between(a, b, index=len(tasks), strategy_id=strategy_id))
    return tasks


def blocking_partition(
    entities: Sequence[Entity],
    attribute: str,
    m: int,
    min_size: int | None = None,
    *,
    source: str | None = None,
    strategy_id: str = "default",
) -> PartitionPlan:
    """Block on ``attribute``, tune, and generate tasks."""
    if min_size is None:
        min_size = math.floor(DEFAULT_MIN_SIZE_FRACTION * m)
    blocks = block_by_key(entities, attribute)
    parts = tune_partitions(blocks, m, min_size, source)
    tasks = generate_blocking_tasks(parts, strategy_id=strategy_id)
    return PartitionPlan(tuple(parts), tuple(tasks), m, min_size, BLOCKING_BASED, tuple(blocks))


def plan_two_sources(
    entities_a: Sequence[Entity],
    entities_b: Sequence[Entity],
    mode: str,
    m: int,
    *,
    duplicate_free: bool,
    attribute: str | None = None,
    min_size: int | None = None,
    strategy_id: str = "default",
) -> PartitionPlan:
    src_a = entities_a[0].source_id if entities_a else "A"
    src_b = entities_b[0].source_id if entities_b else "B"
    if src_a == src_b:
        raise ConfigurationError("the two sources need distinct source ids", "input")
    if mode == SIZE_BASED:
        pa = size_based_partitions(entities_a, m, src_a)
        pb = size_based_partitions(entities_b, m, src_b)
        min_size = 0
        blocks: tuple[Block, ...] = ()
    elif mode == BLOCKING_BASED:
        if not attribute:
            raise ConfigurationError("blocking mode requires a blocking column", "schema.blocking")
        if min_size is None:
            min_size = math.floor(DEFAULT_MIN_SIZE_FRACTION * m)
        ba, bb = block_by_key(entities_a, attribute), block_by_key(entities_b, attribute)
        pa = tune_partitions(ba, m, min_size, src_a)
        pb = tune_partitions(bb, m, min_size, src_b)
        blocks = tuple(ba) + tuple(bb)
    else:
        raise ConfigurationError(f"unknown mode {mode!r}", "mode")
    tasks = generate_two_source_tasks(pa, pb, duplicate_free, strategy_id)
    return PartitionPlan(tuple(pa + pb), tuple(tasks), m, min_size, mode, blocks)
