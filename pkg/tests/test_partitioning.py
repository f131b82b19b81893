from __future__ import annotations

import math
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from partmatch.errors import ConfigurationError
from partmatch.model import Entity, PartitionKind
from partmatch.partitioning import (
    BLOCKING_BASED,
    MISC,
    SIZE_BASED,
    Block,
    SizingInput,
    block_by_key,
    blocking_partition,
    generate_blocking_tasks,
    generate_two_source_tasks,
    max_partition_size,
    plan_two_sources,
    size_based_partition,
    size_based_partitions,
    tune_partitions,
)
from partmatch.synthetic import drive_entities


def _entities(n: int, source: str = "src", keys=None) -> list[Entity]:
    keys = keys or [None] * n
    return [Entity(f"e{i:04d}", source, {"k": keys[i]}) for i in range(n)]


def _block(key, size, start=0):
    return Block(key, tuple(("src", f"{key}-{i}") for i in range(start, start + size)))


# -- sizing ------------------------------------------------------------------
def test_sizing_memory_efficient_strategy():
    assert max_partition_size(SizingInput(2_000_000_000, 4, 20)) == 5000


def test_sizing_memory_hungry_strategy():
    assert max_partition_size(SizingInput(2_000_000_000, 4, 1000)) == 707


def test_sizing_below_one_pair_is_a_config_error():
    with pytest.raises(ConfigurationError):
        max_partition_size(SizingInput(10, 4, 20))


@given(mem=st.integers(1, 10**12), threads=st.integers(1, 64), c=st.integers(1, 10**4))
def test_sizing_is_exact_floor_sqrt(mem, threads, c):
    budget = mem // (threads * c)
    if budget < 1:
        with pytest.raises(ConfigurationError):
            max_partition_size(SizingInput(mem, threads, c))
        return
    m = max_partition_size(SizingInput(mem, threads, c))
    assert m * m * threads * c <= mem < (m + 1) * (m + 1) * threads * c


# -- size-based ----------------------------------------------------------------
@given(n=st.integers(1, 400), m=st.integers(1, 120))
def test_size_based_partitions_are_balanced_and_cover(n, m):
    ents = _entities(n)
    parts = size_based_partitions(ents, m)
    p = math.ceil(n / m)
    assert len(parts) == p
    sizes = [x.size for x in parts]
    assert max(sizes) <= m and max(sizes) - min(sizes) <= 1
    assert [k for x in parts for k in x.members] == [e.key for e in ents]


@given(p=st.integers(1, 50))
def test_size_based_task_count_is_triangular(p):
    plan = size_based_partition(_entities(p * 3), 3)
    assert len(plan.tasks) == p * (p + 1) // 2


@given(n=st.integers(2, 60), m=st.integers(1, 25))
def test_size_based_tasks_cover_every_pair_once(n, m):
    ents = _entities(n)
    plan = size_based_partition(ents, m)
    pairs = oracles.pairs_of_tasks(plan.partitions, plan.tasks)
    assert len(pairs) == len(set(pairs)) == plan.predicted_pairs()
    assert set(pairs) == oracles.all_pairs(ents)


def test_size_based_ids_and_order():
    plan = size_based_partition(_entities(7), 3)
    assert [p.partition_id for p in plan.partitions] == ["S00000", "S00001", "S00002"]
    assert [t.task_id for t in plan.tasks][:3] == ["S00000|S00000", "S00000|S00001", "S00000|S00002"]


# -- blocking ------------------------------------------------------------------
def test_block_by_key_trims_and_sends_blank_to_misc():
    ents = _entities(5, keys=[" a", "a ", "", None, "b"])
    blocks = block_by_key(ents, "k")
    assert [(b.key, b.size) for b in blocks] == [("a", 2), ("b", 1), (MISC, 2)]


def test_no_missing_keys_means_no_misc_block():
    blocks = block_by_key(_entities(3, keys=["x", "y", "x"]), "k")
    assert all(not b.is_misc for b in blocks)


def test_drive_partitions_and_tasks():
    plan = blocking_partition(drive_entities(), "type", 700, 210)
    kinds = Counter(p.kind for p in plan.partitions)
    assert len(plan.partitions) == 6
    assert len(plan.tasks) == 12
    assert kinds[PartitionKind.BLOCK_SPLIT] == 2
    assert kinds[PartitionKind.AGGREGATE] == 1
    agg = next(p for p in plan.partitions if p.kind is PartitionKind.AGGREGATE)
    assert agg.size == 600 and agg.block_keys == {"Blu-ray", "HD-DVD", "CD-RW"}
    assert len(size_based_partition(drive_entities(), 700).tasks) == 21


@given(s=st.integers(2, 2000), k_cap=st.integers(1, 60))
def test_split_count_and_intra_tasks(s, k_cap):
    m = max(1, -(-s // k_cap))
    parts = tune_partitions([_block("x", s)], m, 0)
    tasks = generate_blocking_tasks(parts)
    if s <= m:
        assert len(parts) == 1 and len(tasks) == 1
        return
    k = math.ceil(s / m)
    assert len(parts) == k
    assert all(p.size <= m for p in parts)
    assert len(tasks) == k * (k + 1) // 2


def test_small_blocks_are_packed_first_fit_decreasing():
    blocks = [_block("a", 50), _block("b", 40), _block("c", 30), _block("d", 20), _block("e", 100)]
    parts = tune_partitions(blocks, 100, 60)
    aggs = [p for p in parts if p.kind is PartitionKind.AGGREGATE]
    # sorted by size: a50 b40 c30 d20 -> [a, b], [c, d]
    assert [sorted(p.block_keys) for p in aggs] == [["a", "b"], ["c", "d"]]
    assert [p.partition_id for p in parts][0] == "B:e"


def test_large_misc_block_is_split():
    parts = tune_partitions([_block("a", 10), _block(MISC, 25)], 10, 0)
    misc = [p for p in parts if p.is_misc]
    assert [p.partition_id for p in misc] == ["M#0000/0003", "M#0001/0003", "M#0002/0003"]
    tasks = generate_blocking_tasks(parts)
    # one self task for "a", 3 misc x "a", and 6 misc x misc
    assert len(tasks) == 1 + 3 + 6


def test_partition_ids_escape_separators():
    parts = tune_partitions([_block("a|b#c/d", 5)], 10, 0)
    assert parts[0].partition_id == "B:a%7Cb%23c%2Fd"


def test_min_size_above_m_rejected():
    with pytest.raises(ConfigurationError):
        tune_partitions([_block("a", 5)], 10, 11)


key_lists = st.lists(st.sampled_from(["a", "b", "c", "d", "e", None, " "]), min_size=2, max_size=70)


@given(keys=key_lists, m=st.integers(1, 20), frac=st.floats(0, 1))
def test_blocking_tasks_cover_required_pairs_exactly_once(keys, m, frac):
    ents = _entities(len(keys), keys=keys)
    plan = blocking_partition(ents, "k", m, math.floor(frac * m))
    pairs = oracles.pairs_of_tasks(plan.partitions, plan.tasks)
    assert len(pairs) == len(set(pairs)) == plan.predicted_pairs()
    assert set(pairs) == oracles.blocking_pairs(ents, "k", plan.partitions)
    assert all(p.size <= m for p in plan.partitions)
    members = [k for p in plan.partitions for k in p.members]
    assert sorted(members) == sorted(e.key for e in ents)


# -- two sources ---------------------------------------------------------------
@given(p=st.integers(1, 12), q=st.integers(1, 12))
def test_duplicate_free_sources_give_p_times_q_tasks(p, q):
    a = _entities(p * 4, "A")
    b = _entities(q * 4, "B")
    plan = plan_two_sources(a, b, SIZE_BASED, 4, duplicate_free=True)
    assert len(plan.tasks) == p * q
    pairs = oracles.pairs_of_tasks(plan.partitions, plan.tasks)
    assert set(pairs) == oracles.cross_pairs(a, b) and len(pairs) == len(set(pairs))


@given(p=st.integers(1, 8), q=st.integers(1, 8))
def test_non_duplicate_free_sources_also_match_internally(p, q):
    a, b = _entities(p * 3, "A"), _entities(q * 3, "B")
    plan = plan_two_sources(a, b, SIZE_BASED, 3, duplicate_free=False)
    assert len(plan.tasks) == (p + q) * (p + q + 1) // 2
    pairs = oracles.pairs_of_tasks(plan.partitions, plan.tasks)
    assert set(pairs) == oracles.all_pairs(a + b) and len(pairs) == len(set(pairs))


@given(ka=key_lists, kb=key_lists, m=st.integers(2, 15))
def test_two_source_blocking_covers_key_sharing_cross_pairs(ka, kb, m):
    a = _entities(len(ka), "A", ka)
    b = _entities(len(kb), "B", kb)
    plan = plan_two_sources(a, b, BLOCKING_BASED, m, duplicate_free=True, attribute="k", min_size=0)
    pairs = oracles.pairs_of_tasks(plan.partitions, plan.tasks)
    assert len(pairs) == len(set(pairs))
    assert all(x[0] != y[0] for x, y in pairs)
    required = {
        pr for pr in oracles.blocking_pairs(a + b, "k") if pr[0][0] != pr[1][0]
    }
    assert set(pairs) == required


def test_mixed_modes_rejected():
    sb = size_based_partitions(_entities(4, "A"), 2, "A")
    bb = tune_partitions([Block("x", (("B", "1"),))], 2, 0, "B")
    with pytest.raises(ConfigurationError):
        generate_two_source_tasks(sb, bb, True)


def test_same_source_ids_rejected():
    with pytest.raises(ConfigurationError):
        plan_two_sources(_entities(3, "A"), _entities(3, "A"), SIZE_BASED, 2, duplicate_free=True)
