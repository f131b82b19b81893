from __future__ import annotations

import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from partmatch.dataservice import DataStore, Schema, parse_entities, write_correspondences, write_entities
from partmatch.errors import IntegrityError, LoadError, PartitionNotFound, UnknownTaskError
from partmatch.model import Correspondence, Entity, MatchResult
from partmatch.partitioning import size_based_partition
from partmatch.synthetic import COLUMNS, generate_synthetic


def test_duplicate_id_reports_its_line():
    rows = ["id,title"] + [f"r{i},t{i}" for i in range(5)] + ["r2,again"]
    with pytest.raises(LoadError) as err:
        parse_entities("\n".join(rows) + "\n")
    assert err.value.line == 7
    assert "line 7" in str(err.value)


@pytest.mark.parametrize(
    "text,line",
    [
        ("title\nx\n", 1),
        ("id,title\na,b,c\n", 2),
        ("id,title\n,b\n", 2),
        ("", 1),
    ],
)
def test_load_errors_carry_line_numbers(text, line):
    with pytest.raises(LoadError) as err:
        parse_entities(text)
    assert err.value.line == line


def test_missing_schema_column_is_load_error():
    with pytest.raises(LoadError):
        parse_entities("id,title\n1,a\n", Schema(blocking_column="type"))


def test_empty_cell_loads_as_absent():
    (e,) = parse_entities('id,title,type\n1,"",\n')
    assert e.get("title") is None and e.get("type") is None


def test_schema_selects_columns_and_delimiter():
    (e,) = parse_entities("key;a;b;c\n1;x;y;z\n", Schema("key", "c", ("a",), ";"))
    assert e.id == "1" and dict(e.attributes) == {"a": "x", "c": "z"}


def test_entity_file_round_trip():
    ents = generate_synthetic(40, seed=2, miss_rate=0.25)
    buf = io.StringIO()
    write_entities(buf, ents, COLUMNS)
    back = parse_entities(buf.getvalue())
    assert [(e.id, dict(e.attributes)) for e in back] == [(e.id, dict(e.attributes)) for e in ents]


def test_correspondence_file_is_sorted_with_six_decimals():
    corrs = [
        Correspondence(("s", "b"), ("s", "c"), 0.5),
        Correspondence(("s", "a"), ("s", "z"), 0.123456789),
    ]
    buf = io.StringIO()
    write_correspondences(buf, corrs)
    assert buf.getvalue() == "idA,idB,sim\na,z,0.123457\nb,c,0.500000\n"


def test_multi_source_ids_are_qualified():
    buf = io.StringIO()
    write_correspondences(buf, [Correspondence(("A", "1"), ("B", "1"), 1.0)])
    assert buf.getvalue().splitlines()[1] == "A:1,B:1,1.000000"


def _store_with_plan(n=10, m=4):
    ents = generate_synthetic(n, seed=1)
    store = DataStore()
    store.add_entities(ents)
    plan = size_based_partition(ents, m)
    store.register_partitions(plan.partitions)
    store.register_tasks(plan.tasks)
    return store, plan


def test_fetch_counts_every_call():
    store, plan = _store_with_plan()
    pid = plan.partitions[0].partition_id
    for _ in range(3):
        assert len(store.fetch_partition(pid)) == plan.partitions[0].size
    assert store.fetch_counter[pid] == 3 and store.total_fetches == 3
    with pytest.raises(PartitionNotFound):
        store.fetch_partition("nope")


def test_store_result_is_idempotent_and_detects_conflicts():
    store, plan = _store_with_plan()
    tid = plan.tasks[0].task_id
    c = Correspondence(("src", "a"), ("src", "b"), 0.8)
    r = MatchResult(tid, frozenset({c}), 6, elapsed=0.1)
    assert store.store_result(r) is True
    assert store.store_result(MatchResult(tid, frozenset({c}), 6, elapsed=0.2)) is False
    with pytest.raises(IntegrityError):
        store.store_result(MatchResult(tid, frozenset(), 6))
    with pytest.raises(UnknownTaskError):
        store.store_result(MatchResult("X|Y", frozenset(), 0))
    assert len(store.results()) == 1


def test_duplicate_entity_across_loads_rejected():
    store = DataStore()
    store.add_entities([Entity("1")])
    with pytest.raises(LoadError):
        store.add_entities([Entity("1")])


@given(st.lists(st.tuples(st.text("abc,\"\n ", max_size=6), st.one_of(st.none(), st.text("xy ,", min_size=1, max_size=4))), min_size=1, max_size=8))
def test_csv_round_trip_preserves_values(rows):
    ents = [Entity(f"id{i}", attributes={"t": t or None, "u": u}) for i, (t, u) in enumerate(rows)]
    buf = io.StringIO()
    write_entities(buf, ents, ["t", "u"])
    back = parse_entities(buf.getvalue())
    assert [dict(e.attributes) for e in back] == [dict(e.attributes) for e in ents]
