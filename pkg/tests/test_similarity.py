from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from partmatch.model import Entity
from partmatch.similarity import (
    SimilarityMeasure,
    apply_measure,
    cosine_token_sim,
    edit_distance_sim,
    jaccard_token_sim,
    tokenize,
    trigram_sim,
    trigrams,
)

MEASURES = [
    (edit_distance_sim, oracles.edit_sim),
    (trigram_sim, oracles.trigram_sim),
    (jaccard_token_sim, oracles.token_jaccard),
    (cosine_token_sim, oracles.token_cosine),
]
text = st.text(alphabet="abcde XY-_1é", max_size=25)


@pytest.mark.parametrize(
    "a,b,dist",
    [("kitten", "sitting", 3), ("", "abc", 3), ("flaw", "lawn", 2), ("same", "same", 0), ("ab", "ba", 2)],
)
def test_dp_oracle_known_distances(a, b, dist):
    assert oracles.levenshtein_dp(a, b) == dist


def test_edit_distance_known_value():
    # lev(kitten, sitting) = 3 over max length 7
    assert edit_distance_sim("kitten", "sitting") == pytest.approx(1 - 3 / 7, abs=1e-12)


def test_trigram_grams_of_short_string():
    assert trigrams("ab") == {"\x02\x02a", "\x02ab", "ab\x03", "b\x03\x03"}


def test_tokenize_splits_on_punctuation_and_underscore():
    assert tokenize("Blu-ray_Drive 2.5in") == ["blu", "ray", "drive", "2", "5in"]


@pytest.mark.parametrize("fn,oracle", MEASURES)
@given(a=text, b=text)
def test_measures_match_oracles(fn, oracle, a, b):
    assert fn(a, b) == pytest.approx(oracle(a, b), abs=1e-12)


@pytest.mark.parametrize("fn,_", MEASURES)
@given(a=text, b=text)
def test_measures_are_symmetric_and_bounded(fn, _, a, b):
    s = fn(a, b)
    assert 0.0 <= s <= 1.0
    assert s == fn(b, a)


@pytest.mark.parametrize("fn,_", MEASURES)
@given(a=st.text(alphabet="abc XY", min_size=1, max_size=20).filter(lambda s: s.strip()))
def test_identical_nonempty_strings_score_one(fn, _, a):
    assert fn(a, a) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("fn,_", MEASURES)
def test_empty_conventions(fn, _):
    assert fn("", "") == 1.0
    assert fn("", "abc") == 0.0


@pytest.mark.parametrize("kind", ["editDistance", "trigram", "jaccardToken", "cosineToken"])
def test_absent_value_scores_zero_but_empty_string_is_a_value(kind):
    m = SimilarityMeasure(kind, "title")
    absent = Entity("1", attributes={"title": None})
    empty = Entity("2", attributes={"title": ""})
    other = Entity("3", attributes={"title": ""})
    assert apply_measure(m, absent, other) == 0.0
    assert apply_measure(m, empty, other) == 1.0


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        SimilarityMeasure("soundex", "title")
