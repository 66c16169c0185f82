import csv
import math

import pytest
from hypothesis import given, strategies as st

from aita_judge.allotax import (
    DEFAULT_ALPHA,
    rank_terms,
    rtd_contributions,
    top_divergent_terms,
    write_rtd_csv,
    RTDResult,
)


def test_rank_terms_examples():
    assert rank_terms({"a": 5, "b": 5, "c": 2}).ranks == {"a": 1.5, "b": 1.5, "c": 3.0}
    assert rank_terms({"x": 1}).ranks == {"x": 1.0}
    assert set(rank_terms({t: 7 for t in "wxyz"}).ranks.values()) == {2.5}
    with pytest.raises(ValueError):
        rank_terms({})


def test_self_divergence_zero():
    d = {"you": 10, "the": 8, "rude": 3}
    res = rtd_contributions(d, d)
    assert res.total == 0.0 and all(v == 0.0 for v in res.contributions.values())


def test_alpha_one_hand_value():
    # "a" has rank 1 in d1 and rank 2 in d2; "b" the reverse
    res = rtd_contributions({"a": 2, "b": 1}, {"a": 1, "b": 2}, alpha=1.0)
    raw_a = res.contributions["a"] * res.normalization
    assert raw_a == pytest.approx(math.sqrt(0.5), abs=1e-9)
    assert res.contributions["a"] > 0 > res.contributions["b"]


def test_exclusive_rank_convention():
    res = rtd_contributions({"a": 3, "b": 2, "c": 1}, {"a": 4, "z": 1}, alpha=1.0)
    # d2 has 2 types and 2 terms exclusive to d1 -> 2 + (2 + 1) / 2
    assert res.ranks_2["b"] == res.ranks_2["c"] == 3.5
    # d1 has 3 types and 1 term exclusive to d2 -> 3 + (1 + 1) / 2
    assert res.ranks_1["z"] == 4.0


def test_disjoint_distributions_have_total_one():
    res = rtd_contributions({"a": 3, "b": 1}, {"x": 5, "y": 2, "z": 1})
    assert res.total == pytest.approx(1.0, abs=1e-12)


def test_alpha_must_be_positive():
    with pytest.raises(ValueError):
        rtd_contributions({"a": 1}, {"a": 1}, alpha=0)


def test_top_divergent_terms_example():
    res = RTDResult(1.0, {"you": 0.4, "to": -0.3, "suck": 0.1}, {}, {}, 1.0)
    assert [t for t, _ in top_divergent_terms(res, 2, side=1)] == ["you", "suck"]
    assert [t for t, _ in top_divergent_terms(res, 10, side=2)] == ["to"]
    with pytest.raises(ValueError):
        top_divergent_terms(res, 0)


def test_top_divergent_ties_break_lexicographically():
    res = RTDResult(1.0, {"b": 0.2, "a": 0.2, "c": 0.2}, {}, {}, 1.0)
    assert [t for t, _ in top_divergent_terms(res, 3)] == ["a", "b", "c"]


def test_monotonicity_probe():
    d1 = {t: 10 - i for i, t in enumerate("abcdefgh")}
    near = dict(d1)
    far = {"a": 10, "c": 9, "d": 8, "e": 7, "b": 6, "f": 5, "g": 4, "h": 3}
    assert rank_terms(far).ranks["b"] == 5.0
    c_near = abs(rtd_contributions(d1, near).contributions["b"])
    c_far = abs(rtd_contributions(d1, far).contributions["b"])
    assert c_far >= c_near


def test_csv_columns(tmp_path):
    res = rtd_contributions({"a": 2, "b": 1}, {"b": 2, "c": 1})
    out = tmp_path / "rtd.csv"
    write_rtd_csv(res, out)
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["term", "rank_pos", "rank_neg", "contribution", "side"]
    assert {r[0] for r in rows[1:]} == {"a", "b", "c"}


dists = st.dictionaries(st.sampled_from("abcdefghijkl"), st.integers(1, 30), min_size=1)


@given(dists, dists, st.sampled_from([DEFAULT_ALPHA, 0.5, 1.0, 3.0]))
def test_swap_antisymmetry_and_bounds(d1, d2, alpha):
    ab, ba = rtd_contributions(d1, d2, alpha), rtd_contributions(d2, d1, alpha)
    assert ab.total == pytest.approx(ba.total, abs=1e-12)
    for t, v in ab.contributions.items():
        assert ba.contributions[t] == pytest.approx(-v, abs=1e-12)
    assert -1e-12 <= ab.total <= 1.0 + 1e-12


@given(dists, dists)
def test_equal_ranks_contribute_nothing(d1, d2):
    res = rtd_contributions(d1, d2)
    for t, v in res.contributions.items():
        if res.ranks_1[t] == res.ranks_2[t]:
            assert v == 0.0
