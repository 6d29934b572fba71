from __future__ import annotations

from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from aporosim.analysis import (
    DegenerateInput, EmptyVector, GiniStat, apo_proportion, bankruptcy_stats, by_norms, gini, histogram,
    summarize_subset, trend_stat,
)
from aporosim.core import Status

from oracles import pairwise_gini


def avg_ranks(v):
    order = sorted(range(len(v)), key=lambda i: v[i])
    ranks = [0.0] * len(v)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and v[order[j + 1]] == v[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2 + 1
        i = j + 1
    return np.array(ranks)


def spearman_oracle(x, y) -> float:
    return float(np.corrcoef(avg_ranks(x), avg_ranks(y))[0, 1])


def test_gini_examples():
    assert gini([0, 0, 0, 10]) == pytest.approx(0.75, abs=1e-12)
    # exact rational value of the pairwise definition for 1..5
    exact = Fraction(sum(abs(a - b) for a in range(1, 6) for b in range(1, 6)), 2 * 25 * 3)
    assert gini([1, 2, 3, 4, 5]) == pytest.approx(float(exact), abs=1e-12)
    assert gini([5, 5, 5]) == 0.0
    assert gini([0, 0]) == 0.0
    assert gini([-100, -5, 0]) == 0.0
    assert gini([-50, 10]) == pytest.approx(0.5)


def test_gini_empty():
    with pytest.raises(EmptyVector):
        gini([])


def test_gini_matches_pairwise_oracle():
    r = np.random.default_rng(0)
    for _ in range(1000):
        n = int(r.integers(1, 200))
        x = r.normal(1000, 1500, n).round()
        assert gini(x) == pytest.approx(pairwise_gini(x), abs=1e-9)


vectors = st.lists(st.integers(0, 10**6), min_size=1, max_size=80)


@given(vectors, st.randoms(use_true_random=False))
@settings(max_examples=200)
def test_gini_permutation_invariant(x, rnd):
    y = list(x)
    rnd.shuffle(y)
    assert gini(y) == pytest.approx(gini(x), abs=1e-12)


@given(vectors, st.integers(1, 1000))
@settings(max_examples=200)
def test_gini_scale_invariant(x, c):
    assert gini([c * v for v in x]) == pytest.approx(gini(x), abs=1e-9)


@given(vectors, st.integers(1, 10**6))
@settings(max_examples=200)
def test_gini_shrinks_under_translation(x, c):
    assert gini([v + c for v in x]) <= gini(x) + 1e-12


@given(st.integers(1, 500))
def test_gini_extremes(n):
    assert 0 <= gini([1] * n) <= 1e-12
    one_rich = [0] * (n - 1) + [1]
    assert gini(one_rich) == pytest.approx((n - 1) / n, abs=1e-12)


def test_histogram_normalised():
    r = np.random.default_rng(1)
    for bins in (1, 5, 20, 33):
        h = histogram(r.normal(0, 100, 257), bins)
        assert h.frequency.size == bins and h.edges.size == bins + 1
        assert abs(h.frequency.sum() - 1.0) <= 1e-12
    flat = histogram([3, 3, 3], 4)
    assert flat.frequency.sum() == pytest.approx(1.0) and flat.edges[0] == 2.5
    with pytest.raises(EmptyVector):
        histogram([])


def _final(wealth, status):
    return SimpleNamespace(final_wealth=np.array(wealth), final_status=np.array([int(s) for s in status]))


def test_bankruptcy_stats():
    e, h, u = Status.EMPLOYED, Status.HOMELESS, Status.UNEMPLOYED
    share, mix = bankruptcy_stats(_final([100, 0, -5, 20], [e, h, h, u]))
    assert share == 0.5 and mix == {h: 1.0}
    share, mix = bankruptcy_stats(_final([-1, -2, 3, 4], [e, u, e, e]))
    assert share == 0.5 and mix == {e: 0.5, u: 0.5}
    assert bankruptcy_stats(_final([1, 2], [e, e])) == (0.0, {})


def test_apo_proportion(norms):
    assert apo_proportion(norms.subset([])) == 0.0
    assert apo_proportion(norms.subset([1, 2, 3])) == 0.0
    assert apo_proportion(norms.subset([2, 3, 4, 5, 6])) == pytest.approx(0.6)
    assert apo_proportion(norms.subset([4, 5, 6])) == 1.0


def test_gini_stat():
    assert GiniStat((0.5,)).sd == 0.0
    s = GiniStat((0.2, 0.4, 0.6))
    assert s.mean == pytest.approx(0.4) and s.sd == pytest.approx(0.2)


def test_summarize_subset(norms):
    sub = norms.subset([1, 4])
    w = [np.array([0, 0, 0, 10]), np.array([1, 2, 3, 4, 5])]
    s = [np.zeros(4, dtype=int), np.zeros(5, dtype=int)]
    row = summarize_subset(9, sub, w, s, bins=4)
    assert row.norms == (1, 4) and row.contains_norm1 and row.apo_proportion == 0.5
    assert row.gini_mean == pytest.approx((0.75 + gini([1, 2, 3, 4, 5])) / 2)
    assert row.gini_pooled == pytest.approx(pairwise_gini(np.concatenate(w)))
    assert row.bankrupt_mean == pytest.approx((0.75 + 0.0) / 2)
    assert by_norms([row], [4, 1]) is row and by_norms([row], [2]) is None


def test_trend_stat_extremes():
    up = [{"apo_proportion": x, "gini_mean": 0.3 + x} for x in (0, 0.25, 0.5, 1)]
    down = [{"apo_proportion": x, "gini_mean": 1 - x} for x in (0, 0.25, 0.5, 1)]
    assert trend_stat(up) == pytest.approx(1.0)
    assert trend_stat(down) == pytest.approx(-1.0)


def test_trend_stat_degenerate():
    with pytest.raises(DegenerateInput):
        trend_stat([{"apo_proportion": x, "gini_mean": x} for x in (0, 1, 0, 1)])
    with pytest.raises(DegenerateInput):
        trend_stat([{"apo_proportion": x, "gini_mean": 0.5} for x in (0, 0.5, 1)])


@given(st.lists(st.tuples(st.sampled_from([0, 1 / 3, 0.5, 2 / 3, 1]), st.integers(0, 20)), min_size=4, max_size=64))
@settings(max_examples=200)
def test_trend_stat_matches_rank_oracle(pairs):
    xs, ys = [p[0] for p in pairs], [p[1] for p in pairs]
    assume(len(set(xs)) >= 3 and len(set(ys)) >= 2)
    rows = [{"apo_proportion": a, "gini_mean": b} for a, b in pairs]
    assert trend_stat(rows) == pytest.approx(spearman_oracle(xs, ys), abs=1e-9)


def test_trend_stat_calibration_on_shuffled_labels(norms):
    # with Gini values unrelated to the Apo share, the statistic stays small
    from aporosim.experiments import enumerate_subsets

    x = [apo_proportion(s) for s in enumerate_subsets(norms)]
    r = np.random.default_rng(3)
    rhos = [trend_stat([{"apo_proportion": a, "gini_mean": g} for a, g in zip(x, r.random(64))])
            for _ in range(200)]
    assert abs(np.mean(rhos)) < 0.05
    assert np.mean(np.abs(rhos) < 0.35) > 0.99
