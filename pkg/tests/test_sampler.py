import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gds.errors import InsufficientMass, ZeroDenominator
from gds.sampler import WeightedPool, chain_prob_exact, gds_select, naive_select, sweep_select

from _oracles import enumerate_chains


def frequencies(weights, n, draws, seed):
    pool = WeightedPool(weights)
    stream = np.random.default_rng(seed)
    counts = {}
    for _ in range(draws):
        pool.reset()
        t = gds_select(pool, n, stream).indices
        counts[t] = counts.get(t, 0) + 1
    return counts


def test_chain_prob_examples():
    assert chain_prob_exact([1, 1, 1], (0, 1)) == pytest.approx(1 / 6, rel=1e-15)
    assert chain_prob_exact([2, 1, 1], (0, 1)) == 0.25
    assert chain_prob_exact([2, 1, 1], (0,)) == 0.5
    from fractions import Fraction

    assert chain_prob_exact([2, 1, 1], (0, 1), exact=True) == Fraction(1, 4)


def test_chain_prob_matches_hand_enumeration():
    w = [2, 1, 1]
    table = enumerate_chains(w, 2)
    for tup, p in table.items():
        assert chain_prob_exact(w, tup, exact=True) == p
    assert table[(0, 1)] == pytest.approx(0.25)


@pytest.mark.parametrize("N,n", [(3, 2), (5, 3), (7, 3), (7, 2), (6, 6)])
def test_chain_probs_sum_to_one(N, n):
    w = np.random.default_rng(N * 10 + n).random(N) + 0.05
    total = math.fsum(chain_prob_exact(w, t) for t in itertools.permutations(range(N), n))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_chain_prob_errors():
    with pytest.raises(ZeroDenominator):
        chain_prob_exact([1.0, 0.0, 0.0], (0, 1))
    with pytest.raises(ValueError):
        chain_prob_exact([1, 1], (0, 0))
    with pytest.raises(ValueError):
        chain_prob_exact([1, -1], (0,))
    assert chain_prob_exact([1.0, 0.0, 2.0], (1,)) == 0.0


def test_scale_invariance():
    w = np.array([0.3, 1.7, 2.2, 0.9, 0.4])
    for c in (2.0, 0.125, 1024.0):
        for t in [(0, 1), (4, 2, 3), (1,)]:
            assert chain_prob_exact(c * w, t, exact=True) == chain_prob_exact(w, t, exact=True)
    for c in (3.0, 0.7, 1e-5):
        assert chain_prob_exact(c * w, (4, 2, 3)) == pytest.approx(chain_prob_exact(w, (4, 2, 3)), rel=1e-12)


def test_equal_weights_are_uniform_without_replacement():
    N, n = 6, 3
    target = math.factorial(N - n) / math.factorial(N)
    for t in itertools.permutations(range(N), n):
        assert chain_prob_exact(np.ones(N), t) == pytest.approx(target, rel=1e-14)


def test_tree_prefix_sums_match_naive():
    rng = np.random.default_rng(7)
    for N in (1, 2, 3, 7, 8, 9, 31, 64, 100):
        w = rng.random(N) * (rng.random(N) > 0.2)
        pool = WeightedPool(w)
        for k in range(N + 1):
            assert pool.prefix(k) == pytest.approx(w[:k].sum(), abs=1e-12)
        removed = rng.permutation(N)[: N // 2]
        for i in removed:
            pool.remove(int(i))
        alive = w.copy()
        alive[removed] = 0.0
        for k in range(N + 1):
            assert pool.prefix(k) == pytest.approx(alive[:k].sum(), abs=1e-12)
        assert pool.total == pytest.approx(alive.sum(), abs=1e-12)


def test_first_prefix_strictly_exceeding():
    pool = WeightedPool([1.0, 0.0, 1.0, 2.0])
    assert pool.find(0.0) == 0
    assert pool.find(0.999) == 0
    assert pool.find(1.0) == 2  # boundary moves past the exhausted prefix
    assert pool.find(2.5) == 3
    assert pool.find(4.0) == 3  # rounding guard at the top


def test_zero_weights_never_selected(rng):
    w = np.array([0.0, 1.0, 0.0, 2.0, 0.0])
    for _ in range(200):
        idx = gds_select(WeightedPool(w), 2, rng).indices
        assert set(idx) == {1, 3}


def test_selection_examples():
    counts = frequencies([1, 1, 1], 2, 60_000, 11)
    for t in itertools.permutations(range(3), 2):
        p = 1 / 6
        assert abs(counts.get(t, 0) / 60_000 - p) <= 4 * math.sqrt(p * (1 - p) / 60_000)
    counts = frequencies([2, 1, 1], 1, 60_000, 12)
    p = 0.5
    assert abs(counts[(0,)] / 60_000 - p) <= 4 * math.sqrt(p * (1 - p) / 60_000)


@pytest.mark.parametrize("N,n", [(4, 2), (5, 3), (7, 3)])
def test_empirical_matches_exact(N, n):
    w = np.random.default_rng(N).random(N) + 0.1
    draws = 200_000
    counts = frequencies(w, n, draws, N + 100)
    for t in itertools.permutations(range(N), n):
        p = chain_prob_exact(w, t)
        assert abs(counts.get(t, 0) / draws - p) <= 4 * math.sqrt(p * (1 - p) / draws)


@settings(max_examples=150, deadline=None)
@given(
    st.lists(st.floats(min_value=0.0, max_value=10.0), min_size=1, max_size=40),
    st.integers(min_value=0, max_value=2**32),
    st.data(),
)
def test_selectors_agree(ws, seed, data):
    w = np.array(ws)
    positive = int(np.count_nonzero(w))
    if positive == 0:
        return
    n = data.draw(st.integers(min_value=1, max_value=positive))
    a = gds_select(WeightedPool(w), n, np.random.default_rng(seed)).indices
    b = naive_select(w, n, np.random.default_rng(seed))
    c = sweep_select(w, n, np.random.default_rng(seed))
    assert a == b == c
    assert len(set(a)) == n
    assert all(w[i] > 0 for i in a)


def test_subsample_carries_points(rng):
    data = np.arange(10.0)[:, None]
    sub = gds_select(WeightedPool(np.ones(10), data), 4, rng)
    assert sub.n == 4
    assert np.array_equal(sub.draws[:, 0], np.array(sub.indices, dtype=float))


def test_insufficient_mass(rng):
    with pytest.raises(InsufficientMass):
        gds_select(WeightedPool([1.0, 0.0]), 2, rng)
    with pytest.raises(InsufficientMass):
        sweep_select(np.array([0.0, 0.0, 1.0]), 2, rng)
    with pytest.raises(InsufficientMass):
        naive_select([0.0, 1.0], 2, rng)
    with pytest.raises(ValueError):
        WeightedPool([1.0, np.nan])


def test_determinism_and_stream_consumption():
    w = np.random.default_rng(0).random(1000)
    s1, s2 = np.random.default_rng(9), np.random.default_rng(9)
    assert gds_select(WeightedPool(w), 5, s1).indices == gds_select(WeightedPool(w), 5, s2).indices
    assert s1.random() == s2.random()
    s3 = np.random.default_rng(9)
    gds_select(WeightedPool(w), 5, s3)
    s4 = np.random.default_rng(9)
    s4.random(5)
    assert s3.random() == s4.random()


def test_large_pool_matches_sweep():
    rng = np.random.default_rng(3)
    w = rng.random(100_000) ** 3
    for seed in range(20):
        a = gds_select(WeightedPool(w), 10, np.random.default_rng(seed)).indices
        b = sweep_select(w, 10, np.random.default_rng(seed))
        assert a == b
