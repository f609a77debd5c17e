import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

import oracles
from conftest import make_ds, rating_profiles
from recfair.metrics import (UNDEFINED, genre_distribution, item_means, miscalibration, pearson_correlation,
                             precision_at_k, profile_anomaly, profile_entropy, profile_size, user_factors)

# frozen reference values, computed at 50 digits
ENTROPY_3_1 = 0.562335144618808350
LN_100 = 4.605170185988091
KL_75_25 = 0.536126420899619213
LN_5 = 1.6094379124341003

genre_mixes = st.dictionaries(st.sampled_from("ABCDEF"), st.floats(0.01, 1.0), min_size=1).map(
    lambda d: {g: v / math.fsum(d.values()) for g, v in d.items()})


# -- profile factors ----------------------------------------------------------

def test_entropy_examples():
    ds = make_ds({1: {1: 5, 2: 5, 3: 5, 4: 4}, 2: {1: 3}, 3: {i: i for i in range(1, 6)}})
    assert profile_entropy(1, ds) == pytest.approx(ENTROPY_3_1, abs=1e-15)
    assert profile_entropy(2, ds) == 0.0
    assert profile_entropy(3, ds) == pytest.approx(LN_5, abs=1e-15)


def test_anomaly_example():
    # item 1 mean = 3, item 2 mean = 4
    ds = make_ds({1: {1: 5, 2: 4}, 2: {1: 1, 2: 4}})
    assert profile_anomaly(1, ds) == pytest.approx(1.0)
    assert profile_anomaly(2, ds) == pytest.approx(1.0)


def test_single_user_anomaly_is_zero():
    ds = make_ds({7: {1: 5, 2: 1, 3: 3}})
    assert profile_anomaly(7, ds) == 0.0


def test_size():
    ds = make_ds({1: {1: 5, 2: 4, 9: 1}})
    assert profile_size(1, ds) == 3


def test_unknown_and_empty_user():
    ds = make_ds({1: {1: 5}, 2: {1: 4}})
    with pytest.raises(KeyError):
        profile_entropy(99, ds)
    empty = ds.with_ratings(np.array([True, False]))
    with pytest.raises(ValueError):
        profile_anomaly(2, empty)
    assert profile_size(2, empty) == 0


@given(rating_profiles(max_users=6, max_items=8))
def test_factors_match_oracle(profiles):
    ds = make_ds(profiles)
    R = oracles.ratings_dict(ds)
    for f in user_factors(ds):
        assert f.anomaly == pytest.approx(oracles.anomaly(R, f.user_id), abs=1e-12)
        assert f.entropy == pytest.approx(oracles.entropy(R, f.user_id), abs=1e-12)
        assert f.size == len(R[f.user_id])
        assert profile_anomaly(f.user_id, ds) == pytest.approx(f.anomaly, abs=1e-12)
        assert profile_entropy(f.user_id, ds) == pytest.approx(f.entropy, abs=1e-12)


@given(rating_profiles(max_users=6, max_items=8))
def test_factor_bounds(profiles):
    ds = make_ds(profiles)
    lo, hi = ds.rating_domain[0], ds.rating_domain[-1]
    for f in user_factors(ds):
        assert 0.0 <= f.anomaly <= hi - lo
        assert 0.0 <= f.entropy <= math.log(len(ds.rating_domain)) + 1e-12
        assert f.size >= 1


@given(rating_profiles(max_users=4, max_items=8), st.randoms())
def test_entropy_permutation_invariant(profiles, rnd):
    u = min(profiles)
    items = list(profiles[u])
    values = [profiles[u][i] for i in items]
    rnd.shuffle(values)
    shuffled = dict(profiles)
    shuffled[u] = dict(zip(items, values))
    a = profile_entropy(u, make_ds(profiles))
    b = profile_entropy(u, make_ds(shuffled))
    assert a == pytest.approx(b, abs=1e-12)


def test_train_basis_anomaly():
    full = make_ds({1: {1: 5, 2: 3}, 2: {1: 1, 2: 3}})
    train = full.with_ratings(np.array([True, True, False, True]))
    f_train = {f.user_id: f for f in user_factors(full, basis=train)}
    # with user 2's rating of item 1 dropped, item 1 mean is 5
    assert f_train[1].anomaly == pytest.approx(0.0)
    assert f_train[2].anomaly == pytest.approx(2.0)


def test_item_means():
    ds = make_ds({1: {1: 5, 2: 3}, 2: {1: 2}})
    assert list(item_means(ds)) == [3.5, 3.0]


# -- precision ----------------------------------------------------------------

def test_precision_examples():
    assert precision_at_k([1, 2, 3, 4], {2, 4, 9}, 4) == 0.5
    assert precision_at_k([1, 2], {1, 2}, 10) == 0.2
    assert precision_at_k([], {1}, 10) == 0.0
    with pytest.raises(ValueError):
        precision_at_k([1], {1}, 0)


@given(st.lists(st.integers(1, 30), unique=True, max_size=15), st.sets(st.integers(1, 30)),
       st.integers(1, 15))
def test_precision_matches_oracle(rec, test, k):
    p = precision_at_k(rec, test, k)
    assert p == oracles.precision(rec, test, k)
    assert 0.0 <= p <= 1.0


@given(st.lists(st.integers(1, 30), unique=True, min_size=1, max_size=15), st.sets(st.integers(1, 30)),
       st.integers(1, 14))
def test_precision_hits_monotone_in_k(rec, test, k):
    # hit counts never decrease with k
    assert precision_at_k(rec, test, k + 1) * (k + 1) >= precision_at_k(rec, test, k) * k


# -- genre mix and miscalibration ---------------------------------------------

def test_genre_distribution_split():
    genres = {1: frozenset({"A", "B"}), 2: frozenset({"A"})}
    ds = make_ds({1: {1: 5, 2: 4}}, genres=genres)
    assert genre_distribution([(1, 1.0), (2, 1.0)], ds) == {"A": 0.75, "B": 0.25}
    with pytest.raises(ValueError):
        genre_distribution([], ds)


@given(st.lists(st.sets(st.sampled_from("ABCDE"), min_size=1), min_size=1, max_size=8))
def test_genre_distribution_matches_oracle(genre_sets):
    genres = {i + 1: frozenset(g) for i, g in enumerate(genre_sets)}
    ds = make_ds({1: {i: 3 for i in genres}}, genres=genres)
    got = genre_distribution([(i, 1.0) for i in genres], ds)
    want = oracles.genre_mix(list(genres), genres)
    assert got.keys() == want.keys()
    for g in got:
        assert got[g] == pytest.approx(want[g], abs=1e-12)
    assert math.fsum(got.values()) == pytest.approx(1.0, abs=1e-12)


def test_miscalibration_examples():
    assert miscalibration({"A": 1.0}, {"A": 1.0}) == 0.0
    assert miscalibration({"A": 1.0}, {"B": 1.0}) == pytest.approx(LN_100, abs=1e-12)
    assert miscalibration({"A": 0.75, "B": 0.25}, {"A": 0.25, "B": 0.75}) == pytest.approx(KL_75_25, abs=1e-12)
    assert miscalibration({"A": 1.0}, {}) == pytest.approx(LN_100, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.5])
def test_miscalibration_bad_alpha(alpha):
    with pytest.raises(ValueError):
        miscalibration({"A": 1.0}, {"A": 1.0}, alpha)


@given(genre_mixes, genre_mixes, st.sampled_from([0.01, 0.1, 0.5]))
def test_miscalibration_bounds_and_oracle(p, q, alpha):
    m = miscalibration(p, q, alpha)
    assert 0.0 <= m <= math.log(1.0 / alpha) + 1e-12
    assert m == pytest.approx(max(oracles.kl_smoothed(p, q, alpha), 0.0), abs=1e-12)


@given(genre_mixes)
def test_miscalibration_self_is_zero(p):
    assert miscalibration(p, p) == pytest.approx(0.0, abs=1e-12)


# -- correlation --------------------------------------------------------------

def test_pearson_examples():
    assert pearson_correlation([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(0.6, abs=1e-15)
    assert pearson_correlation([1, 2, 3], [2, 4, 6]) == 1.0
    assert pearson_correlation([1, 2, 3], [3, 2, 1]) == -1.0
    assert pearson_correlation([1, 1, 1], [1, 2, 3]) is UNDEFINED
    assert pearson_correlation([0.1] * 5, [1, 2, 3, 4, 5]) is UNDEFINED


def test_pearson_errors():
    with pytest.raises(ValueError):
        pearson_correlation([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson_correlation([1], [1])


finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(st.lists(st.tuples(finite, finite), min_size=3, max_size=20),
       st.floats(0.1, 10), st.floats(-100, 100))
def test_pearson_affine_invariance(pts, a, b):
    x = [p[0] for p in pts]
    y = [p[1] for p in pts]
    r = pearson_correlation(x, y)
    assume(r is not None and np.std(x) > 1e-3 and np.std(y) > 1e-3)
    assert -1.0 <= r <= 1.0
    assert r == pytest.approx(oracles.pearson(x, y), abs=1e-9)
    assert pearson_correlation([a * v + b for v in x], y) == pytest.approx(r, abs=1e-9)
    assert pearson_correlation(y, x) == pytest.approx(r, abs=1e-12)


def test_anomaly_hand_example():
    # item means 4.0 and 3.0: (|5 - 4| + |3 - 3|) / 2
    ds = make_ds({1: {1: 5, 2: 3}, 2: {1: 3, 2: 3}})
    assert profile_anomaly(1, ds) == pytest.approx(0.5)


def test_three_of_ten_hits():
    assert precision_at_k(list(range(1, 11)), {2, 5, 9, 40}, 10) == pytest.approx(0.3)
    assert precision_at_k(list(range(1, 11)), set(range(1, 11)), 10) == 1.0


def test_genre_distribution_trivial():
    genres = {1: frozenset({"Drama"}), 2: frozenset({"Comedy"})}
    ds = make_ds({1: {1: 5, 2: 4}}, genres=genres)
    assert genre_distribution([(1, 1.0)], ds) == {"Drama": 1.0}
    assert genre_distribution([(1, 1.0), (2, 1.0)], ds) == {"Comedy": 0.5, "Drama": 0.5}


def test_pearson_negation():
    x = [0.3, 1.7, 2.2, 5.0]
    assert pearson_correlation(x, [-v for v in x]) == pytest.approx(-1.0)
