import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from assetembed.evaluation import (
    classify_sectors,
    dissimilar_pools,
    hedge_experiment,
    hedge_volatilities,
    knn_neighbors,
    realized_volatility,
    similarity_matrix,
    spearman,
    welch_t_test_one_sided,
)
from assetembed.panel import ReturnsPanel
from assetembed.testkit import business_dates
from assetembed.trainer import EmbeddingMatrix


def _emb(vectors):
    return EmbeddingMatrix(np.asarray(vectors, float), tuple(f"a{i}" for i in range(len(vectors))))


# --- neighbours ---------------------------------------------------------------


def test_knn_duplicate_first_negation_last():
    rng = np.random.default_rng(0)
    V = rng.normal(size=(6, 4))
    V[3] = V[0]
    V[5] = -V[0]
    res = knn_neighbors(_emb(V), "a0", m=5)
    assert res[0] == ("a3", pytest.approx(1.0, abs=1e-12))
    assert res[-1] == ("a5", pytest.approx(-1.0, abs=1e-12))


def brute_force_neighbours(V, i, m):
    scored = []
    for j in range(len(V)):
        if j != i:
            c = float(V[i] @ V[j] / math.sqrt((V[i] @ V[i]) * (V[j] @ V[j])))
            scored.append((-c, j, c))
    scored.sort()
    return [(f"a{j}", c) for _, j, c in scored[:m]]


def test_knn_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(20):
        V = rng.normal(size=(8, 4))
        for i in range(8):
            got = knn_neighbors(_emb(V), f"a{i}", m=7)
            want = brute_force_neighbours(V, i, 7)
            assert [a for a, _ in got] == [a for a, _ in want]
            np.testing.assert_allclose([c for _, c in got], [c for _, c in want], atol=1e-12)


def test_knn_ties_by_index():
    V = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 2.0], [0.0, 1.0]])
    assert [a for a, _ in knn_neighbors(_emb(V), "a0", 3)] == ["a1", "a2", "a3"]


def test_knn_errors():
    E = _emb(np.eye(3))
    with pytest.raises(KeyError):
        knn_neighbors(E, "zz", 1)
    with pytest.raises(ValueError):
        knn_neighbors(E, "a0", 3)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.floats(0.01, 100), min_size=8, max_size=8))
def test_knn_scale_invariant(seed, scales):
    V = np.random.default_rng(seed).normal(size=(8, 4))
    base = knn_neighbors(_emb(V), "a2", 7)
    scaled = knn_neighbors(_emb(V * np.array(scales)[:, None]), "a2", 7)
    assert [a for a, _ in scaled] == [a for a, _ in base]


# --- classification -----------------------------------------------------------


def _clusters(n_classes=4, per=10, noise=0.05, seed=0):
    rng = np.random.default_rng(seed)
    centres = np.eye(n_classes) * 3
    X = np.repeat(centres, per, axis=0) + noise * rng.normal(size=(n_classes * per, n_classes))
    labels = [f"S{c}" for c in range(n_classes) for _ in range(per)]
    return X, labels


def test_separable_clusters_perfect():
    X, labels = _clusters()
    rep = classify_sectors(X, labels)
    assert rep.accuracy == 1.0 and rep.macro_f1 == 1.0
    assert len(rep.fold_accuracy) == 5
    assert sorted(set(rep.fold_of.values())) == [0, 1, 2, 3, 4]
    assert len(rep.fold_of) == 40


def test_shuffled_labels_near_chance():
    # average over repeated shuffles: the chance-level oracle is 1 / classes
    X, labels = _clusters(n_classes=4, per=25, noise=1.0)
    rng = np.random.default_rng(5)
    accs = [classify_sectors(X, list(rng.permutation(labels)), seed=s).accuracy for s in range(10)]
    assert abs(np.mean(accs) - 0.25) <= 0.1


def test_permutation_invariant_and_seeded():
    X, labels = _clusters(n_classes=3, per=12, noise=2.0, seed=2)
    ids = [f"x{i:02d}" for i in range(len(X))]
    a = classify_sectors(X, labels, asset_ids=ids, seed=4)
    perm = np.random.default_rng(9).permutation(len(X))
    b = classify_sectors(X[perm], [labels[j] for j in perm], asset_ids=[ids[j] for j in perm], seed=4)
    assert a.accuracy == b.accuracy and a.fold_of == b.fold_of
    assert classify_sectors(X, labels, asset_ids=ids, seed=4).fold_accuracy == a.fold_accuracy


def test_small_class_dropped_and_unlabeled_ignored():
    X, labels = _clusters(n_classes=3, per=10)
    X = np.vstack([X, [[0, 0, 5]] * 2, [[1, 1, 1]]])
    labels = labels + ["tiny", "tiny", None]
    with pytest.warns(UserWarning, match="tiny"):
        rep = classify_sectors(X, labels)
    assert rep.classes == ["S0", "S1", "S2"]
    assert len(rep.dropped) == 2 and len(rep.fold_of) == 30


def test_classification_errors():
    X, _ = _clusters()
    with pytest.raises(ValueError, match="no sector labels"):
        classify_sectors(X, [None] * len(X))


# --- volatility, rank correlation, Welch --------------------------------------


def test_realized_volatility_examples():
    assert realized_volatility(np.full(50, 0.003)) == 0.0
    r = np.random.default_rng(0).normal(0, 0.01, 100)
    assert realized_volatility(0.5 * (r + -r)) == 0.0
    alt = np.tile([0.01, -0.01], 50)
    # direct std of 50 +0.01 and 50 -0.01 values, mpmath at 50 digits
    assert realized_volatility(alt) == pytest.approx(0.15954480704349313219, abs=1e-12)
    with pytest.raises(ValueError):
        realized_volatility([0.1])


@settings(max_examples=100, deadline=None)
@given(
    arrays(np.float64, st.integers(2, 60), elements=st.floats(-0.2, 0.2)),
    st.floats(-1, 1),
    st.floats(0, 10),
)
def test_realized_volatility_translation_and_scale(r, shift, c):
    v = realized_volatility(r)
    assert realized_volatility(r + shift) == pytest.approx(v, rel=1e-6, abs=1e-9)
    assert realized_volatility(c * r) == pytest.approx(c * v, rel=1e-9, abs=1e-12)


def test_spearman_examples():
    x = np.array([0.3, -1.2, 4.0, 2.2, 0.0])
    assert spearman(x, np.exp(x)) == pytest.approx(1.0, abs=1e-15)
    assert spearman(x, -x) == pytest.approx(-1.0, abs=1e-15)
    # ranks [1, 2.5, 2.5, 4] and [4, 2.5, 2.5, 1]: exactly reversed
    assert spearman([1, 2, 2, 4], [4, 3, 3, 1]) == pytest.approx(-1.0, abs=1e-15)
    # ranks [1, 2.5, 2.5, 4] vs [1, 2, 3, 4]: cov 4.5/3 over sqrt(4.5/3 * 5/3)
    assert spearman([1, 2, 2, 4], [1, 2, 3, 4]) == pytest.approx(4.5 / math.sqrt(4.5 * 5), abs=1e-15)
    with pytest.raises(ValueError):
        spearman([1, 2, 3], [1, 2])


def test_welch_identical_and_separated():
    a = [0.1, 0.2, 0.3, 0.25]
    assert welch_t_test_one_sided(a, a)[0] == 0.0
    assert welch_t_test_one_sided(a, a)[2] == pytest.approx(0.5, abs=1e-15)
    b = np.array([10.0, 10.001, 9.999, 10.0005])
    assert welch_t_test_one_sided(b - 10, b)[2] < 1e-6
    assert welch_t_test_one_sided([1.0, 1.0], [1.0, 1.0]) == (0.0, math.inf, 0.5)
    with pytest.raises(ValueError):
        welch_t_test_one_sided([1.0], [1.0, 2.0])


WELCH_A = [0.21, 0.19, 0.23, 0.18, 0.20, 0.22, 0.17, 0.24, 0.19, 0.21]
WELCH_B = [0.25, 0.23, 0.27, 0.22, 0.26, 0.24, 0.28, 0.21, 0.25, 0.26]


def test_welch_high_precision_reference():
    # t, df from exact rationals; p from mpmath's regularized incomplete beta
    t, df, p = welch_t_test_one_sided(WELCH_A, WELCH_B)
    assert t == pytest.approx(-4.3362875631706523825, abs=1e-12)
    assert df == pytest.approx(17.999793165260956496, abs=1e-10)
    assert p == pytest.approx(0.00019889797577057206452, abs=1e-10)


# --- hedging ------------------------------------------------------------------


def _panel(returns, ids=None):
    n, T = returns.shape
    ids = ids or tuple(f"a{i}" for i in range(n))
    return ReturnsPanel(tuple(ids), tuple(business_dates(T)), returns)


def test_planted_negation_gives_zero_volatility():
    rng = np.random.default_rng(0)
    R = rng.normal(0, 0.01, size=(6, 400))
    R[5] = -R[0]
    V = rng.normal(size=(6, 3))
    V[5] = -V[0]
    train, test = _panel(R[:, :200]), _panel(R[:, 200:])
    rep = hedge_experiment(train, test, "embedding", _emb(V), pool_size=2, repeats=40, seed=1)
    assert 5 in dissimilar_pools(similarity_matrix("embedding", train, _emb(V)), 2)[0]
    hits = rep.method_hedges[0] == 5
    assert hits.any() and not hits.all()
    assert np.all(rep.method_vols[0, hits] < 1e-12)
    assert np.all(rep.method_vols[0, ~hits] > 0.01)


def test_pool_of_one_repeats_identically():
    R = np.random.default_rng(2).normal(0, 0.01, size=(7, 300))
    train, test = _panel(R[:, :150]), _panel(R[:, 150:])
    rep = hedge_experiment(train, test, "pearson", pool_size=1, repeats=10)
    assert np.all(rep.method_vols == rep.method_vols[:, :1])
    sim = np.corrcoef(R[:, :150])
    np.fill_diagonal(sim, np.inf)
    np.testing.assert_array_equal(rep.method_hedges[:, 0], np.argmin(sim, axis=1))


def test_pool_too_large_and_universe_mismatch():
    R = np.random.default_rng(3).normal(0, 0.01, size=(4, 100))
    with pytest.raises(ValueError):
        hedge_experiment(_panel(R), _panel(R), "pearson", pool_size=4)
    with pytest.raises(ValueError):
        hedge_experiment(_panel(R), _panel(R, ("w", "x", "y", "z")), "pearson", pool_size=2)


def cosine_ranking_oracle(V, R_test, pool_size, repeats, seed):
    """Rank by scalar cosine, then draw hedges with the same trial seeds."""
    n = len(V)
    pools = []
    for i in range(n):
        cos = {j: float(V[i] @ V[j] / (np.linalg.norm(V[i]) * np.linalg.norm(V[j])))
               for j in range(n) if j != i}
        pools.append(sorted(cos, key=lambda j: (cos[j], j))[:pool_size])
    vols = np.empty((n, repeats))
    for k in range(repeats):
        picks = np.random.default_rng(seed + k).integers(0, pool_size, size=n)
        for i in range(n):
            port = [(a + b) / 2 for a, b in zip(R_test[i], R_test[pools[i][picks[i]]])]
            vols[i, k] = realized_volatility(port)
    return vols


def test_embedding_source_matches_cosine_oracle():
    rng = np.random.default_rng(4)
    for n, pool in itertools.product((5, 9), (1, 3)):
        V = rng.normal(size=(n, 4))
        R = rng.normal(0, 0.01, size=(n, 120))
        rep = hedge_experiment(_panel(R[:, :60]), _panel(R[:, 60:]), "embedding", _emb(V),
                               pool_size=pool, repeats=7, seed=11)
        np.testing.assert_allclose(rep.method_vols, cosine_ranking_oracle(V, R[:, 60:], pool, 7, 11),
                                   rtol=1e-12)


def test_hedge_report_shapes_and_baseline():
    R = np.random.default_rng(6).normal(0, 0.01, size=(10, 200))
    train, test = _panel(R[:, :100]), _panel(R[:, 100:])
    rep = hedge_experiment(train, test, "spearman", pool_size=3, repeats=12)
    assert rep.method_vols.shape == rep.baseline_vols.shape == (10, 12)
    assert np.all(rep.method_vols >= 0)
    same = hedge_experiment(train, test, "pearson", pool_size=3, repeats=12)
    assert same.p_value == pytest.approx(0.5) and same.t_stat == 0.0


def test_hedge_volatilities_seeded():
    R = np.random.default_rng(8).normal(0, 0.01, size=(5, 50))
    pools = np.array([[1, 2], [0, 2], [0, 1], [0, 1], [0, 1]])
    a = hedge_volatilities(R, pools, 5, 3)
    b = hedge_volatilities(R, pools, 5, 3)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
