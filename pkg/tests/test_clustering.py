import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bmgc.clustering import (clu_loss, kl_divergence, kmeans, soft_assignment, target_distribution,
                             view_centers)
from bmgc.errors import DomainError, ShapeMismatch


def test_kmeans_single_cluster(rng):
    Z = rng.standard_normal((20, 3))
    res = kmeans(Z, 1)
    np.testing.assert_allclose(res.centers[0], Z.mean(axis=0))
    assert res.inertia == pytest.approx(np.sum((Z - Z.mean(axis=0)) ** 2))


def test_kmeans_separable_blobs(rng):
    y = np.repeat([0, 1], 30)
    Z = rng.standard_normal((60, 2)) * 0.2 + 10.0 * y[:, None]
    a = kmeans(Z, 2, seed=3).assignments
    assert (a == y).all() or (a == 1 - y).all()


def test_kmeans_matches_brute_force(rng):
    Z = rng.standard_normal((8, 2))
    best = np.inf
    for bits in itertools.product([0, 1], repeat=8):
        lab = np.array(bits)
        if lab.min() == lab.max():
            continue
        best = min(best, sum(np.sum((Z[lab == k] - Z[lab == k].mean(axis=0)) ** 2) for k in (0, 1)))
    assert kmeans(Z, 2, seed=0, restarts=10).inertia == pytest.approx(best, rel=1e-9)


def test_kmeans_identical_rows_warns():
    with pytest.warns(UserWarning):
        res = kmeans(np.ones((5, 2)), 3)
    assert res.centers.shape == (3, 2)
    assert res.inertia == 0.0


def test_kmeans_errors():
    with pytest.raises(DomainError):
        kmeans(np.ones((2, 2)), 3)
    with pytest.raises(ShapeMismatch):
        kmeans(np.arange(8.0).reshape(4, 2), 2, init=np.zeros((3, 2)))


def test_kmeans_deterministic_and_restart_monotone(rng):
    Z = rng.standard_normal((80, 3))
    a, b = kmeans(Z, 4, seed=7, restarts=2), kmeans(Z, 4, seed=7, restarts=2)
    assert np.array_equal(a.assignments, b.assignments)
    inertias = [kmeans(Z, 4, seed=7, restarts=r).inertia for r in range(1, 6)]
    assert all(x >= y for x, y in zip(inertias, inertias[1:]))


def test_kmeans_no_empty_cluster(rng):
    Z = np.vstack([rng.standard_normal((30, 2)), [[100.0, 100.0]]])
    res = kmeans(Z, 5, seed=1)
    assert set(res.assignments) == set(range(5))


def test_view_centers_examples(rng):
    np.testing.assert_array_equal(view_centers(np.tile([1.0, 2.0], (4, 1)), [0, 1, 0, 1], 2),
                                  [[1, 2], [1, 2]])
    np.testing.assert_array_equal(view_centers(np.array([[0.0, 0.0], [2.0, 2.0]]), [0, 1], 2),
                                  [[0, 0], [2, 2]])
    Z = rng.standard_normal((10, 3))
    y = np.arange(10) % 3
    for j in range(3):
        np.testing.assert_allclose(view_centers(Z, y, 3)[j], Z[y == j].mean(axis=0), atol=1e-12)


def test_view_centers_empty_cluster_warns(rng):
    Z = rng.standard_normal((6, 2))
    with pytest.warns(UserWarning, match="empty"):
        c = view_centers(Z, [0, 0, 0, 1, 1, 1], 3)
    assert c.shape == (3, 2)
    assert np.isfinite(c).all()


def test_soft_assignment_examples(rng):
    Q = soft_assignment(np.zeros((1, 2)), np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]))
    np.testing.assert_allclose(Q, [[1 / 3] * 3])
    Q = soft_assignment(np.array([[5.0, 5.0]]), np.array([[5.0, 5.0], [-5.0, -5.0]]))
    expected = 1.0 / (1.0 + 200.0)
    assert Q[0, 1] == pytest.approx(expected / (1.0 + expected), rel=1e-12)
    Z = rng.standard_normal((6, 2))
    C = rng.standard_normal((2, 2))
    oracle = np.array([[1 / (1 + np.sum((z - c) ** 2)) for c in C] for z in Z])
    np.testing.assert_allclose(soft_assignment(Z, C), oracle / oracle.sum(axis=1, keepdims=True), atol=1e-12)


def test_soft_assignment_shape_errors():
    with pytest.raises(ShapeMismatch):
        soft_assignment(np.ones((2, 3)), np.ones((2, 2)))
    with pytest.raises(ShapeMismatch):
        soft_assignment(np.ones((2, 3)), np.ones((0, 3)))


def test_target_distribution_examples(rng):
    one_hot = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(target_distribution(one_hot), one_hot, atol=1e-11)
    np.testing.assert_allclose(target_distribution(np.full((4, 3), 1 / 3)), np.full((4, 3), 1 / 3))
    Q = rng.dirichlet(np.ones(3), size=5)
    f = Q.sum(axis=0)
    P = np.array([[Q[i, j] ** 2 / f[j] for j in range(3)] for i in range(5)])
    np.testing.assert_allclose(target_distribution(Q), P / P.sum(axis=1, keepdims=True), atol=1e-12)


def test_kl_examples(rng):
    assert kl_divergence(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]])) == pytest.approx(np.log(2))
    P, Q = rng.dirichlet(np.ones(4), size=7), rng.dirichlet(np.ones(4), size=7)
    assert kl_divergence(P, Q) == pytest.approx(np.sum(P * np.log(P / Q)) / 7, abs=1e-10)
    assert kl_divergence(P, P) == 0.0


def test_clu_loss_combination(rng):
    pairs = [(rng.dirichlet(np.ones(2), 5), rng.dirichlet(np.ones(2), 5)) for _ in range(3)]
    concat = (rng.dirichlet(np.ones(2), 5), rng.dirichlet(np.ones(2), 5))
    expected = kl_divergence(*concat) + sum(kl_divergence(P, Q) for P, Q in pairs) / 3
    assert clu_loss(pairs, concat, 3) == pytest.approx(expected)
    same = [(P, P) for P, _ in pairs]
    assert clu_loss(same, (concat[0], concat[0]), 3) == 0.0


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 100_000), C=st.integers(2, 6))
def test_distribution_invariants(seed, C):
    rng = np.random.default_rng(seed)
    Q = rng.dirichlet(np.full(C, 0.5), size=9)
    P = target_distribution(Q)
    assert np.all(P > 0)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)
    assert kl_divergence(P, Q) >= 0.0
    # argmax of P follows q^2 / f, not q itself
    f = Q.sum(axis=0)
    assert np.array_equal(P.argmax(axis=1), (Q * Q / f).argmax(axis=1))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 100_000), C=st.integers(2, 6))
def test_target_keeps_argmax_with_equal_cluster_mass(seed, C):
    rng = np.random.default_rng(seed)
    base = rng.dirichlet(np.ones(C), size=5)
    # every cyclic shift of each row: all column sums equal
    Q = np.vstack([np.roll(base, k, axis=1) for k in range(C)])
    assert np.array_equal(target_distribution(Q).argmax(axis=1), Q.argmax(axis=1))


def test_target_argmax_can_move_on_near_ties():
    Q = np.array([[0.54, 0.46]] + [[0.95, 0.05]] * 9)
    assert target_distribution(Q)[0].argmax() == 1
