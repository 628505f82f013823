import numpy as np
import pytest

from bmgc.errors import DomainError
from bmgc.theory import (TwoBlockModel, expected_adjacency, lemma1_check, lemma_features,
                         propagation_operator, theorem1_check)


def model(p=0.3, q=0.1, sigma=0.5, K=3, N=200, mu=4.0):
    mu1 = np.array([mu, 0.0, 0.0, 0.0])
    return TwoBlockModel(N, p, q, mu1, -mu1, sigma, K)


def eigenvalues(m):
    return np.sort(np.linalg.eigvalsh(expected_adjacency(m)))[::-1]


def test_expected_adjacency_spectrum():
    ev = eigenvalues(model(N=40))
    assert ev[0] == pytest.approx(1.0, abs=1e-9)
    assert ev[1] == pytest.approx(0.5, abs=1e-9)
    assert np.max(np.abs(ev[2:])) < 1e-9


def test_expected_adjacency_limits():
    assert eigenvalues(model(p=0.2, q=0.2, N=20))[1] == pytest.approx(0.0, abs=1e-10)
    assert model(p=0.2, q=0.0).lambda2 == 1.0
    assert eigenvalues(model(p=0.2, q=0.0, N=20))[1] == pytest.approx(1.0, abs=1e-10)


def test_eigenvectors(rng):
    m = model(N=30)
    A = expected_adjacency(m)
    c1, c2 = m.communities()
    ones = np.ones(30) / np.sqrt(30)
    s = (c1 - c2) / np.sqrt(30)
    np.testing.assert_allclose(A @ ones, ones, atol=1e-12)
    np.testing.assert_allclose(A @ s, m.lambda2 * s, atol=1e-12)


def test_model_validation():
    mu = np.ones(3)
    with pytest.raises(DomainError):
        TwoBlockModel(7, 0.3, 0.1, mu, -mu, 0.1, 2)
    with pytest.raises(DomainError):
        TwoBlockModel(8, 0.0, 0.0, mu, -mu, 0.1, 2)
    with pytest.raises(DomainError):
        TwoBlockModel(8, 0.3, 0.1, mu, 2 * mu, 0.1, 2)
    with pytest.raises(DomainError):
        TwoBlockModel(8, 0.3, 0.1, mu, -mu, 0.1, 0)


def test_lemma_noiseless_exact():
    rep = lemma1_check(model(sigma=0.0), trials=100)
    assert rep["mean_check"]["exact"]
    assert rep["mean_check"]["max_abs_error"] < 1e-9
    assert rep["passed"]


def test_lemma_pure_homophily_fixed_point():
    m = model(p=0.4, q=0.0, sigma=0.0, K=5)
    np.testing.assert_allclose(lemma_features(m), m.features(), atol=1e-12)
    np.testing.assert_allclose(propagation_operator(m) @ m.features(), m.features(), atol=1e-9)
    assert lemma1_check(model(p=0.4, q=0.0, K=5), trials=200)["mean_check"]["passed"]


def test_lemma_monte_carlo():
    rep = lemma1_check(model(), trials=1000)
    assert rep["mean_check"]["passed"], rep["mean_check"]
    assert rep["variance_check"]["passed"], rep["variance_check"]


def test_lemma_needs_trials():
    with pytest.raises(DomainError):
        lemma1_check(model(), trials=10)


def test_theorem_ordering_and_gap():
    rep = theorem1_check(model(), trials=300, lambdas=[0.9, 0.5, 0.1])
    assert rep["centroid_check"]["passed"], rep["centroid_check"]
    assert rep["ordering_check"]["passed"]
    assert rep["ordering_check"]["argmin_lambda2"] == 0.9
    for view in rep["ordering_check"]["views"]:
        assert {"metric", "leading_term_norm", "omega_ratio_analytic", "omega_ratio_empirical"} <= set(view)


def test_theorem_uninformative_structure_gap_vanishes():
    rep = theorem1_check(model(p=0.2, q=0.2), trials=300)
    assert rep["centroid_check"]["passed"]
    assert np.allclose(rep["centroid_check"]["expected_gap"], 0.0)


def test_theorem_pure_homophily_and_heterophily_agree():
    rep = theorem1_check(model(K=2), trials=200, lambdas=[1.0, -1.0])
    a, b = (v["metric"] for v in rep["ordering_check"]["views"])
    assert a == pytest.approx(b, rel=1e-9)


def test_theorem_warns_on_weak_separation():
    with pytest.warns(UserWarning, match="separation"):
        theorem1_check(model(mu=0.5), trials=100)


def test_theorem_rejects_bad_lambda():
    with pytest.raises(DomainError):
        theorem1_check(model(), trials=100, lambdas=[1.5])


def test_reports_are_deterministic():
    a = theorem1_check(model(), trials=100, lambdas=[0.8, 0.2], seed=3)
    b = theorem1_check(model(), trials=100, lambdas=[0.8, 0.2], seed=3)
    assert a == b
