import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ortho_group

from bmgc.errors import DomainError, ShapeMismatch
from bmgc.losses import (LossBreakdown, adv_loss, anf_loss, assemble_total, contrastive_pair_loss,
                         recon_cosine_loss)

from conftest import toy_term_check


def cosine_loop(X, Y):
    total = 0.0
    for x, y in zip(X, Y):
        total += 1.0 - float(x @ y) / max(np.linalg.norm(x) * np.linalg.norm(y), 1e-12)
    return total


def info_nce_oracle(A, B, i, tau):
    A = A / np.linalg.norm(A, axis=1, keepdims=True)
    B = B / np.linalg.norm(B, axis=1, keepdims=True)
    s = [float(A[i] @ B[j]) / tau for j in range(len(B))]
    return -math.log(math.exp(s[i]) / sum(math.exp(x) for x in s))


def test_recon_trivial(rng):
    X = rng.standard_normal((5, 3))
    assert recon_cosine_loss(X, X, 1) == pytest.approx(0.0, abs=1e-15)
    assert recon_cosine_loss(X, -X, 1) == pytest.approx(2.0)


def test_recon_loop_oracle(rng):
    X, Y = rng.standard_normal((5, 3)), rng.standard_normal((5, 3))
    assert recon_cosine_loss(X, Y, 2) == pytest.approx(cosine_loop(X, Y) / 10, abs=1e-10)


def test_recon_zero_row(rng):
    X = rng.standard_normal((4, 3))
    Y = X.copy()
    Y[2] = 0.0
    loss, g = recon_cosine_loss(X, Y, 1, return_grad=True)
    assert loss == pytest.approx(0.25)
    assert not g[2].any()


def test_recon_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        recon_cosine_loss(np.ones((3, 2)), np.ones((3, 3)), 1)


def test_pair_loss_identical_rows():
    Z = np.ones((7, 3))
    assert contrastive_pair_loss(Z, Z, 2, 1.0) == pytest.approx(math.log(7))


def test_pair_loss_closed_form():
    A = np.array([[1.0, 0.0], [0.0, 1.0]])
    B = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert contrastive_pair_loss(A, B, 0, 1.0) == pytest.approx(math.log(1 + math.exp(-2)), abs=1e-12)
    assert math.log(1 + math.exp(-2)) == pytest.approx(0.1269, abs=1e-4)


def test_pair_loss_oracle(rng):
    A, B = rng.standard_normal((8, 4)), rng.standard_normal((8, 4))
    for i in range(8):
        assert contrastive_pair_loss(A, B, i, 0.7) == pytest.approx(info_nce_oracle(A, B, i, 0.7), abs=1e-10)


def test_pair_loss_bad_tau():
    with pytest.raises(DomainError):
        contrastive_pair_loss(np.ones((2, 2)), np.ones((2, 2)), 0, 0.0)


@pytest.mark.parametrize("tau", [1.0, 0.5, 0.02])
def test_adv_matches_pair_sums(rng, tau):
    Zs = [rng.standard_normal((9, 3)) for _ in range(3)]
    v_star = 1
    expected = 0.0
    for v in (0, 2):
        for i in range(9):
            expected += contrastive_pair_loss(Zs[v], Zs[v_star], i, tau)
            expected += contrastive_pair_loss(Zs[v_star], Zs[v], i, tau)
    expected /= 2 * 9 * 2
    assert adv_loss(Zs, v_star, tau) == pytest.approx(expected, rel=1e-10)


def test_adv_identical_views():
    Z = np.ones((6, 2))
    assert adv_loss([Z, Z, Z], 0, 1.0) == pytest.approx(math.log(6))


def test_adv_single_view_warns():
    with pytest.warns(UserWarning):
        assert adv_loss([np.ones((3, 2))], 0, 1.0) == 0.0


def test_adv_row_permutation_invariant(rng):
    Zs = [rng.standard_normal((10, 3)) for _ in range(2)]
    perm = rng.permutation(10)
    assert adv_loss([z[perm] for z in Zs], 0, 1.0) == pytest.approx(adv_loss(Zs, 0, 1.0), rel=1e-12)


def test_anf_examples(rng):
    X = rng.standard_normal((12, 4))
    assert anf_loss(X, [X, X]) == 0.0
    R = ortho_group.rvs(4, random_state=3)
    assert anf_loss(X, [X @ R]) <= 1e-8
    Zs = [rng.standard_normal((12, 2)) for _ in range(3)]
    direct = sum(np.sum((X @ X.T - Z @ Z.T) ** 2) for Z in Zs) / (12 * 12 * 3)
    assert anf_loss(X, Zs) == pytest.approx(direct, rel=1e-8)


def test_anf_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        anf_loss(np.ones((4, 2)), [np.ones((3, 2))])


def test_assemble_total():
    assert assemble_total(LossBreakdown()) == 0.0
    assert LossBreakdown(1, 2, 3, 4).total == 10


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e6), min_size=4, max_size=4))
def test_assemble_total_random(parts):
    b = LossBreakdown(*parts)
    assert b.total == pytest.approx(sum(parts), rel=1e-12, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), tau=st.sampled_from([0.1, 1.0, 5.0]))
def test_losses_finite_nonnegative(seed, tau):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((8, 3))
    Zs = [rng.standard_normal((8, 2)) for _ in range(2)]
    r = recon_cosine_loss(X, rng.standard_normal((8, 3)), 1)
    assert 0.0 <= r <= 2.0
    assert adv_loss(Zs, 0, tau) >= 0.0
    assert anf_loss(X, Zs) >= 0.0


@pytest.mark.parametrize("term", ["rec", "adv", "anf", "clu"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_matches_finite_differences(term, seed):
    assert toy_term_check(term, seed=seed) < 1e-4


@pytest.mark.parametrize("term", ["rec", "adv", "anf", "clu"])
def test_gradient_sharper_temperature(term):
    assert toy_term_check(term, seed=5, tau=0.2, v_star=1) < 1e-4
