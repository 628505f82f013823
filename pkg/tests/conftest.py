import numpy as np
import pytest

from bmgc.graph import MultiRelationalGraph, SparseAdjacency


def random_adjacency(n, p, rng, weighted=False):
    """Erdos-Renyi graph as a SparseAdjacency (upper triangle sampled once)."""
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    w = rng.uniform(0.5, 2.0, keep.sum()) if weighted else None
    return SparseAdjacency.from_edges(n, iu[keep], ju[keep], w)


def ring(n):
    i = np.arange(n)
    return SparseAdjacency.from_edges(n, i, (i + 1) % n)


def two_block_graph(n=40, d_f=6, views=2, seed=0, p_in=0.5, p_out=0.05):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    adjs = []
    for _ in range(views):
        iu, ju = np.triu_indices(n, 1)
        prob = np.where(y[iu] == y[ju], p_in, p_out)
        keep = rng.random(len(iu)) < prob
        adjs.append(SparseAdjacency.from_edges(n, iu[keep], ju[keep]))
    X = rng.standard_normal((n, d_f)) + 1.5 * (2 * y[:, None] - 1) * (np.arange(d_f) == 0)
    return MultiRelationalGraph(tuple(adjs), X, y, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_graph():
    return two_block_graph()


def toy_problem(seed=0, n=6, d_f=4, d_r=3, hidden=5, views=2):
    """Small float64 model and inputs for gradient checks."""
    from bmgc.trainer import BMGCModel

    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d_f))
    X_views = [X + 0.3 * rng.standard_normal((n, d_f)) for _ in range(views)]
    model = BMGCModel.init(d_f, d_r, hidden, views, rng)
    return model, X_views, X


def toy_term_check(term, seed=0, h=1e-4, tau=1.0, v_star=0, elementwise=False):
    """Max relative error between analytic and central-difference gradients of one loss term.

    For the clustering term the targets (centers and P) are frozen at the
    starting point, matching how the trainer treats them.
    """
    from bmgc.clustering import kl_divergence, soft_assignment, target_distribution
    from bmgc.nn import finite_difference, max_relative_error
    from bmgc.trainer import cluster_targets, concat, forward, loss_and_grads

    model, Xs, X = toy_problem(seed)
    V = len(Xs)
    fwd = forward(model, Xs)
    targets = cluster_targets(fwd.Z, v_star, 2, seed=seed, epoch=0) if term == "clu" else None
    _, grads = loss_and_grads(model, fwd, Xs, X, v_star, tau, targets=targets, terms=(term,))

    if term == "clu":
        P0 = [target_distribution(soft_assignment(z, c)) for z, c in zip(fwd.Z, targets.view_centers)]
        Pc0 = target_distribution(soft_assignment(concat(fwd.Z), targets.concat_centers))

        def value():
            Z = forward(model, Xs).Z
            per = sum(kl_divergence(P, soft_assignment(z, c))
                      for P, z, c in zip(P0, Z, targets.view_centers)) / V
            return per + kl_divergence(Pc0, soft_assignment(concat(Z), targets.concat_centers))
    else:
        def value():
            parts, _ = loss_and_grads(model, forward(model, Xs), Xs, X, v_star, tau, terms=(term,))
            return getattr(parts, term)

    numeric = finite_difference(value, model.arrays(), h=h)
    return max_relative_error(grads, numeric, elementwise=elementwise)


# one PASS/FAIL line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
