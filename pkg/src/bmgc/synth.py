"""Contextual stochastic block models, single- and multi-relational.

Two balanced classes with labels ``y in {-1, +1}`` (exposed as ``{0, 1}``);
node features ``X_i = sqrt(mu / N) y_i u + H_i / sqrt(d_f)`` with
``u ~ N(0, I / d_f)``; edges i.i.d. Bernoulli per unordered pair with
probability ``(d + lambda sqrt(d)) / N`` inside a class and
``(d - lambda sqrt(d)) / N`` across. ``phi`` sets the structure/feature
balance through ``lambda^2 + mu^2 / xi = 1 + eps``, ``xi = N / d_f``.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import seeding
from .errors import DomainError
from .graph import MultiRelationalGraph, SparseAdjacency


@dataclass(frozen=True)
class CsbmParams:
    N: int = 5000
    d_f: int = 2000
    d: float = 5.0
    epsilon: float = 3.25
    phi: float = 0.5
    seed: int = 0

    @property
    def xi(self):
        return self.N / self.d_f

    def lambda_mu(self):
        return phi_to_lambda_mu(self.phi, self.xi, self.epsilon)


@dataclass(frozen=True)
class MultiCsbmParams:
    base: CsbmParams = field(default_factory=CsbmParams)
    V: int = 3
    rho: float = 0.0

    @property
    def perturbed_views(self):
        return tuple(range(1, self.V))


def phi_to_lambda_mu(phi, xi, epsilon):
    if not -1.0 <= phi <= 1.0:
        raise DomainError(f"phi must lie in [-1, 1], got {phi}")
    if epsilon <= 0 or xi <= 0:
        raise DomainError("epsilon and xi must be positive")
    r = math.sqrt(1.0 + epsilon)
    lam = r * math.sin(phi * math.pi / 2)
    mu = math.sqrt(xi) * r * math.cos(phi * math.pi / 2)
    return lam, max(mu, 0.0)


def lambda_mu_to_phi(lam, mu, xi):
    return 2.0 / math.pi * math.atan2(lam * math.sqrt(xi), mu)


def _labels(N, rng):
    y = np.zeros(N, dtype=np.int64)
    y[rng.permutation(N)[: N // 2]] = 1
    return y


def _features(N, d_f, mu, y, rng):
    sign = np.where(y == 1, 1.0, -1.0)
    u = rng.normal(0.0, 1.0 / math.sqrt(d_f), size=d_f)
    H = rng.standard_normal((N, d_f))
    X = math.sqrt(mu / N) * sign[:, None] * u[None, :] + H / math.sqrt(d_f)
    # float32-representable so the on-disk format round-trips exactly
    return X.astype(np.float32).astype(np.float64)


def _edges(y, d, lam, rng):
    N = len(y)
    p_in = (d + lam * math.sqrt(d)) / N
    p_out = (d - lam * math.sqrt(d)) / N
    if not (0.0 <= p_out <= 1.0 and 0.0 <= p_in <= 1.0):
        raise DomainError(f"edge probabilities out of range: p_in={p_in:.4g}, p_out={p_out:.4g}")
    rows, cols = [], []
    for i in range(N - 1):
        j = np.arange(i + 1, N)
        p = np.where(y[j] == y[i], p_in, p_out)
        hit = j[rng.random(N - i - 1) < p]
        rows.append(np.full(len(hit), i))
        cols.append(hit)
    return np.concatenate(rows), np.concatenate(cols)


def sample_structure(y, d, lam, rng):
    r, c = _edges(y, d, lam, rng)
    return SparseAdjacency.from_edges(len(y), r, c)


def csbm_generate(p):
    """One cSBM draw: ``(adjacency, features, labels)``."""
    lam, mu = p.lambda_mu()
    y = _labels(p.N, seeding.stream(p.seed, seeding.GENERATOR, 0))
    X = _features(p.N, p.d_f, mu, y, seeding.stream(p.seed, seeding.GENERATOR, 1))
    A = sample_structure(y, p.d, lam, seeding.stream(p.seed, seeding.GENERATOR, 2))
    return A, X, y


def add_noise_edges(adj, count, rng):
    """Add ``count`` uniformly random new edges (no loops, no duplicates)."""
    n = adj.n
    if count > n * (n - 1) // 2 - adj.num_edges:
        raise DomainError("not enough free node pairs for the requested noise edges")
    r0, c0, _ = adj.edges()
    taken = set((r0 * n + c0).tolist())
    new_r, new_c = [], []
    while len(new_r) < count:
        need = count - len(new_r)
        a = rng.integers(0, n, size=2 * need + 16)
        b = rng.integers(0, n, size=2 * need + 16)
        for u, v in zip(a.tolist(), b.tolist()):
            if u == v:
                continue
            lo, hi = (u, v) if u < v else (v, u)
            k = lo * n + hi
            if k in taken:
                continue
            taken.add(k)
            new_r.append(lo)
            new_c.append(hi)
            if len(new_r) == count:
                break
    rows = np.concatenate([r0, np.array(new_r, dtype=np.int64)])
    cols = np.concatenate([c0, np.array(new_c, dtype=np.int64)])
    return SparseAdjacency.from_edges(n, rows, cols)


def multi_csbm_generate(p):
    """Multi-relational cSBM: ``V`` independent structures sharing X and y.

    Every view but the first gets ``round(rho * |E_v|)`` random extra edges.
    """
    if p.rho < 0:
        raise DomainError(f"rho must be >= 0, got {p.rho}")
    if p.V < 1:
        raise DomainError("V must be >= 1")
    b = p.base
    lam, mu = b.lambda_mu()
    y = _labels(b.N, seeding.stream(b.seed, seeding.GENERATOR, 0))
    X = _features(b.N, b.d_f, mu, y, seeding.stream(b.seed, seeding.GENERATOR, 1))
    views = []
    for v in range(p.V):
        a = sample_structure(y, b.d, lam, seeding.stream(b.seed, seeding.GENERATOR, 2, v))
        if v in p.perturbed_views and p.rho > 0:
            extra = int(round(p.rho * a.num_edges))
            a = add_noise_edges(a, extra, seeding.stream(b.seed, seeding.GENERATOR, 3, v))
        views.append(a)
    return MultiRelationalGraph(tuple(views), X, y, 2)


def phi_sweep_graph(base, phis):
    """Graphs that share one feature matrix and differ only in structure.

    Features come from ``base`` (its phi fixes mu); each structure uses the
    lambda of its own phi.
    """
    _, mu = base.lambda_mu()
    y = _labels(base.N, seeding.stream(base.seed, seeding.GENERATOR, 0))
    X = _features(base.N, base.d_f, mu, y, seeding.stream(base.seed, seeding.GENERATOR, 1))
    views = []
    for k, phi in enumerate(phis):
        lam, _ = replace(base, phi=phi).lambda_mu()
        views.append(sample_structure(y, base.d, lam, seeding.stream(base.seed, seeding.GENERATOR, 4, k)))
    return MultiRelationalGraph(tuple(views), X, y, 2)
