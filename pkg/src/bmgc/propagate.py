"""Decoupled feature propagation, computed once before training."""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeMismatch
from .graph import normalize_adjacency


def _check(A, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != A.n:
        raise ShapeMismatch(f"features {X.shape} do not match adjacency over {A.n} nodes")
    return X


def sgc_aggregate(A, X, K):
    """``A^K X`` for a normalized adjacency ``A``; ``K = 0`` returns ``X``."""
    if K < 0:
        raise DomainError(f"K must be >= 0, got {K}")
    out = _check(A, X)
    for _ in range(K):
        out = A.matmul(out)
    return out


def teleport_propagate(A_hat, X, K, alpha):
    """Run ``X_{k+1} = (1 - alpha) A_hat X_k + alpha X`` from ``X_0 = X`` for K hops."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    if K < 1:
        raise DomainError(f"K must be >= 1, got {K}")
    X = _check(A_hat, X)
    out = X
    for _ in range(K):
        out = (1.0 - alpha) * A_hat.matmul(out) + alpha * X
    return out


@dataclass(frozen=True)
class ViewAggregates:
    matrices: tuple
    K: int
    alpha: float

    def __post_init__(self):
        shapes = {m.shape for m in self.matrices}
        if len(shapes) != 1:
            raise ShapeMismatch(f"aggregates disagree in shape: {sorted(shapes)}")
        for m in self.matrices:
            if not np.all(np.isfinite(m)):
                raise DomainError("aggregated features contain non-finite values")


def aggregate_views(g, K, alpha, features=None):
    """Teleport propagation on the self-loop normalization of every view."""
    X = g.features if features is None else features
    mats = tuple(teleport_propagate(normalize_adjacency(a, self_loops=True), X, K, alpha)
                 for a in g.views)
    return ViewAggregates(mats, K, alpha)


def sgc_views(g, K, self_loops=True, isolated="zero", features=None):
    """Plain powers ``A^K X`` per view (``isolated`` only matters without self-loops)."""
    X = g.features if features is None else features
    return [sgc_aggregate(normalize_adjacency(a, self_loops=self_loops, isolated=isolated), X, K)
            for a in g.views]


def row_normalize(X, floor=1e-12):
    """Scale rows to unit L2 norm; all-zero rows stay zero."""
    X = np.asarray(X, dtype=np.float64)
    return X / np.maximum(np.linalg.norm(X, axis=1, keepdims=True), floor)
