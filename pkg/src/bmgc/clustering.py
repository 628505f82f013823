"""k-means and self-training clustering (Student-t soft assignments, sharpened targets, KL)."""

import warnings
from dataclasses import dataclass

import numpy as np

from . import seeding
from .errors import DomainError, ShapeMismatch

FLOOR = 1e-12


@dataclass(frozen=True)
class ClusterResult:
    assignments: np.ndarray
    centers: np.ndarray
    inertia: float


@dataclass(frozen=True)
class SoftAssignments:
    Q: np.ndarray
    P: np.ndarray


def _sq_dists(Z, centers):
    d = (Z * Z).sum(axis=1)[:, None] - 2.0 * (Z @ centers.T) + (centers * centers).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _plusplus(Z, C, rng):
    N = Z.shape[0]
    centers = np.empty((C, Z.shape[1]))
    centers[0] = Z[rng.integers(N)]
    closest = _sq_dists(Z, centers[:1])[:, 0]
    for k in range(1, C):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(N)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, N - 1)
        centers[k] = Z[idx]
        closest = np.minimum(closest, _sq_dists(Z, centers[k:k + 1])[:, 0])
    return centers


def _reseed_empty(Z, labels, centers, d2):
    """Move the point farthest from its own center into each empty cluster."""
    C = centers.shape[0]
    counts = np.bincount(labels, minlength=C)
    if counts.min() > 0:
        return labels, centers
    labels = labels.copy()
    centers = centers.copy()
    own = d2[np.arange(len(labels)), labels].copy()
    for k in np.flatnonzero(counts == 0):
        donors = counts[labels] > 1
        if not donors.any():
            break
        i = int(np.argmax(np.where(donors, own, -1.0)))
        counts[labels[i]] -= 1
        labels[i] = k
        counts[k] = 1
        own[i] = -1.0
        centers[k] = Z[i]
    return labels, centers


def _lloyd(Z, centers, max_iter, tol_abs):
    C = centers.shape[0]
    for _ in range(max_iter):
        d2 = _sq_dists(Z, centers)
        labels = np.argmin(d2, axis=1)
        labels, centers = _reseed_empty(Z, labels, centers, d2)
        counts = np.bincount(labels, minlength=C)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, Z)
        new = sums / counts[:, None]
        shift = float(np.sum((new - centers) ** 2))
        centers = new
        if shift <= tol_abs:
            break
    d2 = _sq_dists(Z, centers)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(len(labels)), labels].sum())
    return labels, centers, inertia


def kmeans(Z, C, seed=0, restarts=1, max_iter=300, tol=1e-6, init=None, stream_key=()):
    """k-means++ seeded Lloyd iterations; best of ``restarts`` by inertia.

    Restart ``r`` draws from stream ``(KMEANS, *stream_key, r)`` of ``seed``,
    so adding restarts never changes earlier ones. ``init`` (C x d) replaces
    seeding and runs a single Lloyd pass. Convergence: total squared center
    shift <= ``tol`` times the mean per-feature variance.
    """
    Z = np.asarray(Z, dtype=np.float64)
    N = Z.shape[0]
    if C < 1 or N < C:
        raise DomainError(f"need 1 <= C <= N, got C={C}, N={N}")
    if C > 1 and np.all(Z == Z[0]):
        warnings.warn("all rows identical; returning duplicated centers", stacklevel=2)
        return ClusterResult(np.zeros(N, dtype=np.int64), np.repeat(Z[:1], C, axis=0), 0.0)
    tol_abs = tol * float(np.mean(np.var(Z, axis=0)))
    if init is not None:
        init = np.asarray(init, dtype=np.float64)
        if init.shape != (C, Z.shape[1]):
            raise ShapeMismatch(f"init centers {init.shape}, expected {(C, Z.shape[1])}")
        labels, centers, inertia = _lloyd(Z, init.copy(), max_iter, tol_abs)
        return ClusterResult(labels, centers, inertia)
    best = None
    for r in range(max(1, restarts)):
        rng = seeding.stream(seed, seeding.KMEANS, *stream_key, r)
        res = _lloyd(Z, _plusplus(Z, C, rng), max_iter, tol_abs)
        if best is None or res[2] < best[2]:
            best = res
    return ClusterResult(*best)


def view_centers(Zv, y_hat, C):
    """Per-cluster means of ``Zv`` under a hard assignment."""
    Zv = np.asarray(Zv)
    y_hat = np.asarray(y_hat, dtype=np.int64)
    if Zv.shape[0] != len(y_hat):
        raise ShapeMismatch(f"{Zv.shape[0]} rows vs {len(y_hat)} assignments")
    counts = np.bincount(y_hat, minlength=C)
    sums = np.zeros((C, Zv.shape[1]), dtype=np.float64)
    np.add.at(sums, y_hat, Zv)
    if counts.min() == 0:
        warnings.warn(f"empty cluster(s) {np.flatnonzero(counts == 0).tolist()}; reseeding",
                      stacklevel=2)
        safe = np.maximum(counts, 1)
        centers = sums / safe[:, None]
        d2 = _sq_dists(np.asarray(Zv, dtype=np.float64), centers)
        _, centers = _reseed_empty(np.asarray(Zv, dtype=np.float64), y_hat, centers, d2)
        return centers
    return sums / counts[:, None]


def student_t_kernel(Z, centers):
    """Unnormalized kernel ``(1 + ||z_i - c_j||^2)^-1`` and the squared distances."""
    if Z.shape[1] != centers.shape[1]:
        raise ShapeMismatch(f"representation dim {Z.shape[1]} vs centers {centers.shape[1]}")
    diff = Z[:, None, :] - centers[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    return 1.0 / (1.0 + d2), diff


def soft_assignment(Zv, centers):
    """Student-t soft assignment Q (rows sum to one)."""
    if len(centers) == 0:
        raise ShapeMismatch("no centers")
    w, _ = student_t_kernel(np.asarray(Zv, dtype=np.float64), np.asarray(centers, dtype=np.float64))
    return w / w.sum(axis=1, keepdims=True)


def target_distribution(Q):
    """Sharpened target ``p_ij ~ q_ij^2 / f_j`` with ``f_j = sum_i q_ij``."""
    Q = np.maximum(np.asarray(Q, dtype=np.float64), FLOOR)
    w = Q * Q / Q.sum(axis=0, keepdims=True)
    return w / w.sum(axis=1, keepdims=True)


def kl_divergence(P, Q):
    """``KL(P || Q)`` summed over clusters, averaged over rows."""
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    Pf = np.maximum(P, FLOOR)
    terms = np.where(P > 0, P * (np.log(Pf) - np.log(np.maximum(Q, FLOOR))), 0.0)
    return float(terms.sum() / P.shape[0])


def clu_loss(per_view, concat, V_count):
    """``KL(P||Q)`` of the concatenation plus the view-average of per-view KLs."""
    return kl_divergence(*concat) + sum(kl_divergence(P, Q) for P, Q in per_view) / V_count


def kl_grad(Z, centers, P):
    """``d KL(P || Q(Z)) / d Z`` with fixed centers and fixed target ``P``."""
    w, diff = student_t_kernel(Z, centers)
    Q = w / w.sum(axis=1, keepdims=True)
    coef = (P - Q) * w
    return 2.0 * np.einsum("ij,ijk->ik", coef, diff) / Z.shape[0]
