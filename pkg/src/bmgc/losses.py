"""Reconstruction, contrastive alignment and feature-Gram alignment objectives.

Each loss optionally returns its gradient with respect to its matrix inputs;
chaining into network parameters happens in the trainer.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeMismatch
from .metrics import gram_discrepancy

EPS = 1e-12


@dataclass(frozen=True)
class LossBreakdown:
    rec: float = 0.0
    adv: float = 0.0
    anf: float = 0.0
    clu: float = 0.0

    @property
    def cal(self):
        return self.adv + self.anf

    @property
    def total(self):
        return assemble_total(self)

    def as_dict(self):
        return {"rec": self.rec, "adv": self.adv, "anf": self.anf, "clu": self.clu,
                "total": self.total}


def assemble_total(parts):
    return parts.rec + (parts.adv + parts.anf) + parts.clu


def recon_cosine_loss(Xv, Xhat, V_count, return_grad=False):
    """``sum_i (1 - cos(X_i, Xhat_i)) / (N V)`` for one view.

    Rows with (near) zero norm contribute cosine 0 and no gradient.
    """
    if Xv.shape != Xhat.shape:
        raise ShapeMismatch(f"{Xv.shape} vs {Xhat.shape}")
    N = Xv.shape[0]
    nx = np.sqrt(np.einsum("ij,ij->i", Xv, Xv))
    ny = np.sqrt(np.einsum("ij,ij->i", Xhat, Xhat))
    dot = np.einsum("ij,ij->i", Xv, Xhat)
    denom = np.maximum(nx * ny, EPS)
    cos = dot / denom
    loss = float(np.sum(1.0 - cos)) / (N * V_count)
    if not return_grad:
        return loss
    live = (nx > EPS) & (ny > EPS)
    s = -1.0 / (N * V_count)
    a = np.where(live, s / denom, 0.0).astype(Xhat.dtype)
    b = np.where(live, -s * cos / np.where(live, ny, 1.0) ** 2, 0.0).astype(Xhat.dtype)
    grad = Xv * a[:, None]
    grad += Xhat * b[:, None]
    return loss, grad.astype(Xhat.dtype, copy=False)


def _normalize_rows(Z):
    n = np.maximum(np.linalg.norm(Z, axis=1, keepdims=True), EPS)
    return Z / n, n


def _normalize_backward(dA, A, n):
    return (dA - A * np.sum(A * dA, axis=1, keepdims=True)) / n


def _logsumexp(S, axis):
    m = S.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(S - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def _softmax(S, axis):
    e = np.exp(S - S.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def contrastive_pair_loss(Zt_v, Zt_star, i, tau):
    """InfoNCE term for node ``i``: view-``v`` anchor, dominant-view candidates.

    The denominator runs over every row of ``Zt_star`` including ``i``.
    """
    if tau <= 0:
        raise DomainError(f"tau must be positive, got {tau}")
    if Zt_v.shape != Zt_star.shape:
        raise ShapeMismatch(f"{Zt_v.shape} vs {Zt_star.shape}")
    A, _ = _normalize_rows(Zt_v)
    B, _ = _normalize_rows(Zt_star)
    s = (B @ A[i]) / tau
    return float(_logsumexp(s[None, :], 1)[0] - s[i])


def _pair_terms(Zv, Zs, tau, return_grad):
    """Both directions of the contrastive loss summed over nodes.

    With ``G = (softmax_rows(S) + softmax_cols(S) - 2I) / tau`` the gradients
    ``G B`` and ``G^T A`` are formed from ``E = exp(S)`` with skinny products,
    so no second N x N matrix is allocated.
    """
    A, na = _normalize_rows(Zv)
    B, nb = _normalize_rows(Zs)
    S = (A / tau) @ B.T
    diag = np.einsum("ij,ij->i", A, B) / tau
    if 1.0 / tau > 30.0:
        # sharp temperatures: shifted softmaxes
        total = float(np.sum(_logsumexp(S, 1) - diag) + np.sum(_logsumexp(S, 0) - diag))
        if not return_grad:
            return total, None, None
        G = _softmax(S, 1) + _softmax(S, 0)
        G[np.diag_indices_from(G)] -= 2.0
        G /= tau
        dA, dB = G @ B, G.T @ A
    else:
        # |S| <= 1/tau, so exp cannot overflow here
        E = np.exp(S, out=S)
        rs = E.sum(axis=1)
        cs = E.sum(axis=0)
        total = float(np.sum(np.log(rs) - diag) + np.sum(np.log(cs) - diag))
        if not return_grad:
            return total, None, None
        d = B.shape[1]
        EB = E @ np.hstack([B, B / cs[:, None]])
        EtA = E.T @ np.hstack([A / rs[:, None], A])
        dA = (EB[:, :d] / rs[:, None] + EB[:, d:] - 2.0 * B) / tau
        dB = (EtA[:, :d] + EtA[:, d:] / cs[:, None] - 2.0 * A) / tau
    return total, _normalize_backward(dA, A, na), _normalize_backward(dB, B, nb)


def adv_loss(projected, v_star, tau, return_grad=False):
    """Symmetric contrastive alignment of every view with the dominant view."""
    if tau <= 0:
        raise DomainError(f"tau must be positive, got {tau}")
    V = len(projected)
    grads = [np.zeros_like(z) for z in projected]
    if V < 2:
        warnings.warn("alignment loss needs at least two views; returning 0", stacklevel=2)
        return (0.0, grads) if return_grad else 0.0
    N = projected[0].shape[0]
    scale = 1.0 / (2 * N * (V - 1))
    total = 0.0
    for v in range(V):
        if v == v_star:
            continue
        t, gv, gs = _pair_terms(projected[v], projected[v_star], tau, return_grad)
        total += t
        if return_grad:
            grads[v] += scale * gv
            grads[v_star] += scale * gs
    loss = total * scale
    return (loss, grads) if return_grad else loss


def anf_grad(X, Z_views):
    """Gradient of the feature-Gram alignment loss with respect to each ``Z^v``."""
    N = X.shape[0]
    scale = 1.0 / (N * N * len(Z_views))
    out = []
    for Z in Z_views:
        XtZ = (Z.T @ X).T.astype(Z.dtype, copy=False)
        g = X @ XtZ
        g -= Z @ (Z.T @ Z)
        g *= -4.0 * scale
        out.append(g.astype(Z.dtype, copy=False))
    return out


def anf_loss(X, Z_views, return_grad=False, xtx=None, discrepancies=None):
    """``sum_v ||X X^T - Z^v Z^v^T||_F^2 / (N^2 V)`` via small Gram matrices.

    ``xtx`` may carry a precomputed ``X^T X``; ``discrepancies`` may carry the
    per-view Gram discrepancies when the caller already has them.
    """
    N = X.shape[0]
    V = len(Z_views)
    for Z in Z_views:
        if Z.shape[0] != N:
            raise ShapeMismatch(f"representation has {Z.shape[0]} rows, features {N}")
    if discrepancies is None:
        X64 = np.asarray(X, dtype=np.float64)
        if xtx is None:
            xtx = X64.T @ X64
        discrepancies = [gram_discrepancy(X64, Z, xtx=xtx) for Z in Z_views]
    loss = float(sum(discrepancies)) / (N * N * V)
    return (loss, anf_grad(X, Z_views)) if return_grad else loss
