"""View-quality metrics: edge homophily, aggregation class distance (ACD),
feature-Gram discrepancy, dominant-view mining and a linear probe."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import seeding
from .errors import EmptyClass, EmptyGraph, ShapeMismatch, SingleClass

_EPS64 = np.finfo(np.float64).eps


def edge_homophily(adj, y):
    """Fraction of undirected edges whose endpoints share a label."""
    r, c, _ = adj.edges()
    off = r != c
    r, c = r[off], c[off]
    if len(r) == 0:
        raise EmptyGraph("homophily of a graph without edges is undefined")
    y = np.asarray(y)
    return float(np.mean(y[r] == y[c]))


def class_centroids(Xv, y, num_classes=None):
    y = np.asarray(y, dtype=np.int64)
    C = int(y.max()) + 1 if num_classes is None else num_classes
    if Xv.shape[0] != len(y):
        raise ShapeMismatch(f"{Xv.shape[0]} rows vs {len(y)} labels")
    counts = np.bincount(y, minlength=C)
    if counts.min() == 0:
        raise EmptyClass(f"class(es) {np.flatnonzero(counts == 0).tolist()} have no nodes")
    sums = np.zeros((C, Xv.shape[1]))
    np.add.at(sums, y, Xv)
    return sums / counts[:, None]


def acd(Xv, y, num_classes=None):
    """Mean pairwise Euclidean distance between class centroids."""
    cent = class_centroids(Xv, y, num_classes)
    C = cent.shape[0]
    if C < 2:
        raise SingleClass("ACD needs at least two classes")
    total = 0.0
    for m in range(C):
        for n in range(m + 1, C):
            total += float(np.linalg.norm(cent[m] - cent[n]))
    return 2.0 * total / (C * C - C)


def _sq_sum_sym(P):
    # row-major and column-major sums averaged: swapping the operands
    # transposes P, so the result is exactly symmetric in them
    return 0.5 * (float(np.sum(np.ascontiguousarray(P) ** 2))
                  + float(np.sum(np.ascontiguousarray(P.T) ** 2)))


def gram_discrepancy(X, Z, xtx=None):
    """``||X X^T - Z Z^T||_F^2`` without forming N x N matrices.

    Uses ``||X^T X||^2 + ||Z^T Z||^2 - 2 ||X^T Z||^2`` in float64. Results
    inside the rounding band of the two Gram norms are reported as 0.
    """
    if X.shape[0] != Z.shape[0]:
        raise ShapeMismatch(f"row counts differ: {X.shape[0]} vs {Z.shape[0]}")
    X = np.asarray(X, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    a = _sq_sum_sym(X.T @ X if xtx is None else xtx)
    b = _sq_sum_sym(Z.T @ Z)
    c = _sq_sum_sym((Z.T @ X).T)
    out = (a + b) - 2.0 * c
    if out <= 64 * _EPS64 * (a + b):
        return 0.0
    return out


def mine_dominant_view(X, candidates, xtx=None):
    """Index of the candidate whose Gram matrix is closest to ``X``'s (lowest index on ties)."""
    if not candidates:
        raise ValueError("need at least one candidate")
    if xtx is None:
        X64 = np.asarray(X, dtype=np.float64)
        xtx = X64.T @ X64
    scores = [gram_discrepancy(X, Z, xtx=xtx) for Z in candidates]
    return int(np.argmin(scores))


def linear_probe(Xv, y, train_fraction=0.3, seed=0, epochs=200, lr=1e-2):
    """Test accuracy of a softmax-regression classifier on a random split."""
    from .nn import adam_init, adam_step

    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    y = np.asarray(y, dtype=np.int64)
    C = int(y.max()) + 1
    N = len(y)
    rng = seeding.stream(seed, seeding.PROBE)
    perm = rng.permutation(N)
    n_train = int(round(train_fraction * N))
    tr, te = perm[:n_train], perm[n_train:]
    if np.bincount(y[tr], minlength=C).min() == 0:
        raise EmptyClass("a class is missing from the training split")
    X = np.asarray(Xv, dtype=np.float64)
    W = np.zeros((X.shape[1], C))
    b = np.zeros(C)
    state = adam_init([W, b], lr=lr, weight_decay=0.0)
    Xtr, onehot = X[tr], np.eye(C)[y[tr]]
    for _ in range(epochs):
        logits = Xtr @ W + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / len(tr)
        adam_step([W, b], [Xtr.T @ g, g.sum(axis=0)], state)
    pred = np.argmax(X[te] @ W + b, axis=1)
    return float(np.mean(pred == y[te]))


@dataclass
class ViewQualityReport:
    per_view: list = field(default_factory=list)
    dominant_view: int = 0

    def to_dict(self):
        return {"per_view": self.per_view, "dominant_view": self.dominant_view}


def view_quality_report(X, aggregates, y=None, num_classes=None, adjs=None, probe=False, seed=0):
    """Per-view ACD / homophily / Gram discrepancy and the mined dominant view.

    Label-dependent entries are omitted when ``y`` is None.
    """
    X64 = np.asarray(X, dtype=np.float64)
    xtx = X64.T @ X64
    rows = []
    for v, Xv in enumerate(aggregates):
        row = {"view": v, "gram_discrepancy": gram_discrepancy(X64, Xv, xtx=xtx)}
        if y is not None:
            row["acd"] = acd(Xv, y, num_classes)
            if adjs is not None:
                row["homophily"] = edge_homophily(adjs[v], y)
            if probe:
                row["probe_accuracy"] = linear_probe(Xv, y, seed=seed)
        rows.append(row)
    dominant = int(np.argmin([r["gram_discrepancy"] for r in rows]))
    return ViewQualityReport(rows, dominant)
