"""Graph containers, symmetric normalization and the dataset directory format.

A dataset directory holds::

    manifest.json   {"n": int, "views": [edge files], "features": file,
                     "labels": file | null, "classes": int | null}
    <view>.tsv      one "u<TAB>v" pair per line (optional third weight column),
                    0-based ids, each undirected edge once, "#" comments
    features.bin    b"BMGF", u32 N, u32 d_f, N*d_f float32 little-endian
    labels.txt      one integer per line
"""

import json
import logging
import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import FormatError, IsolatedNode, LabelRangeError, ShapeMismatch

log = logging.getLogger(__name__)

FEATURE_MAGIC = b"BMGF"
_THREADS = 1


def set_num_threads(n):
    """Cap the column-block parallelism of sparse x dense products."""
    global _THREADS
    _THREADS = max(1, int(n))


def get_num_threads():
    return _THREADS


class SparseAdjacency:
    """Symmetric, nonnegative sparse matrix over ``n`` nodes (CSR storage)."""

    def __init__(self, matrix):
        m = sp.csr_matrix(matrix, dtype=np.float64)
        if m.shape[0] != m.shape[1]:
            raise ShapeMismatch(f"adjacency must be square, got {m.shape}")
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        if m.nnz and (not np.all(np.isfinite(m.data)) or m.data.min() < 0):
            raise FormatError("adjacency weights must be finite and >= 0")
        if (abs(m - m.T) > 1e-12 * max(1.0, abs(m).max() if m.nnz else 1.0)).nnz:
            raise FormatError("adjacency is not symmetric")
        for arr in (m.data, m.indices, m.indptr):
            arr.flags.writeable = False
        self._m = m

    @classmethod
    def from_edges(cls, n, rows, cols, weights=None):
        """Build from undirected edges listed once each.

        Repeated pairs (in either orientation) are dropped with a warning;
        the first occurrence wins.
        """
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        if rows.shape != cols.shape:
            raise ShapeMismatch("rows and cols differ in length")
        w = np.ones(len(rows)) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
        if w.shape != rows.shape:
            raise ShapeMismatch("weights and edges differ in length")
        if len(rows) and (rows.min() < 0 or cols.min() < 0 or max(rows.max(), cols.max()) >= n):
            raise FormatError(f"edge endpoint outside [0, {n})")
        if len(w) and (not np.all(np.isfinite(w)) or w.min() < 0):
            raise FormatError("edge weights must be finite and >= 0")
        lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
        key = lo * n + hi
        _, first = np.unique(key, return_index=True)
        if len(first) < len(key):
            warnings.warn(f"dropped {len(key) - len(first)} duplicate edges", stacklevel=2)
            first.sort()
            lo, hi, w = lo[first], hi[first], w[first]
        off = lo != hi
        r = np.concatenate([lo, hi[off]])
        c = np.concatenate([hi, lo[off]])
        v = np.concatenate([w, w[off]])
        return cls(sp.csr_matrix((v, (r, c)), shape=(n, n)))

    @property
    def n(self):
        return self._m.shape[0]

    @property
    def nnz(self):
        return self._m.nnz

    @property
    def csr(self):
        return self._m

    @property
    def num_edges(self):
        """Undirected edge count; a self-loop counts once."""
        diag = int(np.count_nonzero(self._m.diagonal()))
        return (self._m.nnz - diag) // 2 + diag

    @property
    def has_self_loops(self):
        return bool(np.any(self._m.diagonal() != 0))

    def degrees(self):
        return np.asarray(self._m.sum(axis=1)).ravel()

    def row(self, i):
        """Column indices and weights of row ``i``."""
        a, b = self._m.indptr[i], self._m.indptr[i + 1]
        return self._m.indices[a:b], self._m.data[a:b]

    def edges(self):
        """Upper-triangle edge list ``(u, v, w)`` with ``u <= v``, sorted."""
        upper = sp.triu(self._m, format="coo")
        order = np.lexsort((upper.col, upper.row))
        return upper.row[order], upper.col[order], upper.data[order]

    def to_dense(self):
        return self._m.toarray()

    def matmul(self, X):
        """Sparse x dense product.

        Columns are split into contiguous blocks when more than one thread is
        allowed; each output entry is accumulated in the same order either
        way, so results are bitwise identical for any thread count.
        """
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[0] != self.n:
            raise ShapeMismatch(f"cannot multiply {self.n}x{self.n} adjacency by {X.shape}")
        threads = get_num_threads()
        d = X.shape[1]
        if threads == 1 or d < 2 * threads:
            return np.asarray(self._m @ X)
        out = np.empty((self.n, d), dtype=np.result_type(X.dtype, np.float64))
        bounds = np.linspace(0, d, threads + 1).astype(int)

        def work(k):
            a, b = bounds[k], bounds[k + 1]
            out[:, a:b] = self._m @ np.ascontiguousarray(X[:, a:b])

        with ThreadPoolExecutor(threads) as ex:
            list(ex.map(work, range(threads)))
        return out

    def __eq__(self, other):
        if not isinstance(other, SparseAdjacency):
            return NotImplemented
        return other.n == self.n and (self._m != other._m).nnz == 0

    __hash__ = None

    def __repr__(self):
        return f"SparseAdjacency(n={self.n}, edges={self.num_edges})"


def normalize_adjacency(adj, self_loops, isolated="raise"):
    """Symmetric degree normalization.

    Without self-loops: ``D^-1/2 A D^-1/2``. With self-loops the diagonal is
    set to one (existing loops are merged, not doubled) before normalizing,
    giving ``(D+I)^-1/2 (A+I) (D+I)^-1/2`` for loop-free input.

    ``isolated`` controls zero-degree nodes in the loop-free variant:
    ``"raise"`` signals :class:`IsolatedNode`, ``"zero"`` leaves their rows
    and columns empty.
    """
    m = adj.csr.tolil(copy=True)
    if self_loops:
        m.setdiag(1.0)
    elif adj.has_self_loops:
        raise FormatError("self-loops are not allowed for the loop-free normalization")
    m = m.tocsr()
    deg = np.asarray(m.sum(axis=1)).ravel()
    zero = deg == 0
    if zero.any() and not self_loops:
        if isolated == "raise":
            raise IsolatedNode(f"{int(zero.sum())} node(s) have degree 0; "
                               "use the self-loop variant or isolated='zero'")
        if isolated != "zero":
            raise ValueError(f"unknown isolated policy {isolated!r}")
    inv = np.zeros_like(deg)
    inv[~zero] = 1.0 / np.sqrt(deg[~zero])
    d = sp.diags(inv)
    return SparseAdjacency(d @ m @ d)


@dataclass(frozen=True, eq=False)
class MultiRelationalGraph:
    """Several views over one node set, shared features, optional labels."""

    views: tuple
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    num_classes: Optional[int] = None

    def __post_init__(self):
        views = tuple(self.views)
        if not views:
            raise ShapeMismatch("a graph needs at least one view")
        X = np.array(self.features, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 1:
            raise ShapeMismatch(f"features must be N x d_f with N >= 2, d_f >= 1; got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise FormatError("features contain non-finite values")
        n = X.shape[0]
        for v, a in enumerate(views):
            if a.n != n:
                raise ShapeMismatch(f"view {v} has {a.n} nodes, features have {n}")
        X.flags.writeable = False
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "features", X)
        if self.labels is not None:
            y = np.array(self.labels, dtype=np.int64).ravel()
            if y.shape[0] != n:
                raise ShapeMismatch(f"{y.shape[0]} labels for {n} nodes")
            c = self.num_classes if self.num_classes is not None else int(y.max()) + 1
            if y.min() < 0 or y.max() >= c:
                raise LabelRangeError(f"labels must lie in [0, {c})")
            if np.bincount(y, minlength=c).min() == 0:
                raise LabelRangeError("every class in [0, C) needs at least one node")
            y.flags.writeable = False
            object.__setattr__(self, "labels", y)
            object.__setattr__(self, "num_classes", int(c))
        elif self.num_classes is not None:
            object.__setattr__(self, "num_classes", int(self.num_classes))

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def num_views(self):
        return len(self.views)

    def same_as(self, other):
        """Structural equality on the data model."""
        if self.n != other.n or self.num_views != other.num_views:
            return False
        if not np.array_equal(self.features, other.features):
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        if self.labels is not None and (
            not np.array_equal(self.labels, other.labels) or self.num_classes != other.num_classes
        ):
            return False
        return all(a == b for a, b in zip(self.views, other.views))


def write_features(X, path):
    X = np.asarray(X, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", X.shape[0], X.shape[1]))
        fh.write(np.ascontiguousarray(X).tobytes())


def read_features(path):
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != FEATURE_MAGIC:
        raise FormatError(f"{path}: missing BMGF header")
    n, d = struct.unpack("<II", raw[4:12])
    if len(raw) != 12 + 4 * n * d:
        raise FormatError(f"{path}: expected {n}x{d} float32 payload, got {len(raw) - 12} bytes")
    X = np.frombuffer(raw, dtype="<f4", offset=12).reshape(n, d).astype(np.float64)
    if not np.all(np.isfinite(X)):
        raise FormatError(f"{path}: non-finite feature values")
    return X


def _read_edges(path, n):
    rows, cols, ws = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split("\t")
            if len(parts) not in (2, 3):
                raise FormatError(f"{path}:{lineno}: expected 'u<TAB>v', got {s!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if not (0 <= u < n and 0 <= v < n):
                raise FormatError(f"{path}:{lineno}: node id outside [0, {n})")
            if not math.isfinite(w) or w < 0:
                raise FormatError(f"{path}:{lineno}: bad weight {w}")
            rows.append(u)
            cols.append(v)
            ws.append(w)
    return SparseAdjacency.from_edges(n, rows, cols, ws)


def load_dataset(path):
    """Read and validate a dataset directory."""
    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.is_file():
        raise FormatError(f"{path}: manifest.json not found")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{mpath}: {exc}") from None
    if not isinstance(manifest, dict):
        raise FormatError(f"{mpath}: expected a JSON object")
    for key in ("n", "views", "features", "labels", "classes"):
        if key not in manifest:
            raise FormatError(f"{mpath}: missing key {key!r}")
    n = manifest["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 2:
        raise FormatError(f"{mpath}: 'n' must be an integer >= 2")
    if not isinstance(manifest["views"], list) or not manifest["views"]:
        raise FormatError(f"{mpath}: 'views' must be a non-empty list")
    try:
        views = [_read_edges(path / name, n) for name in manifest["views"]]
        X = read_features(path / manifest["features"])
    except FileNotFoundError as exc:
        raise FormatError(str(exc)) from None
    if X.shape[0] != n:
        raise ShapeMismatch(f"features have {X.shape[0]} rows, manifest says n={n}")
    labels, classes = None, manifest["classes"]
    if manifest["labels"] is not None:
        try:
            text = (path / manifest["labels"]).read_text(encoding="utf-8").split()
            labels = np.array([int(t) for t in text], dtype=np.int64)
        except FileNotFoundError as exc:
            raise FormatError(str(exc)) from None
        except ValueError as exc:
            raise FormatError(f"labels: {exc}") from None
        if len(labels) != n:
            raise ShapeMismatch(f"{len(labels)} labels for n={n}")
    return MultiRelationalGraph(tuple(views), X, labels, classes)


def write_dataset(g, path):
    """Write ``g`` in the dataset directory format (byte-stable)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    names = [f"view{v}.tsv" for v in range(g.num_views)]
    for name, adj in zip(names, g.views):
        u, v, w = adj.edges()
        with open(path / name, "w", encoding="utf-8", newline="\n") as fh:
            for a, b, c in zip(u.tolist(), v.tolist(), w.tolist()):
                fh.write(f"{a}\t{b}\n" if c == 1.0 else f"{a}\t{b}\t{c!r}\n")
    write_features(g.features, path / "features.bin")
    if g.labels is not None:
        (path / "labels.txt").write_text("".join(f"{int(t)}\n" for t in g.labels), encoding="utf-8")
    manifest = {
        "n": g.n,
        "views": names,
        "features": "features.bin",
        "labels": "labels.txt" if g.labels is not None else None,
        "classes": g.num_classes if g.labels is not None else None,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")
