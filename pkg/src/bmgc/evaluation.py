"""External clustering metrics: ACC and macro-F1 under the Hungarian mapping, NMI, ARI."""

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.metrics import adjusted_rand_score, f1_score, normalized_mutual_info_score

from .errors import LengthMismatch, SingleClassTruth


@dataclass(frozen=True)
class EvalReport:
    nmi: float
    ari: float
    acc: float
    f1: float

    def to_dict(self):
        return asdict(self)


def contingency(pred, truth):
    """Cluster x class count matrix."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    _, p = np.unique(pred, return_inverse=True)
    M = np.zeros((p.max() + 1, truth.max() + 1), dtype=np.int64)
    np.add.at(M, (p, truth), 1)
    return M


def best_mapping(pred, truth):
    """Optimal one-to-one cluster -> class map (clusters left unmatched map to -1)."""
    pred = np.asarray(pred, dtype=np.int64)
    ids = np.unique(pred)
    M = contingency(pred, truth)
    rows, cols = linear_sum_assignment(-M)
    mapping = {int(ids[r]): int(c) for r, c in zip(rows, cols)}
    return np.array([mapping.get(int(k), -1) for k in pred], dtype=np.int64)


def evaluate(pred, truth):
    pred = np.asarray(pred, dtype=np.int64).ravel()
    truth = np.asarray(truth, dtype=np.int64).ravel()
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(truth)} labels")
    classes = np.unique(truth)
    if len(classes) < 2:
        raise SingleClassTruth("NMI is undefined for single-class ground truth")
    mapped = best_mapping(pred, truth)
    return EvalReport(
        nmi=float(normalized_mutual_info_score(truth, pred, average_method="arithmetic")),
        ari=float(adjusted_rand_score(truth, pred)),
        acc=float(np.mean(mapped == truth)),
        f1=float(f1_score(truth, mapped, labels=classes, average="macro", zero_division=0)),
    )
