"""Comparisons between learned and constructed weights, Jacobian spectra and similarity scores."""
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._validation import as_matrix, as_vector, check_positive_int, column_norms, unit_columns
from .closed_form import sym_eig
from .data import Dataset
from .exceptions import ConfigurationError
from .model import DaeModel, hidden, jacobian

__all__ = [
    "MatchReport",
    "match_columns",
    "subspace_distance",
    "EndomorphismComparison",
    "endomorphism_compare",
    "JacobianReport",
    "jacobian_svd_report",
    "max_train_cosine",
    "assign_blocks",
]


class MatchReport(NamedTuple):
    """``assignment[j]`` is the target column matched to learned column j."""

    assignment: Dict[int, int]
    cosines: np.ndarray
    unmatched: List[Tuple[int, float]]
    unmatched_target: List[Tuple[int, float]]

    @property
    def min_cosine(self):
        return float(self.cosines.min()) if self.cosines.size else float("nan")


def match_columns(W_learned, W_target, exact=False):
    """Pair columns by absolute cosine.

    Greedy by default: repeatedly take the largest remaining |cosine|, ties
    going to the lower (learned, target) index. ``exact=True`` solves the
    assignment problem instead. Zero columns are never matched.
    """
    A = as_matrix(W_learned, "W_learned")
    B = as_matrix(W_target, "W_target", rows=A.shape[0])
    An, an = unit_columns(A)
    Bn, bn = unit_columns(B)
    la = np.flatnonzero(an > 0)
    tb = np.flatnonzero(bn > 0)
    C = np.clip(np.abs(An[:, la].T @ Bn[:, tb]), 0.0, 1.0)
    pairs = []
    if C.size:
        if exact:
            rows, cols = linear_sum_assignment(C, maximize=True)
            pairs = sorted(zip(rows.tolist(), cols.tolist()))
        else:
            work = C.copy()
            for _ in range(min(C.shape)):
                i, j = np.unravel_index(np.argmax(work), work.shape)
                pairs.append((int(i), int(j)))
                work[i, :] = -1.0
                work[:, j] = -1.0
            pairs.sort()
    assignment = {int(la[i]): int(tb[j]) for i, j in pairs}
    cos = np.array([C[i, j] for i, j in pairs])
    used_a = set(assignment)
    used_b = set(assignment.values())
    unmatched = [(j, float(an[j])) for j in range(A.shape[1]) if j not in used_a]
    unmatched_t = [(j, float(bn[j])) for j in range(B.shape[1]) if j not in used_b]
    return MatchReport(assignment, cos, unmatched, unmatched_t)


def _check_orthonormal(Q, name):
    Q = as_matrix(Q, name)
    if np.max(np.abs(Q.T @ Q - np.eye(Q.shape[1]))) > 1e-8:
        raise ConfigurationError(f"{name} does not have orthonormal columns")
    return Q


def subspace_distance(A, B):
    """``|A A^T - B B^T|_F / sqrt(2k)``, in [0, 1] for k-dimensional subspaces."""
    A = _check_orthonormal(A, "A")
    B = _check_orthonormal(B, "B")
    if A.shape != B.shape:
        raise ConfigurationError(f"A and B must have equal shapes, got {A.shape} and {B.shape}")
    diff = A @ A.T - B @ B.T
    return float(np.linalg.norm(diff) / np.sqrt(2 * A.shape[1]))


class EndomorphismComparison(NamedTuple):
    rel_frob_error: float
    eig_curve_pairs: np.ndarray  # rows: (learned, target), descending


def endomorphism_compare(A_learned, A_target):
    """Relative Frobenius error and paired descending eigenvalues (of the symmetric parts)."""
    A = as_matrix(A_learned, "A_learned")
    T = as_matrix(A_target, "A_target")
    if A.shape != T.shape or A.shape[0] != A.shape[1]:
        raise ConfigurationError(f"need equal square matrices, got {A.shape} and {T.shape}")
    ref = np.linalg.norm(T)
    err = np.linalg.norm(A - T)
    rel = float(err / ref) if ref > 0 else float(err)
    la, _ = sym_eig(A)
    lt, _ = sym_eig(T)
    return EndomorphismComparison(rel, np.stack([la, lt], axis=1))


class JacobianReport(NamedTuple):
    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray
    cos_top_to_x: float
    cos_top_to_mean: float
    on_boundary: bool

    @property
    def rank_ratio(self):
        s = self.singular_values
        return float(s[1] / s[0]) if s.size > 1 and s[0] > 0 else 0.0


def _abs_cos(u, v):
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(abs(u @ v) / (nu * nv))


def jacobian_svd_report(m: DaeModel, x, k, cluster_mean=None):
    """Top-k SVD of the Jacobian at x with |cosine| of the top left vector to x and the mean."""
    x = as_vector(x, "x", size=m.d)
    k = check_positive_int(k, "k")
    if k > m.d:
        raise ConfigurationError(f"k={k} exceeds d={m.d}")
    J, boundary = jacobian(m, x, return_boundary=True)
    U, s, Vt = np.linalg.svd(J)
    top = U[:, 0]
    cos_mean = float("nan") if cluster_mean is None else _abs_cos(top, as_vector(cluster_mean, "cluster_mean", m.d))
    return JacobianReport(s[:k], U[:, :k], Vt[:k].T, _abs_cos(top, x), cos_mean, boundary)


def max_train_cosine(samples, data):
    """Largest cosine of each sample to any training column, and that column's index."""
    X = data.X if isinstance(data, Dataset) else as_matrix(data, "X")
    S = as_matrix(samples, "samples", rows=X.shape[0])
    Sn, _ = unit_columns(S)
    Xn, _ = unit_columns(X)
    C = Sn.T @ Xn
    idx = np.argmax(C, axis=1)
    return C[np.arange(C.shape[0]), idx], idx


def assign_blocks(m: DaeModel, data: Dataset, min_active=0.5):
    """Attribute each hidden unit to the cluster on which it is most often active.

    Units whose best activity rate is below ``min_active`` are left out.
    Returns ``{label: column indices}`` with every label present.
    """
    active = hidden(m, data.X) > 0
    rates = np.stack([active[:, data.cluster_ids == k].mean(axis=1) for k in range(1, data.M + 1)], axis=1)
    best = np.argmax(rates, axis=1)
    ok = rates[np.arange(m.p), best] >= min_active
    return {k: np.flatnonzero(ok & (best == k - 1)) for k in range(1, data.M + 1)}
