"""Closed-form minimizers of the regularized (linear and block ReLU) DAE objectives.

Everything here works with column-stacked data. Gram eigenvalues are those
of ``X_k X_k^T`` (not divided by n_k); population quantities use the second
moment ``S_k = mu_k mu_k^T + Sigma_k``.
"""
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from ._validation import as_matrix, check_nonnegative, check_positive_int, column_norms
from .data import Dataset, MoGSpec, check_separability
from .exceptions import AssumptionViolation, ConfigurationError, DomainError
from .model import DaeModel

__all__ = [
    "sym_eig",
    "lae_objective",
    "lae_minimizer",
    "Block",
    "BlockSolution",
    "align_rotation",
    "construct_theorem_solution",
    "construct_memorization_solution",
    "construct_hybrid_solution",
    "wiener_limit",
    "memorization_loss_value",
    "LossBound",
    "generalization_loss_bound",
    "linf_landscape_norm",
]


def _fix_signs(U):
    """Flip columns so the largest-magnitude entry of each is positive."""
    if U.size == 0:
        return U
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def sym_eig(S):
    """Eigenpairs of a symmetric matrix, eigenvalues descending, signs fixed."""
    S = as_matrix(S, "S")
    if S.shape[0] != S.shape[1]:
        raise ConfigurationError(f"S must be square, got {S.shape}")
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    # stable sort keeps the index order among tied eigenvalues
    order = np.argsort(-vals, kind="stable")
    return vals[order], _fix_signs(vecs[:, order])


def _top_gram(Xk, p_k):
    """Top-p_k left singular vectors of X_k and the Gram eigenvalues s^2."""
    U, s, _ = np.linalg.svd(Xk, full_matrices=False)
    if p_k > s.size:
        raise AssumptionViolation(f"p_k={p_k} exceeds the number of available directions {s.size}")
    return _fix_signs(U[:, :p_k]), s[:p_k] ** 2


def lae_objective(W1, W2, Xk, noise_weight, lambda_prime):
    """``|W2 W1^T X - X|^2 + noise_weight |W2 W1^T|^2 + lambda' (|W1|^2 + |W2|^2)``."""
    A = W2 @ W1.T
    R = A @ Xk - Xk
    return float(
        np.sum(R * R) + noise_weight * np.sum(A * A)
        + lambda_prime * (np.sum(W1 * W1) + np.sum(W2 * W2))
    )


def _shrinkage_scaling(eigvals, noise_weight, lambda_prime):
    """Per-direction column scaling; its square is the shrinkage factor."""
    return np.sqrt((eigvals - lambda_prime) / (eigvals + noise_weight))


def _check_eigs(eigvals, lambda_prime, where=""):
    tol = max(float(eigvals[0]) if eigvals.size else 0.0, 1.0) * 1e-12
    bad = np.flatnonzero(~(eigvals > max(lambda_prime, tol)))
    if bad.size:
        j = int(bad[0])
        raise AssumptionViolation(
            f"{where}eigenvalue {j + 1} = {eigvals[j]:.6g} does not exceed the regularization "
            f"threshold {lambda_prime:.6g}; reduce the block width or the weight decay"
        )


def lae_minimizer(Xk, p_k, noise_weight, lambda_prime, rotation=None):
    """Global minimizer of the regularized linear-autoencoder objective (tied form).

    Returns ``W = U diag(s) O^T`` with ``s_j^2 = (l_j - lambda') / (l_j + noise_weight)``,
    where ``l_j`` are the top Gram eigenvalues and ``U`` their eigenvectors.
    ``W2 = W1 = W`` attains the minimum of :func:`lae_objective`.
    """
    Xk = as_matrix(Xk, "Xk")
    p_k = check_positive_int(p_k, "p_k")
    noise_weight = check_nonnegative(noise_weight, "noise_weight")
    lambda_prime = check_nonnegative(lambda_prime, "lambda_prime")
    U, eigvals = _top_gram(Xk, p_k)
    _check_eigs(eigvals, lambda_prime)
    W = U * _shrinkage_scaling(eigvals, noise_weight, lambda_prime)
    if rotation is not None:
        O = np.asarray(rotation, dtype=np.float64)
        if O.shape != (p_k, p_k) or np.max(np.abs(O.T @ O - np.eye(p_k))) > 1e-10:
            raise ConfigurationError(f"rotation must be a {p_k}x{p_k} orthogonal matrix")
        W = W @ O.T
    return W


def align_rotation(v):
    """Orthogonal O (a Householder reflection) with ``O^T v = |v|/sqrt(p) * ones``."""
    v = np.asarray(v, dtype=np.float64)
    p = v.size
    norm = np.linalg.norm(v)
    if norm == 0:
        return np.eye(p)
    target = np.full(p, 1.0 / np.sqrt(p))
    u = v / norm - target
    un = np.linalg.norm(u)
    if un < 1e-15:
        return np.eye(p)
    u /= un
    return np.eye(p) - 2.0 * np.outer(u, u)


@dataclass(frozen=True)
class Block:
    U: np.ndarray
    eigvals: np.ndarray
    scaling: np.ndarray
    rotation: np.ndarray
    label: int

    @property
    def W(self):
        return (self.U * self.scaling) @ self.rotation.T

    @property
    def shrinkage(self):
        return self.scaling**2

    def endomorphism(self):
        return (self.U * self.shrinkage) @ self.U.T


@dataclass(frozen=True)
class BlockSolution:
    blocks: List[Block]
    assembled_W: np.ndarray
    p_alloc: np.ndarray
    sigma: float
    lam: float

    def to_model(self):
        return DaeModel(self.assembled_W, sigma_train=self.sigma)

    def block_columns(self):
        """``{label: column indices}`` for mask-frozen evaluation."""
        starts = np.concatenate([[0], np.cumsum(self.p_alloc)])
        return {b.label: np.arange(starts[i], starts[i + 1]) for i, b in enumerate(self.blocks)}

    def block_W(self, label):
        cols = self.block_columns()[label]
        return self.assembled_W[:, cols]

    def sidecar(self):
        """JSON-ready block summary."""
        return {
            "p_alloc": [int(p) for p in self.p_alloc],
            "sigma": self.sigma,
            "lambda": self.lam,
            "blocks": [
                {"label": b.label, "eigvals": b.eigvals.tolist(), "shrinkage": b.shrinkage.tolist()}
                for b in self.blocks
            ],
        }


def construct_theorem_solution(data: Dataset, p_alloc, sigma, lam, rotation="align", require_separable=True):
    """Block-wise ReLU DAE minimizer: one regularized LAE block per cluster.

    Block k solves the LAE problem on cluster k with noise weight
    ``n_k sigma^2`` and regularization ``n lambda``. With ``rotation="align"``
    each block is rotated so its pre-activations at the cluster mean are
    equal and positive; ``"identity"`` leaves ``O_k = I``.
    """
    sigma = check_nonnegative(sigma, "sigma")
    lam = check_nonnegative(lam, "lambda")
    p_alloc = np.array([check_positive_int(int(p), "p_k") for p in np.atleast_1d(p_alloc)])
    if p_alloc.size != data.M:
        raise ConfigurationError(f"p_alloc has {p_alloc.size} entries for {data.M} clusters")
    if rotation not in ("align", "identity"):
        raise ConfigurationError(f"rotation must be 'align' or 'identity', got {rotation!r}")
    if require_separable:
        report = check_separability(data)
        if data.M > 1 and not report.is_separable:
            raise DomainError(f"clusters are not separable (beta={report.beta:.4f} >= 0)")
    lambda_prime = data.n * lam
    blocks = []
    for k in range(1, data.M + 1):
        Xk = data.cluster(k)
        p_k = int(p_alloc[k - 1])
        try:
            U, eigvals = _top_gram(Xk, p_k)
        except AssumptionViolation as exc:
            raise AssumptionViolation(f"cluster {k}: {exc}") from None
        _check_eigs(eigvals, lambda_prime, where=f"cluster {k}: ")
        scaling = _shrinkage_scaling(eigvals, Xk.shape[1] * sigma**2, lambda_prime)
        if rotation == "align":
            O = align_rotation(U.T @ Xk.mean(axis=1))
        else:
            O = np.eye(p_k)
        blocks.append(Block(U=U, eigvals=eigvals, scaling=scaling, rotation=O, label=k))
    W = np.concatenate([b.W for b in blocks], axis=1)
    return BlockSolution(blocks=blocks, assembled_W=W, p_alloc=p_alloc, sigma=sigma, lam=lam)


def construct_memorization_solution(data, p, sigma, lam, require_separable=True):
    """One scaled training sample per column, trailing columns zero.

    Column i is ``r_i x_i`` with ``r_i = sqrt((|x_i|^2 - n lam) / (|x_i|^4 + sigma^2 |x_i|^2))``.
    ``data`` may be a Dataset (cluster labels ignored) or a d x n matrix.
    """
    X = data.X if isinstance(data, Dataset) else as_matrix(data, "X")
    d, n = X.shape
    p = check_positive_int(p, "p")
    sigma = check_nonnegative(sigma, "sigma")
    lam = check_nonnegative(lam, "lambda")
    if p < n:
        raise ConfigurationError(f"memorization needs p >= n, got p={p} < n={n}")
    sq = column_norms(X) ** 2
    bad = np.flatnonzero(~(sq > n * lam))
    if bad.size:
        i = int(bad[0])
        raise AssumptionViolation(f"sample {i}: |x|^2 = {sq[i]:.6g} must exceed n*lambda = {n * lam:.6g}")
    if require_separable and n > 1:
        unit = X / np.sqrt(sq)
        cos = unit.T @ unit
        np.fill_diagonal(cos, -1.0)
        i, j = np.unravel_index(np.argmax(cos), cos.shape)
        if cos[i, j] >= 0:
            raise DomainError(
                f"samples {min(i, j)} and {max(i, j)} have cosine {cos[i, j]:.4f} >= 0; "
                "singleton clusters are not separable"
            )
    r = np.sqrt((sq - n * lam) / (sq * sq + sigma**2 * sq))
    W = np.zeros((d, p))
    W[:, :n] = X * r
    return DaeModel(W, sigma_train=sigma)


def _is_rank_one(Xk):
    return bool(np.all(Xk == Xk[:, :1]))


def construct_hybrid_solution(data: Dataset, p_alloc, sigma, lam, rotation="align"):
    """Blocks for a mix of duplicated (rank-1) and spread-out clusters.

    Clusters whose columns are all identical must get width 1; duplication
    enters only through the cluster size. Otherwise identical to
    :func:`construct_theorem_solution`.
    """
    p_alloc = np.atleast_1d(p_alloc)
    if p_alloc.size != data.M:
        raise ConfigurationError(f"p_alloc has {p_alloc.size} entries for {data.M} clusters")
    for k in range(1, data.M + 1):
        if _is_rank_one(data.cluster(k)) and int(p_alloc[k - 1]) != 1:
            raise ConfigurationError(
                f"cluster {k} is a duplicated sample and needs width 1, got {int(p_alloc[k - 1])}"
            )
    return construct_theorem_solution(data, p_alloc, sigma, lam, rotation=rotation)


def wiener_limit(S, p_k, sigma, lam=0.0, rho_k=1.0):
    """Rank-p_k truncation of ``(S - (lam/rho_k) I)(S + sigma^2 I)^{-1}``.

    Computed in the eigenbasis of S; negative coefficients are clipped to 0.
    """
    vals, vecs = sym_eig(S)
    p_k = check_positive_int(p_k, "p_k")
    if p_k > vals.size:
        raise ConfigurationError(f"p_k={p_k} exceeds dimension {vals.size}")
    sigma = check_nonnegative(sigma, "sigma")
    if not rho_k > 0:
        raise ConfigurationError(f"rho_k must be > 0, got {rho_k}")
    top = vals[:p_k]
    denom = top + sigma**2
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(denom > 0, (top - lam / rho_k) / denom, 0.0)
    coef = np.clip(coef, 0.0, None)
    U = vecs[:, :p_k]
    return (U * coef) @ U.T


def memorization_loss_value(data, sigma):
    """Mean per-sample loss ``sigma^2 |x|^2 / (sigma^2 + |x|^2)`` of the memorizing solution."""
    X = data.X if isinstance(data, Dataset) else as_matrix(data, "X")
    sigma = check_nonnegative(sigma, "sigma")
    sq = column_norms(X) ** 2
    s2 = sigma**2
    if s2 == 0:
        return 0.0
    return float(np.mean(s2 * sq / (s2 + sq)))


class LossBound(NamedTuple):
    spectral: float
    sampling_term: float


def generalization_loss_bound(spec: MoGSpec, p_alloc, sigma, n_per_mode=None, constants=None):
    """Expected test loss of the rank-limited Wiener blocks.

    ``spectral`` is the sum over modes of
    ``rho_k [sum_{j<=p_k} e_j sigma^4/(e_j+sigma^2)^2 + sum_{j>p_k} e_j]``.
    ``sampling_term`` is ``sum_k rho_k C_k p_k / (sigma^2 n_k)``; it needs the
    user-supplied constants C_k and sample counts, and is NaN otherwise.
    """
    p_alloc = np.atleast_1d(np.asarray(p_alloc))
    if p_alloc.size != spec.K:
        raise ConfigurationError(f"p_alloc has {p_alloc.size} entries for {spec.K} modes")
    sigma = check_nonnegative(sigma, "sigma")
    s2 = sigma**2
    total = 0.0
    for k in range(spec.K):
        vals, _ = sym_eig(spec.second_moment(k))
        vals = np.clip(vals, 0.0, None)
        p_k = int(p_alloc[k])
        top = vals[:p_k]
        with np.errstate(divide="ignore", invalid="ignore"):
            kept = np.where(top + s2 > 0, top * s2 * s2 / (top + s2) ** 2, 0.0)
        total += spec.weights[k] * (kept.sum() + vals[p_k:].sum())
    sampling = float("nan")
    if constants is not None and n_per_mode is not None:
        C = np.broadcast_to(np.asarray(constants, dtype=np.float64), (spec.K,))
        nk = np.broadcast_to(np.asarray(n_per_mode, dtype=np.float64), (spec.K,))
        if s2 == 0:
            raise DomainError("sampling term is undefined at sigma = 0")
        sampling = float(np.sum(spec.weights * C * p_alloc / (s2 * nk)))
    return LossBound(float(total), sampling)


def linf_landscape_norm(W, lam, a_coeffs, data=None):
    """Largest l_inf operator norm of the per-block Hessians ``a v v^T + lam I``.

    Without ``data`` each nonzero column of ``W`` is its own block with
    ``v`` the column and ``a_coeffs`` given per column. With ``data``,
    each nonzero column is attributed to its best-matching training sample
    and ``v`` is that sample, with ``a_coeffs`` given per sample. Zero
    columns contribute ``lam``.
    """
    if isinstance(W, DaeModel):
        W = W.W1
    W = as_matrix(W, "W")
    lam = check_nonnegative(lam, "lambda")
    a = np.atleast_1d(np.asarray(a_coeffs, dtype=np.float64))
    norms = column_norms(W)
    nz = np.flatnonzero(norms > 0)
    if nz.size == 0:
        return float(lam)
    if data is None:
        a = np.broadcast_to(a, (W.shape[1],))
        vecs = W[:, nz]
        coef = a[nz]
    else:
        X = data.X if isinstance(data, Dataset) else as_matrix(data, "X")
        a = np.broadcast_to(a, (X.shape[1],))
        cos = (W[:, nz] / norms[nz]).T @ (X / column_norms(X))
        match = np.argmax(np.abs(cos), axis=1)
        vecs = X[:, match]
        coef = a[match]
    per_block = coef * np.abs(vecs).sum(axis=0) * np.abs(vecs).max(axis=0) + lam
    return float(max(per_block.max(), lam))
