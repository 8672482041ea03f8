"""Two-layer bias-free ReLU denoiser ``f(x) = W2 relu(W1^T x)``."""
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence, Union

import numpy as np

from ._validation import as_columns, as_matrix, check_nonnegative, check_positive_int
from .data import Dataset
from .exceptions import ConfigurationError

__all__ = [
    "DaeModel",
    "Representation",
    "forward",
    "representation",
    "hidden",
    "jacobian",
    "mc_loss",
    "mask_frozen_loss",
    "block_assignment",
]


class DaeModel:
    """Encoder ``W1`` and decoder ``W2``, both ``d x p``.

    A tied model keeps a single array; ``W2`` is the very same object as
    ``W1`` so in-place updates can never break the tie.
    """

    def __init__(self, W1, W2=None, sigma_train=0.0, tied=None):
        W1 = as_matrix(W1, "W1").copy()
        if tied is None:
            tied = W2 is None
        if tied:
            if W2 is not None and not np.array_equal(np.asarray(W2, dtype=np.float64), W1):
                raise ConfigurationError("tied model given W2 != W1")
            W2 = W1
        else:
            if W2 is None:
                W2 = W1.copy()
            W2 = as_matrix(W2, "W2").copy()
            if W2.shape != W1.shape:
                raise ConfigurationError(f"W2 shape {W2.shape} != W1 shape {W1.shape}")
        self.W1 = W1
        self.W2 = W2
        self.tied = bool(tied)
        self.sigma_train = check_nonnegative(sigma_train, "sigma_train")

    @property
    def d(self):
        return self.W1.shape[0]

    @property
    def p(self):
        return self.W1.shape[1]

    def copy(self):
        return DaeModel(self.W1, None if self.tied else self.W2, self.sigma_train, self.tied)

    def untie(self):
        return DaeModel(self.W1, self.W2.copy(), self.sigma_train, tied=False)

    def permute_columns(self, order):
        order = np.asarray(order)
        return DaeModel(
            self.W1[:, order], None if self.tied else self.W2[:, order], self.sigma_train, self.tied
        )

    def __call__(self, x):
        return forward(self, x)

    def __repr__(self):
        kind = "tied" if self.tied else "untied"
        return f"DaeModel(d={self.d}, p={self.p}, {kind}, sigma_train={self.sigma_train:g})"


class Representation(NamedTuple):
    h: np.ndarray
    active_mask: np.ndarray


def hidden(m: DaeModel, X):
    """``relu(W1^T X)`` for a d x m batch; returns the p x m activations."""
    return np.maximum(m.W1.T @ X, 0.0)


def forward(m: DaeModel, x):
    """Apply the denoiser to a d-vector or to each column of a d x m batch."""
    X, was_vector = as_columns(x, m.d)
    out = m.W2 @ hidden(m, X)
    return out[:, 0] if was_vector else out


def representation(m: DaeModel, x) -> Representation:
    X, was_vector = as_columns(x, m.d)
    h = hidden(m, X)
    if was_vector:
        h = h[:, 0]
    return Representation(h, h > 0)


def jacobian(m: DaeModel, x, return_boundary=False):
    """``W2 diag(mask) W1^T`` at ``x``.

    A pre-activation that is exactly zero counts as inactive. With
    ``return_boundary=True`` also returns whether that happened.
    """
    X, was_vector = as_columns(x, m.d)
    if not was_vector:
        raise ConfigurationError("jacobian takes a single d-vector")
    pre = m.W1.T @ X[:, 0]
    mask = pre > 0
    J = (m.W2[:, mask]) @ m.W1[:, mask].T
    if return_boundary:
        return J, bool(np.any(pre == 0))
    return J


def _regularizer(m: DaeModel, lam):
    return lam * (np.sum(m.W1 * m.W1) + np.sum(m.W2 * m.W2))


def mc_loss(m: DaeModel, data: Dataset, sigma, lam, n_mc, seed, return_stderr=False):
    """Monte-Carlo estimate of the regularized denoising objective.

    Sample ``i`` draws its noise from ``default_rng([seed, i])`` so the
    estimate does not depend on evaluation order. With
    ``return_stderr=True`` the standard error of the data term is returned
    as well.
    """
    sigma = check_nonnegative(sigma, "sigma")
    lam = check_nonnegative(lam, "lambda")
    n_mc = check_positive_int(n_mc, "n_mc")
    if data.d != m.d:
        raise ConfigurationError(f"data dimension {data.d} != model dimension {m.d}")
    per_sample_mean = np.empty(data.n)
    per_sample_var = np.empty(data.n)
    for i in range(data.n):
        x = data.X[:, i]
        eps = np.random.default_rng([seed, i]).standard_normal((m.d, n_mc))
        Y = x[:, None] + sigma * eps
        R = m.W2 @ hidden(m, Y) - x[:, None]
        sq = np.einsum("ij,ij->j", R, R)
        per_sample_mean[i] = sq.mean()
        per_sample_var[i] = sq.var(ddof=1) if n_mc > 1 else 0.0
    value = per_sample_mean.mean() + _regularizer(m, lam)
    if return_stderr:
        stderr = np.sqrt(per_sample_var.sum() / n_mc) / data.n
        return float(value), float(stderr)
    return float(value)


BlockSpec = Union[Mapping[int, Sequence[int]], Sequence[int]]


def block_assignment(mask_per_cluster: BlockSpec, M: int, p: int):
    """Normalize a block spec into ``{label: column index array}``.

    Accepts either a mapping from cluster label to column indices or a
    sequence of contiguous block widths (one per cluster, in label order).
    """
    if isinstance(mask_per_cluster, Mapping):
        blocks = {int(k): np.asarray(v, dtype=np.int64).ravel() for k, v in mask_per_cluster.items()}
    else:
        widths = [check_positive_int(int(w), "block width") for w in mask_per_cluster]
        if len(widths) != M:
            raise ConfigurationError(f"got {len(widths)} block widths for {M} clusters")
        starts = np.concatenate([[0], np.cumsum(widths)])
        blocks = {k + 1: np.arange(starts[k], starts[k + 1]) for k in range(M)}
    missing = set(range(1, M + 1)) - set(blocks)
    if missing:
        raise ConfigurationError(f"no block given for clusters {sorted(missing)}")
    seen = np.zeros(p, dtype=bool)
    for k, cols in blocks.items():
        if cols.size and (cols.min() < 0 or cols.max() >= p):
            raise ConfigurationError(f"block for cluster {k} has column index outside 0..{p - 1}")
        if np.any(seen[cols]) or np.unique(cols).size != cols.size:
            raise ConfigurationError(f"block for cluster {k} overlaps another block")
        seen[cols] = True
    return blocks


def mask_frozen_loss(m: DaeModel, data: Dataset, sigma, lam, mask_per_cluster: BlockSpec):
    """Exact expected loss when cluster k only ever activates its own block.

    Each block acts linearly as ``A_k = W2[:, B_k] W1[:, B_k]^T`` and the
    noise expectation is available in closed form.
    """
    sigma = check_nonnegative(sigma, "sigma")
    lam = check_nonnegative(lam, "lambda")
    if data.d != m.d:
        raise ConfigurationError(f"data dimension {data.d} != model dimension {m.d}")
    blocks = block_assignment(mask_per_cluster, data.M, m.p)
    total = 0.0
    for k in range(1, data.M + 1):
        cols = blocks[k]
        Xk = data.cluster(k)
        A = m.W2[:, cols] @ m.W1[:, cols].T
        R = A @ Xk - Xk
        total += np.sum(R * R) + Xk.shape[1] * sigma**2 * np.sum(A * A)
    return float(total / data.n + _regularizer(m, lam))
