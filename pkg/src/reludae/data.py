"""Mixture-of-Gaussians data, cluster bookkeeping and separability checks.

Samples are stored as *columns* of a ``d x n`` matrix throughout the
package. Cluster labels run from 1 to M and columns of a cluster are kept
contiguous, ordered by label.
"""
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from ._validation import as_matrix, check_positive_int, column_norms
from .exceptions import ConfigurationError, DegenerateDataError, DomainError

__all__ = [
    "MoGSpec",
    "Dataset",
    "SeparabilityReport",
    "Margin",
    "exponential_spectrum",
    "simplex_means",
    "mog_spec",
    "sample_mog",
    "check_separability",
    "c_proj",
    "margin_formula",
    "compute_margin",
    "duplicate_cluster",
]


def exponential_spectrum(d, tau=0.5, scale=1.0):
    """Descending spectrum ``scale * exp(-tau * (j - 1))`` for j = 1..d."""
    return scale * np.exp(-tau * np.arange(d, dtype=np.float64))


def simplex_means(K, d, radius=5.0):
    """K vectors of norm ``radius`` with pairwise cosine -1/(K-1).

    For K=2 this is ``+radius*e1, -radius*e1``. The vertices live in the
    span of the first K-1 coordinates.
    """
    K = check_positive_int(K, "K", minimum=2)
    if d < K - 1:
        raise ConfigurationError(f"a {K}-vertex simplex needs d >= {K - 1}, got d={d}")
    if K == 2:
        coords = np.array([[1.0], [-1.0]])
    else:
        # centered one-hot vectors span a (K-1)-dim subspace; take coordinates in an orthonormal basis of it
        centered = np.eye(K) - 1.0 / K
        q, _ = np.linalg.qr(centered[:, : K - 1])
        coords = centered @ q
        coords /= np.linalg.norm(coords, axis=1, keepdims=True)
    means = np.zeros((K, d))
    means[:, : coords.shape[1]] = radius * coords
    return means


@dataclass(frozen=True)
class MoGSpec:
    """Ground-truth mixture sum_k rho_k N(mu_k, Sigma_k).

    Each covariance is ``B_k diag(cov_eigvals[k]) B_k^T``; ``cov_eigvecs``
    defaults to the identity basis.
    """

    weights: np.ndarray
    means: np.ndarray
    cov_eigvals: np.ndarray
    cov_eigvecs: Optional[tuple] = None

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        spectra = np.atleast_2d(np.asarray(self.cov_eigvals, dtype=np.float64))
        K = weights.shape[0]
        if K < 1:
            raise ConfigurationError("need at least one mode")
        if means.shape[0] != K or spectra.shape[0] != K:
            raise ConfigurationError(
                f"weights give K={K} but means/spectra have {means.shape[0]}/{spectra.shape[0]} rows"
            )
        if means.shape[1] != spectra.shape[1]:
            raise ConfigurationError(
                f"mean dimension {means.shape[1]} != spectrum length {spectra.shape[1]}"
            )
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ConfigurationError(f"weights must be non-negative and sum to 1, got {weights}")
        if np.any(spectra < 0) or np.any(np.diff(spectra, axis=1) > 0):
            raise ConfigurationError("covariance spectra must be non-negative and descending")
        bases = None
        if self.cov_eigvecs is not None:
            bases = tuple(np.asarray(B, dtype=np.float64) for B in self.cov_eigvecs)
            d = means.shape[1]
            if len(bases) != K:
                raise ConfigurationError(f"expected {K} eigenvector bases, got {len(bases)}")
            for k, B in enumerate(bases):
                if B.shape != (d, d):
                    raise ConfigurationError(f"basis {k} has shape {B.shape}, expected {(d, d)}")
                if np.max(np.abs(B.T @ B - np.eye(d))) > 1e-10:
                    raise ConfigurationError(f"basis {k} is not orthonormal")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "cov_eigvals", spectra)
        object.__setattr__(self, "cov_eigvecs", bases)

    @property
    def K(self):
        return self.weights.shape[0]

    @property
    def d(self):
        return self.means.shape[1]

    def basis(self, k):
        if self.cov_eigvecs is None:
            return np.eye(self.d)
        return self.cov_eigvecs[k]

    def covariance(self, k):
        B = self.basis(k)
        return (B * self.cov_eigvals[k]) @ B.T

    def second_moment(self, k):
        """S_k = mu_k mu_k^T + Sigma_k."""
        mu = self.means[k]
        return np.outer(mu, mu) + self.covariance(k)


def mog_spec(K=2, d=1000, radius=5.0, tau=0.5, cov_scale=1.0, weights=None):
    """Modes on a regular simplex of radius ``radius`` with exponential spectra.

    ``K=2`` gives the symmetric pair ``mu_1 = -mu_2 = radius * e1``.
    """
    means = simplex_means(K, d, radius)
    spectrum = exponential_spectrum(d, tau, cov_scale)
    if weights is None:
        weights = np.full(K, 1.0 / K)
    return MoGSpec(weights=weights, means=means, cov_eigvals=np.tile(spectrum, (K, 1)))


@dataclass(frozen=True)
class Dataset:
    """Column-stacked samples ``X`` (d x n) with cluster labels in 1..M."""

    X: np.ndarray
    cluster_ids: np.ndarray
    _sizes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        X = np.array(as_matrix(self.X, "X"))
        ids = np.array(self.cluster_ids)
        if ids.ndim != 1 or ids.shape[0] != X.shape[1]:
            raise ConfigurationError(
                f"cluster_ids must have length n={X.shape[1]}, got shape {ids.shape}"
            )
        if ids.size and not np.issubdtype(ids.dtype, np.integer):
            if not np.all(ids == np.round(ids)):
                raise ConfigurationError("cluster_ids must be integers")
        ids = ids.astype(np.int64)
        M = int(ids.max()) if ids.size else 0
        if ids.size and ids.min() < 1:
            raise ConfigurationError("cluster labels must lie in 1..M")
        sizes = np.bincount(ids, minlength=M + 1)[1:]
        if np.any(sizes == 0):
            missing = [k + 1 for k in np.flatnonzero(sizes == 0)]
            raise ConfigurationError(f"cluster labels {missing} are unused; labels must cover 1..M")
        X.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "cluster_ids", ids)
        object.__setattr__(self, "_sizes", sizes)

    @classmethod
    def from_clusters(cls, clusters: Sequence[np.ndarray]):
        """Build from a list of d x n_k blocks; block k receives label k+1."""
        blocks = [np.atleast_2d(np.asarray(c, dtype=np.float64)) for c in clusters]
        X = np.concatenate(blocks, axis=1)
        ids = np.concatenate([np.full(b.shape[1], k + 1) for k, b in enumerate(blocks)])
        return cls(X, ids)

    @classmethod
    def singletons(cls, X):
        X = as_matrix(X, "X")
        return cls(X, np.arange(1, X.shape[1] + 1))

    @property
    def d(self):
        return self.X.shape[0]

    @property
    def n(self):
        return self.X.shape[1]

    @property
    def M(self):
        return self._sizes.shape[0]

    @property
    def cluster_sizes(self):
        return self._sizes.copy()

    def indices(self, k):
        """Column indices of cluster ``k`` (1-based label)."""
        return np.flatnonzero(self.cluster_ids == k)

    def cluster(self, k):
        return self.X[:, self.cluster_ids == k]

    def cluster_means(self):
        """d x M matrix of cluster means."""
        return np.stack([self.cluster(k).mean(axis=1) for k in range(1, self.M + 1)], axis=1)

    def is_canonical(self):
        return bool(np.all(np.diff(self.cluster_ids) >= 0))

    def canonical(self):
        """Stable reorder so clusters are contiguous and ordered by label."""
        if self.is_canonical():
            return self
        order = np.argsort(self.cluster_ids, kind="stable")
        return Dataset(self.X[:, order], self.cluster_ids[order])


def sample_mog(spec: MoGSpec, counts, seed: int) -> Dataset:
    """Draw ``counts[k]`` samples from mode k; mode k uses generator ``seed + k``."""
    counts = [check_positive_int(c, "count") for c in np.atleast_1d(counts).tolist()]
    if len(counts) != spec.K:
        raise ConfigurationError(f"got {len(counts)} counts for K={spec.K} modes")
    blocks = []
    for k, n_k in enumerate(counts):
        rng = np.random.default_rng(seed + k)
        z = rng.standard_normal((spec.d, n_k))
        B = spec.basis(k)
        blocks.append(spec.means[k][:, None] + B @ (np.sqrt(spec.cov_eigvals[k])[:, None] * z))
    return Dataset.from_clusters(blocks)


@dataclass(frozen=True)
class SeparabilityReport:
    alpha: float
    beta: float
    per_pair_cosines: np.ndarray
    is_separable: bool


def check_separability(data: Dataset) -> SeparabilityReport:
    """(alpha, beta) of the cluster partition.

    With a single cluster there are no pairs; beta is reported as -1.
    """
    means = data.cluster_means()
    norms = column_norms(means)
    if np.any(norms == 0):
        bad = [k + 1 for k in np.flatnonzero(norms == 0)]
        raise DegenerateDataError(f"clusters {bad} have zero-norm means")
    alpha = 0.0
    for k in range(1, data.M + 1):
        dev = data.cluster(k) - means[:, k - 1 : k]
        alpha = max(alpha, float(column_norms(dev).max() / norms[k - 1]))
    unit = means / norms
    cos = np.clip(unit.T @ unit, -1.0, 1.0)
    np.fill_diagonal(cos, 1.0)
    if data.M > 1:
        off = cos[~np.eye(data.M, dtype=bool)]
        beta = float(off.max())
    else:
        beta = -1.0
    return SeparabilityReport(alpha=alpha, beta=beta, per_pair_cosines=cos, is_separable=beta < 0)


def c_proj(alpha):
    """Lower bound on the alignment of a cluster mean with its top eigenvector."""
    alpha = float(alpha)
    if alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    if alpha >= 1:
        raise DomainError(f"alpha must be < 1, got {alpha}")
    ratio = alpha * alpha / (1.0 - alpha * alpha)
    if ratio > 1:
        raise DomainError(f"alpha={alpha} gives alpha^2/(1-alpha^2)={ratio:.4f} > 1; c_proj undefined")
    return float(np.sqrt(1.0 - ratio * ratio))


class Margin(NamedTuple):
    gamma: float
    nonpositive: bool


def margin_formula(mean_norms, alpha, beta, s_min, s_max, p_alloc) -> Margin:
    """gamma = min_k |xbar_k| * min(s_min c_proj / sqrt(p_k) - s_max alpha, s_max |beta| / 2)."""
    mean_norms = np.atleast_1d(np.asarray(mean_norms, dtype=np.float64))
    p_alloc = np.atleast_1d(np.asarray(p_alloc, dtype=np.float64))
    if p_alloc.shape != mean_norms.shape:
        raise ConfigurationError(f"p_alloc has {p_alloc.size} entries for {mean_norms.size} clusters")
    if np.any(p_alloc < 1):
        raise ConfigurationError("block widths must be >= 1")
    if s_min > s_max:
        raise ConfigurationError(f"s_min={s_min} exceeds s_max={s_max}")
    cp = c_proj(alpha)
    inner = np.minimum(s_min * cp / np.sqrt(p_alloc) - s_max * alpha, s_max * abs(beta) / 2.0)
    gamma = float(np.min(mean_norms * inner))
    return Margin(gamma, gamma <= 0)


def compute_margin(data: Dataset, s_min, s_max, p_alloc) -> Margin:
    """Margin of the block construction on ``data`` (requires beta < 0)."""
    report = check_separability(data)
    if not report.is_separable:
        raise DomainError(f"data is not separable (beta={report.beta:.4f} >= 0)")
    norms = column_norms(data.cluster_means())
    return margin_formula(norms, report.alpha, report.beta, s_min, s_max, p_alloc)


def duplicate_cluster(data: Dataset, source_index: int, copies: int) -> Dataset:
    """Move column ``source_index`` into a new cluster of ``copies`` identical columns.

    The source column leaves its original cluster; if that empties the
    cluster, labels are renumbered. The new cluster gets the last label.
    """
    if not 0 <= source_index < data.n:
        raise IndexError(f"source_index {source_index} out of range for n={data.n}")
    copies = check_positive_int(copies, "copies", minimum=2)
    x = data.X[:, source_index]
    keep = np.ones(data.n, dtype=bool)
    keep[source_index] = False
    old_ids = data.cluster_ids[keep]
    _, relabeled = np.unique(old_ids, return_inverse=True)
    relabeled = relabeled + 1
    new_label = (relabeled.max() if relabeled.size else 0) + 1
    X = np.concatenate([data.X[:, keep], np.repeat(x[:, None], copies, axis=1)], axis=1)
    ids = np.concatenate([relabeled, np.full(copies, new_label)])
    return Dataset(X, ids).canonical()
