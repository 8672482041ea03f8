"""Memorization detection from the spikiness of the hidden representation."""
from typing import NamedTuple

import numpy as np
from scipy.stats import entropy
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.metrics import roc_auc_score, roc_curve
from sklearn.utils.validation import check_is_fitted

from ._validation import as_columns, as_vector, check_nonnegative
from .exceptions import ConfigurationError
from .model import DaeModel, Representation, hidden

__all__ = [
    "STATISTICS",
    "RepStatistics",
    "DetectionResult",
    "rep_stats",
    "statistic",
    "spikiness",
    "detect",
    "detection_scores",
    "calibrate",
    "auroc",
    "tpr_at_fpr",
    "SpikinessDetector",
]

STATISTICS = ("std", "l4l2", "entropy", "max_minus_min")


class RepStatistics(NamedTuple):
    std: np.ndarray
    l4l2: np.ndarray
    entropy: np.ndarray
    max_minus_min: np.ndarray


class DetectionResult(NamedTuple):
    h: Representation
    score: float
    flag: bool


def rep_stats(h) -> RepStatistics:
    """Dispersion statistics of a representation vector, or of each column of a p x m matrix.

    ``l4l2`` and ``entropy`` are reported as 0 for an all-zero vector.
    """
    if isinstance(h, Representation):
        h = h.h
    H = np.asarray(h, dtype=np.float64)
    single = H.ndim == 1
    if single:
        H = H[:, None]
    if H.ndim != 2 or H.shape[0] < 2:
        raise ConfigurationError(f"need a representation with p >= 2 entries, got shape {np.shape(h)}")
    std = H.std(axis=0)
    # the l4/l2 ratio is scale free, so normalize first to avoid underflow in h^4
    peak = np.abs(H).max(axis=0)
    nz = peak > 0
    G = H[:, nz] / peak[nz]
    l4l2 = np.zeros(H.shape[1])
    l4l2[nz] = np.sum(G**4, axis=0) ** 0.25 / np.sqrt(np.sum(G * G, axis=0))
    total = H.sum(axis=0)
    ent = np.zeros(H.shape[1])
    pos = total > 0
    if np.any(pos):
        ent[pos] = entropy(H[:, pos], axis=0)
    spread = H.max(axis=0) - H.min(axis=0)
    stats = RepStatistics(std, l4l2, ent, spread)
    if single:
        return RepStatistics(*(float(s[0]) for s in stats))
    return stats


def statistic(h, stat="std"):
    """One raw statistic from :func:`rep_stats`."""
    if stat not in STATISTICS:
        raise ConfigurationError(f"stat must be one of {STATISTICS}, got {stat!r}")
    return getattr(rep_stats(h), stat)


def spikiness(h, stat="std"):
    """Statistic oriented so that larger means spikier; entropy is negated."""
    value = statistic(h, stat)
    return -value if stat == "entropy" else value


def detect(m: DaeModel, x0, sigma=0.17, threshold=0.0, stat="std", seed=0) -> DetectionResult:
    """Noise the input once, read the representation, flag if the score exceeds ``threshold``.

    The score is the oriented statistic of :func:`spikiness`.
    """
    x0 = as_vector(x0, "x0", size=m.d)
    sigma = check_nonnegative(sigma, "sigma")
    x_t = x0 + sigma * np.random.default_rng(seed).standard_normal(m.d)
    h = hidden(m, x_t[:, None])[:, 0]
    score = spikiness(h, stat)
    return DetectionResult(Representation(h, h > 0), score, bool(score > threshold))


def detection_scores(m: DaeModel, X, sigma=0.17, stat="std", seed=0):
    """Scores for every column of X; column i is noised with ``default_rng([seed, i])``."""
    X, _ = as_columns(X, m.d, "X")
    sigma = check_nonnegative(sigma, "sigma")
    noise = np.stack(
        [np.random.default_rng([seed, i]).standard_normal(m.d) for i in range(X.shape[1])], axis=1
    )
    return np.atleast_1d(spikiness(hidden(m, X + sigma * noise), stat))


def _labeled(pos, neg):
    pos = np.atleast_1d(np.asarray(pos, dtype=np.float64))
    neg = np.atleast_1d(np.asarray(neg, dtype=np.float64))
    if pos.size == 0 or neg.size == 0:
        raise ConfigurationError("both score lists must be nonempty")
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(neg))):
        raise ConfigurationError("scores must be finite")
    y = np.concatenate([np.ones(pos.size), np.zeros(neg.size)])
    return y, np.concatenate([pos, neg])


def calibrate(scores_mem, scores_gen):
    """Threshold maximizing TPR - FPR, counting ``score >= threshold`` as positive.

    Candidates are the observed scores; among equally good thresholds the
    largest wins.
    """
    y, s = _labeled(scores_mem, scores_gen)
    fpr, tpr, thr = roc_curve(y, s, drop_intermediate=False)
    finite = np.isfinite(thr)
    J = (tpr - fpr)[finite]
    # thresholds are descending, so argmax returns the largest among ties
    return float(thr[finite][int(np.argmax(J))])


def auroc(pos, neg):
    """Probability a positive outscores a negative, ties counted one half."""
    y, s = _labeled(pos, neg)
    return float(roc_auc_score(y, s))


def tpr_at_fpr(pos, neg, fpr=0.01):
    """Best TPR over thresholds whose FPR (``score >= t``) stays within ``fpr``."""
    y, s = _labeled(pos, neg)
    f, t, _ = roc_curve(y, s, drop_intermediate=False)
    return float(t[f <= fpr + 1e-12].max())


class SpikinessDetector(ClassifierMixin, BaseEstimator):
    """Threshold detector on a representation statistic.

    Inputs follow the scikit-learn convention: ``X`` is ``(n_samples, d)``,
    ``y`` is 1 for memorized and 0 for generalized samples.

    Parameters
    ----------
    model : DaeModel
        Network whose representation is scored.
    sigma : float
        Noise level added before reading the representation.
    stat : str
        One of ``std``, ``l4l2``, ``entropy``, ``max_minus_min``.
    seed : int
        Noise seed; sample i uses substream ``[seed, i]``.
    """

    def __init__(self, model=None, sigma=0.17, stat="std", seed=0):
        self.model = model
        self.sigma = sigma
        self.stat = stat
        self.seed = seed

    def _scores(self, X):
        if not isinstance(self.model, DaeModel):
            raise ConfigurationError("SpikinessDetector needs a DaeModel")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.model.d:
            raise ConfigurationError(f"X must have shape (n, {self.model.d}), got {X.shape}")
        return detection_scores(self.model, X.T, self.sigma, self.stat, self.seed)

    def fit(self, X, y):
        y = np.asarray(y).astype(int)
        s = self._scores(X)
        if s.shape[0] != y.shape[0]:
            raise ConfigurationError("X and y have different lengths")
        self.classes_ = np.array([0, 1])
        self.threshold_ = calibrate(s[y == 1], s[y == 0])
        return self

    def decision_function(self, X):
        return self._scores(X)

    def predict(self, X):
        check_is_fitted(self, "threshold_")
        return (self._scores(X) > self.threshold_).astype(int)
