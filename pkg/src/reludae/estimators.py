"""scikit-learn style wrappers.

Unlike the rest of the package, these take ``X`` with one sample per *row*
(``(n_samples, d)``) and transpose internally.
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .closed_form import (
    construct_hybrid_solution,
    construct_memorization_solution,
    construct_theorem_solution,
)
from .data import Dataset
from .exceptions import ConfigurationError
from .model import forward, hidden
from .trainer import OptimizerConfig, train

__all__ = ["ReluDAE", "ClosedFormDAE"]


class _DaeTransformerMixin(TransformerMixin):
    def _check_X(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.model_.d:
            raise ConfigurationError(f"X has {X.shape[1]} features, model expects {self.model_.d}")
        return X

    def transform(self, X):
        """Hidden representation, ``(n_samples, p)``."""
        X = self._check_X(X)
        return hidden(self.model_, X.T).T

    def predict(self, X):
        """Denoised inputs, ``(n_samples, d)``."""
        X = self._check_X(X)
        return forward(self.model_, X.T).T

    def score(self, X, y=None, seed=0):
        """Negative mean squared denoising error at the model's noise level."""
        X = self._check_X(X)
        noisy = X + self.model_.sigma_train * np.random.default_rng(seed).standard_normal(X.shape)
        err = forward(self.model_, noisy.T).T - X
        return -float(np.mean(np.sum(err * err, axis=1)))


class ReluDAE(_DaeTransformerMixin, BaseEstimator):
    """Two-layer ReLU denoising autoencoder trained by stochastic gradient descent.

    Parameters
    ----------
    p : int
        Hidden width.
    sigma : float
        Training noise level.
    optimizer : {"rmsprop", "adam", "adamw"}
    lr, weight_decay, steps, batch, seed, tied, init_scale
        Passed to :class:`reludae.trainer.OptimizerConfig`.
    """

    def __init__(self, p=8, sigma=0.2, optimizer="rmsprop", lr=1e-3, weight_decay=1e-2,
                 steps=1000, batch=0, seed=0, tied=True, init_scale=1e-2):
        self.p = p
        self.sigma = sigma
        self.optimizer = optimizer
        self.lr = lr
        self.weight_decay = weight_decay
        self.steps = steps
        self.batch = batch
        self.seed = seed
        self.tied = tied
        self.init_scale = init_scale

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        cfg = OptimizerConfig(
            kind=self.optimizer, lr=self.lr, weight_decay=self.weight_decay, steps=self.steps,
            batch=self.batch, seed=self.seed, tied=self.tied, init_scale=self.init_scale,
            log_every=max(1, self.steps // 100),
        )
        data = Dataset(X.T, np.ones(X.shape[0], dtype=int))
        self.trace_ = train(data, self.sigma, self.p, cfg)
        self.model_ = self.trace_.final_model
        self.n_features_in_ = X.shape[1]
        return self


class ClosedFormDAE(_DaeTransformerMixin, BaseEstimator):
    """Closed-form minimizer built directly from labelled data.

    Parameters
    ----------
    mode : {"theorem", "memorization", "hybrid"}
    p : int or None
        Width for ``memorization``; defaults to the number of samples.
    p_alloc : sequence of int or None
        Block widths for ``theorem``/``hybrid``, one per cluster label.
    sigma, lam : float
        Noise level and weight decay.
    """

    def __init__(self, mode="theorem", p=None, p_alloc=None, sigma=0.2, lam=0.0):
        self.mode = mode
        self.p = p
        self.p_alloc = p_alloc
        self.sigma = sigma
        self.lam = lam

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.solution_ = None
        if self.mode == "memorization":
            p = X.shape[0] if self.p is None else self.p
            self.model_ = construct_memorization_solution(X.T, p, self.sigma, self.lam)
        elif self.mode in ("theorem", "hybrid"):
            if y is None:
                raise ConfigurationError(f"mode {self.mode!r} needs cluster labels y")
            data = Dataset(X.T, np.asarray(y)).canonical()
            if self.p_alloc is None:
                raise ConfigurationError("p_alloc is required")
            build = construct_theorem_solution if self.mode == "theorem" else construct_hybrid_solution
            self.solution_ = build(data, self.p_alloc, self.sigma, self.lam)
            self.model_ = self.solution_.to_model()
        else:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        self.n_features_in_ = X.shape[1]
        return self
