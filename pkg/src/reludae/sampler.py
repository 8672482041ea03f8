"""Deterministic DDIM sampling on a variance-exploding noise schedule."""
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import softmax

from ._validation import as_columns, as_matrix, as_vector, check_nonnegative, check_positive_int
from .data import Dataset
from .exceptions import ConfigurationError, NumericFailure
from .model import DaeModel, forward

__all__ = [
    "NoiseSchedule",
    "ve_schedule",
    "DenoiserBank",
    "ddim_step",
    "initial_noise",
    "sample",
    "run_ddim",
    "empirical_denoiser",
    "one_step_denoise",
]

Denoiser = Union[DaeModel, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class NoiseSchedule:
    """Strictly decreasing noise levels ``sigma_T > ... > sigma_1 > sigma_0 >= 0``."""

    sigmas: np.ndarray

    def __post_init__(self):
        s = as_vector(self.sigmas, "sigmas")
        if s.size < 2:
            raise ConfigurationError("a schedule needs at least two levels")
        if np.any(np.diff(s) >= 0):
            raise ConfigurationError("sigmas must be strictly decreasing")
        if s[-1] < 0:
            raise ConfigurationError("final sigma must be >= 0")
        s.setflags(write=False)
        object.__setattr__(self, "sigmas", s)

    @property
    def n_steps(self):
        return self.sigmas.size - 1

    def __len__(self):
        return self.n_steps


def ve_schedule(sigma_min, sigma_max, T):
    """Geometric levels from ``sigma_max`` down to ``sigma_min`` (T of them), then 0."""
    T = check_positive_int(T, "T", minimum=2)
    if not 0 < sigma_min < sigma_max:
        raise ConfigurationError(f"need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}")
    frac = (T - np.arange(T, 0, -1)) / (T - 1)  # t = T..1
    sigmas = sigma_max * (sigma_min / sigma_max) ** frac
    return NoiseSchedule(np.append(sigmas, 0.0))


class DenoiserBank:
    """Denoisers indexed by noise level; lookup returns the nearest level.

    Entries are ``(sigma, denoiser)`` pairs where the denoiser is a
    :class:`DaeModel` or any callable mapping a d x m batch to d x m.
    """

    def __init__(self, entries: Sequence[Tuple[float, Denoiser]]):
        entries = [(float(s), f) for s, f in entries]
        if not entries:
            raise ConfigurationError("denoiser bank is empty")
        sig = np.array([s for s, _ in entries])
        if np.unique(sig).size != sig.size:
            raise ConfigurationError("bank noise levels must be distinct")
        order = np.argsort(-sig)
        self.sigmas = sig[order]
        self.denoisers = [entries[i][1] for i in order]

    @classmethod
    def from_builder(cls, sigmas, build: Callable[[float], Denoiser]):
        return cls([(s, build(float(s))) for s in sigmas])

    def __len__(self):
        return len(self.denoisers)

    def index(self, sigma):
        # ties go to the first (larger) level
        return int(np.argmin(np.abs(self.sigmas - sigma)))

    def lookup(self, sigma) -> Denoiser:
        return self.denoisers[self.index(sigma)]

    def denoise(self, sigma, X):
        f = self.lookup(sigma)
        if isinstance(f, DaeModel):
            return forward(f, X)
        return np.asarray(f(X), dtype=np.float64)


def _update(X, FX, sigma_t, sigma_prev):
    return X + ((sigma_t - sigma_prev) / sigma_t) * (FX - X)


def ddim_step(bank: DenoiserBank, x_t, sigma_t, sigma_prev):
    """``x + ((sigma_t - sigma_prev) / sigma_t) (f(x) - x)`` with f from the bank."""
    if not sigma_t > 0:
        raise ConfigurationError(f"sigma_t must be > 0, got {sigma_t}")
    if not 0 <= sigma_prev < sigma_t:
        raise ConfigurationError(f"need 0 <= sigma_prev < sigma_t, got {sigma_prev}, {sigma_t}")
    x = np.asarray(x_t, dtype=np.float64)
    X = x[:, None] if x.ndim == 1 else x
    out = _update(X, bank.denoise(sigma_t, X), sigma_t, sigma_prev)
    return out[:, 0] if x.ndim == 1 else out


def initial_noise(d, sigma_max, n_samples, seed):
    """Column i is ``sigma_max * N(0, I)`` from generator ``default_rng([seed, i])``."""
    n_samples = check_positive_int(n_samples, "n_samples")
    cols = [np.random.default_rng([seed, i]).standard_normal(d) for i in range(n_samples)]
    return sigma_max * np.stack(cols, axis=1)


StepDenoiser = Callable[[int, float, np.ndarray], np.ndarray]


def run_ddim(schedule: NoiseSchedule, X_T, denoise: StepDenoiser):
    """Iterate DDIM updates from ``X_T``; ``denoise(step, sigma, X)`` supplies f.

    ``step`` counts from 0 at the noisiest level.
    """
    X = np.array(X_T, dtype=np.float64)
    s = schedule.sigmas
    for step in range(schedule.n_steps):
        FX = denoise(step, s[step], X)
        X = _update(X, FX, s[step], s[step + 1])
        if not np.all(np.isfinite(X)):
            bad = int(np.sum(~np.all(np.isfinite(X), axis=0)))
            raise NumericFailure(
                f"non-finite values in {bad} trajectories after step {step} "
                f"(sigma {s[step]:.4g} -> {s[step + 1]:.4g})"
            )
    return X


def sample(bank: DenoiserBank, schedule: NoiseSchedule, n_samples, seed, d=None):
    """Draw ``n_samples`` trajectories; returns the d x n_samples endpoints."""
    if d is None:
        f = bank.denoisers[0]
        if not isinstance(f, DaeModel):
            raise ConfigurationError("pass d explicitly for banks of plain callables")
        d = f.d
    X_T = initial_noise(d, schedule.sigmas[0], n_samples, seed)
    return run_ddim(schedule, X_T, lambda step, sig, X: bank.denoise(sig, X))


def empirical_denoiser(data, sigma):
    """Posterior mean under the empirical distribution smoothed by N(0, sigma^2 I).

    Returns a callable accepting a d-vector or a d x m batch.
    """
    X = data.X if isinstance(data, Dataset) else as_matrix(data, "X")
    if not sigma > 0:
        raise ConfigurationError(f"sigma must be > 0, got {sigma}")
    sq = np.einsum("ij,ij->j", X, X)

    def f(y):
        Y, was_vector = as_columns(y, X.shape[0], "y")
        # -|y - x_i|^2 / (2 sigma^2) up to a per-column constant
        logits = (X.T @ Y - 0.5 * sq[:, None]) / sigma**2
        out = X @ softmax(logits, axis=0)
        return out[:, 0] if was_vector else out

    return f


def one_step_denoise(m: DaeModel, x0, sigma, seed):
    """Corrupt ``x0`` once and denoise; returns ``(noisy, denoised, mse)`` with mse per coordinate."""
    x0 = as_vector(x0, "x0", size=m.d)
    sigma = check_nonnegative(sigma, "sigma")
    noisy = x0 + sigma * np.random.default_rng(seed).standard_normal(m.d)
    denoised = forward(m, noisy)
    return noisy, denoised, float(np.sum((denoised - x0) ** 2) / m.d)
