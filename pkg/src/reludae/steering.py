"""Additive steering of the hidden representation during denoising and sampling."""
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from ._validation import as_columns, as_matrix, as_vector, check_nonnegative, check_positive_int
from .exceptions import ConfigurationError
from .model import DaeModel, forward, hidden
from .sampler import DenoiserBank, NoiseSchedule, initial_noise, run_ddim

__all__ = [
    "SteeringVector",
    "steering_vector",
    "bank_steering_vectors",
    "steered_forward",
    "default_window",
    "steer_sample",
    "nearest_mean_labels",
    "SweepRow",
    "steering_sweep",
]


@dataclass(frozen=True)
class SteeringVector:
    v: np.ndarray
    source_sigma: float
    target_label: Optional[int] = None

    def __post_init__(self):
        v = as_vector(self.v, "v")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @property
    def p(self):
        return self.v.shape[0]


def steering_vector(m: DaeModel, targets, sigma, seed, target_label=None) -> SteeringVector:
    """Mean representation of the noised targets (column i noised with ``default_rng([seed, i])``)."""
    T, _ = as_columns(targets, m.d, "targets")
    if T.shape[1] == 0:
        raise ConfigurationError("target set is empty")
    sigma = check_nonnegative(sigma, "sigma")
    noise = np.stack(
        [np.random.default_rng([seed, i]).standard_normal(m.d) for i in range(T.shape[1])], axis=1
    )
    v = hidden(m, T + sigma * noise).mean(axis=1)
    return SteeringVector(v, sigma, target_label)


def bank_steering_vectors(bank: DenoiserBank, targets, seed, target_label=None) -> List[SteeringVector]:
    """One steering vector per bank level, each extracted at that level's noise."""
    out = []
    for s, f in zip(bank.sigmas, bank.denoisers):
        if not isinstance(f, DaeModel):
            raise ConfigurationError("steering needs DaeModel entries in the bank")
        out.append(steering_vector(f, targets, s, seed, target_label))
    return out


def steered_forward(m: DaeModel, x, a, sv: SteeringVector):
    """``W2 (relu(W1^T x) + a v)`` for a d-vector or a d x m batch."""
    if sv.p != m.p:
        raise ConfigurationError(f"steering vector has length {sv.p}, model has p={m.p}")
    X, was_vector = as_columns(x, m.d)
    H = hidden(m, X)
    if a != 0:
        H = H + a * sv.v[:, None]
    out = m.W2 @ H
    return out[:, 0] if was_vector else out


def default_window(schedule: NoiseSchedule):
    """Final half of the steps."""
    n = schedule.n_steps
    return (n // 2, n)


SteerSpec = Union[SteeringVector, Sequence[SteeringVector]]


def _steer_for_level(sv: SteerSpec, bank: DenoiserBank, level: int) -> SteeringVector:
    if isinstance(sv, SteeringVector):
        return sv
    if len(sv) != len(bank):
        raise ConfigurationError(f"got {len(sv)} steering vectors for a bank of {len(bank)} levels")
    return sv[level]


def steer_sample(bank: DenoiserBank, schedule: NoiseSchedule, sv: SteerSpec, a, window=None,
                 n=1, seed=0, X_T=None):
    """DDIM sampling with steered denoising on steps ``window[0] <= step < window[1]``.

    ``sv`` is a single vector or one per bank level. With ``a=0`` the
    result equals :func:`reludae.sampler.sample` bit for bit.
    """
    if window is None:
        window = default_window(schedule)
    start, stop = (int(w) for w in window)
    if not 0 <= start <= stop <= schedule.n_steps:
        raise ConfigurationError(f"window {window} outside 0..{schedule.n_steps}")
    first = bank.denoisers[0]
    if not isinstance(first, DaeModel):
        raise ConfigurationError("steering needs DaeModel entries in the bank")
    if X_T is None:
        X_T = initial_noise(first.d, schedule.sigmas[0], n, seed)

    def denoise(step, sigma, X):
        level = bank.index(sigma)
        model = bank.denoisers[level]
        if start <= step < stop and a != 0:
            return steered_forward(model, X, a, _steer_for_level(sv, bank, level))
        return forward(model, X)

    return run_ddim(schedule, X_T, denoise)


def nearest_mean_labels(X, means):
    """Index of the nearest row of ``means`` (K x d) for every column of X."""
    means = as_matrix(means, "means")
    X = as_matrix(X, "X", rows=means.shape[1])
    d2 = np.sum(X * X, axis=0)[None, :] - 2.0 * means @ X + np.sum(means * means, axis=1)[:, None]
    return np.argmin(d2, axis=0)


class SweepRow(NamedTuple):
    a: float
    mode2_fraction: float
    mean_cosine_to_mu2: float


def steering_sweep(bank, schedule, sv: SteerSpec, a_grid, class_means, source, target,
                   n=100, seed=0, window=None):
    """Target-class fraction versus steering strength.

    Trajectories are drawn once; only those whose unsteered endpoint is
    nearest to ``class_means[source]`` are tracked. For each ``a`` the row
    reports the fraction of them ending nearest to ``class_means[target]``
    and their mean cosine to that mean.
    """
    class_means = as_matrix(class_means, "class_means")
    first = bank.denoisers[0]
    X_T = initial_noise(first.d, schedule.sigmas[0], check_positive_int(n, "n"), seed)
    base = steer_sample(bank, schedule, sv, 0.0, window, X_T=X_T)
    keep = nearest_mean_labels(base, class_means) == source
    if not np.any(keep):
        raise ConfigurationError("no unsteered trajectory ends in the source class")
    X_T = X_T[:, keep]
    mu = class_means[target]
    rows = []
    for a in a_grid:
        out = steer_sample(bank, schedule, sv, float(a), window, X_T=X_T)
        frac = float(np.mean(nearest_mean_labels(out, class_means) == target))
        norms = np.linalg.norm(out, axis=0) * np.linalg.norm(mu)
        cos = np.divide(mu @ out, norms, out=np.zeros(out.shape[1]), where=norms > 0)
        rows.append(SweepRow(float(a), frac, float(cos.mean())))
    return rows
