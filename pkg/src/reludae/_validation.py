import numbers

import numpy as np

from .exceptions import ConfigurationError


def as_matrix(a, name="X", rows=None):
    """Return ``a`` as a finite 2-D float64 array, optionally checking the row count."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ConfigurationError(f"{name} must be 2-D, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise ConfigurationError(f"{name} has {arr.shape[0]} rows, expected {rows}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} contains non-finite entries")
    return arr


def as_vector(a, name="x", size=None):
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise ConfigurationError(f"{name} must be 1-D, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ConfigurationError(f"{name} has length {arr.shape[0]}, expected {size}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} contains non-finite entries")
    return arr


def as_columns(a, d, name="x"):
    """Accept a d-vector or a d x m matrix; return (matrix, was_vector)."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        if arr.shape[0] != d:
            raise ConfigurationError(f"{name} has length {arr.shape[0]}, expected {d}")
        return arr[:, None], True
    if arr.ndim == 2 and arr.shape[0] == d:
        return arr, False
    raise ConfigurationError(f"{name} has shape {arr.shape}, expected ({d},) or ({d}, m)")


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ConfigurationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_nonnegative(value, name):
    value = float(value)
    if not np.isfinite(value) or value < 0:
        raise ConfigurationError(f"{name} must be finite and >= 0, got {value!r}")
    return value


def column_norms(X):
    return np.sqrt(np.einsum("ij,ij->j", X, X))


def unit_columns(X):
    """Normalize columns; zero columns stay zero."""
    norms = column_norms(X)
    out = np.zeros_like(X)
    nz = norms > 0
    out[:, nz] = X[:, nz] / norms[nz]
    return out, norms
