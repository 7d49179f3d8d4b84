"""Input checks shared by the estimators."""

import numpy as np

from .exceptions import DomainError


def check_covariate(X, name="X"):
    """Coerce covariates to a 1d float array on [0, 1].

    Accepts a flat array-like or a single-column 2d array (the shape sklearn
    pipelines hand over). Anything wider is rejected: the estimators are
    univariate by construction.
    """
    x = np.asarray(X, dtype=float)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 1:
        raise ValueError(
            f"{name} must be one-dimensional or a single column, "
            f"got shape {np.shape(X)}"
        )
    if x.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    if x.min() < 0.0 or x.max() > 1.0:
        raise DomainError(
            f"{name} values must lie in [0, 1], observed range "
            f"[{x.min():g}, {x.max():g}]"
        )
    return x


def check_response(y, n_expected, name="y"):
    """Coerce the response to a 1d float array of the expected length."""
    arr = np.asarray(y, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.shape[0] != n_expected:
        raise ValueError(
            f"{name} has {arr.shape[0]} entries but the covariate has {n_expected}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr
