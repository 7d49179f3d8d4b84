"""Local polynomial regression, and the local linear competitor estimators.

These are the comparison arms of the simulation studies and the pilot used
by the selection criteria. Fits are classical weighted least squares on
covariates centered at the evaluation point; the coefficient of (x - x0)^j
times j! estimates the j-th derivative.
"""

import math
from dataclasses import dataclass

import numpy as np

from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_covariate, check_response
from .exceptions import BandwidthError
from .parametric import FittedParametricModel, fit_ols, resolve_family


@dataclass(frozen=True)
class KernelSpec:
    """A smoothing kernel with the radius used for support counting."""

    name: str
    halfwidth: float

    def weights(self, z):
        z = np.asarray(z, dtype=float)
        if self.name == "gaussian":
            return np.exp(-0.5 * z**2) / math.sqrt(2.0 * math.pi)
        # epanechnikov
        return 0.75 * np.clip(1.0 - z**2, 0.0, None)


# Gaussian support is cut where the weight falls to 1e-10 of its peak.
KERNELS = {
    "gaussian": KernelSpec("gaussian", math.sqrt(-2.0 * math.log(1e-10))),
    "epanechnikov": KernelSpec("epanechnikov", 1.0),
}


def get_kernel(kernel):
    if isinstance(kernel, KernelSpec):
        return kernel
    try:
        return KERNELS[kernel]
    except KeyError:
        raise ValueError(
            f"unknown kernel {kernel!r}; choose from {sorted(KERNELS)}"
        ) from None


def default_bandwidth_grid(n):
    """Log-spaced candidate bandwidths for leave-one-out selection."""
    lo = max(2.0 / n, 0.02)
    return np.geomspace(lo, 1.0, 12)


def pilot_bandwidth_grid(n):
    """Bandwidth grid for derivative pilots.

    Tops out well below the domain width: cross-validation scores only
    function values, and on small samples it drifts to the widest window
    offered, where the "local" fit degenerates into one global polynomial
    and its derivatives collapse onto that polynomial's.
    """
    lo = max(2.0 / n, 0.02)
    hi = max(0.4, 2.0 * lo)
    return np.geomspace(lo, hi, 10)


def _solve_local(x, y, x0, degree, kernel, h, max_widenings):
    """One weighted local fit; widens h when the design is degenerate.

    Returns (theta, h_used, gram_inv_00) where theta[j] estimates
    f^(j)(x0) * h^j / j! in the scaled coordinates (u / h).
    """
    u = x - x0
    h_used = h
    for _ in range(max_widenings + 1):
        z = u / h_used
        w = kernel.weights(z)
        in_support = np.abs(z) <= kernel.halfwidth
        if int(in_support.sum()) >= degree + 1:
            sw = np.sqrt(w)
            design = np.vander(z, degree + 1, increasing=True)
            wd = design * sw[:, None]
            gram = wd.T @ wd
            rhs = wd.T @ (sw * y)
            try:
                chol = np.linalg.cholesky(gram)
            except np.linalg.LinAlgError:
                h_used *= 2.0
                continue
            theta = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
            e0 = np.zeros(degree + 1)
            e0[0] = 1.0
            m00 = np.linalg.solve(chol.T, np.linalg.solve(chol, e0))[0]
            return theta, h_used, m00
        h_used *= 2.0
    raise BandwidthError(
        f"local design at x = {x0:g} stays degenerate after "
        f"{max_widenings} bandwidth doublings (started at h = {h:g})"
    )


def _loocv_score(x, y, degree, kernel, h, max_widenings):
    """Leave-one-out squared error through the linear-smoother shortcut."""
    total = 0.0
    k0 = float(kernel.weights(0.0))
    for i in range(x.size):
        theta, h_used, m00 = _solve_local(
            x, y, x[i], degree, kernel, h, max_widenings
        )
        leverage = m00 * k0
        denom = 1.0 - leverage
        if denom <= 1e-10:
            return np.inf
        total += ((y[i] - theta[0]) / denom) ** 2
    return total


class LocalPolynomialRegression(BaseEstimator, RegressorMixin):
    """Kernel-weighted local polynomial fitting on [0, 1].

    With degree 1 this is the usual local linear regression estimator.
    Higher degrees serve as derivative pilots: predict_derivatives exposes
    every derivative the local polynomial identifies.

    Parameters
    ----------
    degree : int, default=1
        Local polynomial degree.
    kernel : {"gaussian", "epanechnikov"}, default="gaussian"
    bandwidth : float or "cv", default="cv"
        Fixed bandwidth, or leave-one-out selection over bandwidth_grid.
    bandwidth_grid : sequence, optional
        Candidates for "cv"; defaults to a log-spaced grid that scales its
        lower end with n. Ties go to the smaller bandwidth.
    max_widenings : int, default=6
        Bandwidth doublings allowed at points whose local design is
        degenerate (boundaries, sparse regions) before giving up.
    """

    def __init__(
        self,
        degree=1,
        kernel="gaussian",
        bandwidth="cv",
        bandwidth_grid=None,
        max_widenings=6,
    ):
        self.degree = degree
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.bandwidth_grid = bandwidth_grid
        self.max_widenings = max_widenings

    def fit(self, X, y):
        x = check_covariate(X)
        y = check_response(y, x.size)
        if int(self.degree) < 0:
            raise ValueError(f"degree must be >= 0, got {self.degree}")
        kernel = get_kernel(self.kernel)
        if self.bandwidth == "cv":
            grid = self.bandwidth_grid
            grid = default_bandwidth_grid(x.size) if grid is None else np.asarray(
                grid, dtype=float
            )
            if grid.size == 0 or np.any(grid <= 0):
                raise ValueError("bandwidth_grid must hold positive values")
            scores = np.array(
                [
                    _loocv_score(x, y, int(self.degree), kernel, h,
                                 int(self.max_widenings))
                    for h in grid
                ]
            )
            if not np.isfinite(scores).any():
                raise BandwidthError(
                    "no candidate bandwidth produced a stable leave-one-out fit"
                )
            chosen = float(grid[int(np.argmin(scores))])
            self.cv_scores_ = scores
        else:
            chosen = float(self.bandwidth)
            if chosen <= 0:
                raise ValueError(f"bandwidth must be positive, got {chosen}")
            self.cv_scores_ = None
        self.bandwidth_ = chosen
        self.kernel_ = kernel
        self.x_ = x
        self.y_ = y
        return self

    def predict_derivatives(self, X, max_order):
        """Estimates of f, f', ..., f^(max_order) at each point.

        Returns an array of shape (len(X), max_order + 1); column j holds the
        j-th derivative estimate j! * theta_j from the local fit.
        """
        check_is_fitted(self, "bandwidth_")
        max_order = int(max_order)
        if not 0 <= max_order <= int(self.degree):
            raise ValueError(
                f"a degree {self.degree} local fit identifies derivatives "
                f"0..{self.degree}, not {max_order}"
            )
        x = check_covariate(X)
        out = np.empty((x.size, max_order + 1))
        for idx, x0 in enumerate(x):
            theta, h_used, _ = _solve_local(
                self.x_,
                self.y_,
                x0,
                int(self.degree),
                self.kernel_,
                self.bandwidth_,
                int(self.max_widenings),
            )
            for j in range(max_order + 1):
                out[idx, j] = math.factorial(j) * theta[j] / h_used**j
        return out

    def predict(self, X, derivative=0):
        ders = self.predict_derivatives(X, derivative)
        return ders[:, int(derivative)]


class SemiparametricLocalLinear(BaseEstimator, RegressorMixin):
    """Parametric guide corrected by local linear smoothing of residuals.

    The local-regression counterpart of the spline two-stage estimator:
    same correction algebra, but the residual smoother is a local linear
    fit instead of a penalized spline.

    Parameters mirror SemiparametricSplineEstimator where they overlap;
    kernel, bandwidth and bandwidth_grid configure the local stage.
    """

    def __init__(
        self,
        model="const",
        gamma=0,
        kernel="gaussian",
        bandwidth="cv",
        bandwidth_grid=None,
        positivity_floor=1e-3,
    ):
        self.model = model
        self.gamma = gamma
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.bandwidth_grid = bandwidth_grid
        self.positivity_floor = positivity_floor

    def fit(self, X, y):
        x = check_covariate(X)
        y = check_response(y, x.size)
        gamma = self.gamma
        if gamma not in (0, 1):
            raise ValueError(f"gamma must be 0 or 1, got {gamma!r}")
        gamma = int(gamma)

        resolved = resolve_family(self.model)
        if isinstance(resolved, FittedParametricModel):
            guide = resolved
        else:
            guide = fit_ols(resolved, x, y)
        if gamma == 1:
            guide.check_positive(self.positivity_floor)

        guide_at_x = guide.value(x)
        resid = (y - guide_at_x) / guide_at_x**gamma
        self.parametric_ = guide
        self.gamma_ = gamma
        self.residuals_ = resid
        self.local_ = LocalPolynomialRegression(
            degree=1,
            kernel=self.kernel,
            bandwidth=self.bandwidth,
            bandwidth_grid=self.bandwidth_grid,
        ).fit(x, resid)
        self.bandwidth_ = self.local_.bandwidth_
        return self

    def predict(self, X):
        check_is_fitted(self, "local_")
        x = check_covariate(X)
        guide = self.parametric_.value(x)
        return guide + guide**self.gamma_ * self.local_.predict(x)
