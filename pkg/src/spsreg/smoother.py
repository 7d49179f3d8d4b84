"""Penalized least squares spline smoothing and GCV hyperparameter search."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_covariate, check_response
from .basis import BSplineBasis, difference_penalty
from .exceptions import RankDeficiencyError, SelectionError

# Past this spectral spread the normal equations carry no trustworthy digits.
_MAX_CONDITION = 1e15


def _factor_penalized_gram(gram, label):
    """Cholesky-factor Z'Z + lam*Q, rejecting singular or hopeless systems."""
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        eigvals = np.linalg.eigvalsh(gram)
        tol = gram.shape[0] * np.finfo(float).eps * max(eigvals.max(), 0.0)
        deficiency = int(np.sum(eigvals <= tol))
        raise RankDeficiencyError(
            f"{label} is singular: {deficiency} of {gram.shape[0]} coefficient "
            "directions are undetermined (more basis functions than the data "
            "and penalty can pin down)",
            deficiency=deficiency,
        ) from None
    diag = np.diag(factor[0])
    spread = (diag.max() / diag.min()) ** 2
    if not np.isfinite(spread) or spread > _MAX_CONDITION:
        raise RankDeficiencyError(
            f"{label} is numerically singular (condition estimate {spread:.2e})",
            deficiency=None,
        )
    return factor


@dataclass
class SplineFit:
    """A solved penalized spline system, with the pieces reused downstream."""

    basis: BSplineBasis
    penalty_order: int
    lam: float
    coef: np.ndarray = field(repr=False)
    design: np.ndarray = field(repr=False)
    factor: tuple = field(repr=False)
    fitted: np.ndarray = field(repr=False)
    rss: float = 0.0
    hat_trace: float = 0.0
    normal_residual: float = 0.0

    def predict(self, xs):
        x = check_covariate(xs, name="xs")
        return self.basis.design_matrix(x) @ self.coef


def fit_spline(xs, ys, degree=3, segments=10, penalty_order=2, lam=1.0):
    """Penalized least squares spline fit on [0, 1].

    Solves (Z'Z + lam * Q_m) b = Z'y for the coefficient vector, where Z is
    the B-spline design matrix and Q_m the order-m difference penalty.

    Parameters
    ----------
    xs, ys : array-like
        Covariates in [0, 1] and responses, same length.
    degree : int
        Spline degree p.
    segments : int
        Knot segments K; the basis has K + p functions.
    penalty_order : int
        Difference order m, 1 <= m < K + p.
    lam : float
        Penalty weight, >= 0.

    Returns
    -------
    SplineFit
    """
    x = check_covariate(xs, name="xs")
    y = check_response(ys, x.size, name="ys")
    lam = float(lam)
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    basis = BSplineBasis(degree, segments)
    if basis.size > x.size / 2:
        warnings.warn(
            f"basis has {basis.size} functions for {x.size} observations; "
            "fits this flexible are noisy even when they solve",
            stacklevel=2,
        )
    penalty = difference_penalty(penalty_order, basis.size)
    z = basis.design_matrix(x)
    ztz = z.T @ z
    gram = ztz + lam * penalty.matrix
    factor = _factor_penalized_gram(gram, "penalized spline system")
    zty = z.T @ y
    coef = scipy.linalg.cho_solve(factor, zty)

    fitted = z @ coef
    resid = y - fitted
    rss = float(resid @ resid)
    hat_trace = float(np.trace(scipy.linalg.cho_solve(factor, ztz)))
    scale = max(float(np.linalg.norm(zty)), 1.0)
    normal_residual = float(np.linalg.norm(gram @ coef - zty)) / scale
    return SplineFit(
        basis=basis,
        penalty_order=penalty_order,
        lam=lam,
        coef=coef,
        design=z,
        factor=factor,
        fitted=fitted,
        rss=rss,
        hat_trace=hat_trace,
        normal_residual=normal_residual,
    )


def default_segment_grid(n):
    """Candidate knot counts for GCV: 5 up to ceil(n/4), capped at 40."""
    hi = min(math.ceil(n / 4), 40)
    lo = min(5, max(hi, 2))
    hi = max(hi, lo)
    return list(range(lo, hi + 1))


def default_lambda_grid():
    """Candidate penalty weights: zero plus a log-spaced sweep 1e-4..1e4."""
    return np.concatenate([[0.0], np.logspace(-4.0, 4.0, 17)])


@dataclass
class GCVResult:
    """Outcome of a GCV grid search."""

    segments: int
    lam: float
    score: float
    table: np.ndarray = field(repr=False)  # columns: segments, lam, score


def gcv_search(
    xs,
    ys,
    degree=3,
    penalty_order=2,
    segment_grid=None,
    lambda_grid=None,
):
    """Pick (K, lam) for a penalized spline by generalized cross validation.

    GCV(K, lam) = n * RSS / (n - tr(H))^2 with H the smoother hat matrix.
    Candidates whose system is singular, or whose effective residual degrees
    of freedom n - tr(H) are not positive, are skipped. Exact score ties go
    to the smaller K, then the larger lam.

    Candidates are also skipped when their pointwise prediction variance
    exceeds the variance of a single observation anywhere on [0, 1]. GCV
    scores in-sample residuals only, so on small gappy designs a barely
    penalized candidate can interpolate the observed points while swinging
    wildly across a sparse knot span; such a fit is noisier than the raw
    data it smooths and is never a defensible winner.

    Returns
    -------
    GCVResult
        The winning pair plus the full score table (rows where the candidate
        was skipped carry an infinite score).
    """
    x = check_covariate(xs, name="xs")
    y = check_response(ys, x.size, name="ys")
    n = x.size
    if segment_grid is None:
        segment_grid = default_segment_grid(n)
    segment_grid = [int(k) for k in segment_grid]
    if lambda_grid is None:
        lambda_grid = default_lambda_grid()
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    if len(segment_grid) == 0 or lambda_grid.size == 0:
        raise ValueError("GCV grids must be non-empty")

    rows = []
    for k in segment_grid:
        basis = BSplineBasis(degree, k)
        penalty = difference_penalty(penalty_order, basis.size)
        z = basis.design_matrix(x)
        ztz = z.T @ z
        zty = z.T @ y
        # Variance factors are piecewise polynomials in the evaluation
        # point, so the knots plus a uniform fill locate their maximum.
        probe = np.unique(np.concatenate([np.linspace(0.0, 1.0, 101),
                                          np.arange(1, k) / k]))
        probe_design = basis.design_matrix(probe)
        for lam in lambda_grid:
            score = np.inf
            try:
                factor = _factor_penalized_gram(
                    ztz + lam * penalty.matrix, "GCV candidate"
                )
            except RankDeficiencyError:
                rows.append((k, lam, score))
                continue
            coef = scipy.linalg.cho_solve(factor, zty)
            smoother_rows = probe_design @ scipy.linalg.cho_solve(factor, z.T)
            if float(np.max(np.sum(smoother_rows**2, axis=1))) > 1.0:
                rows.append((k, lam, score))
                continue
            resid = y - z @ coef
            rss = float(resid @ resid)
            trace = float(np.trace(scipy.linalg.cho_solve(factor, ztz)))
            dof = n - trace
            if dof > 0:
                score = n * rss / dof**2
            rows.append((k, lam, score))

    table = np.array(rows)
    finite = np.isfinite(table[:, 2])
    if not finite.any():
        raise SelectionError(
            "every GCV candidate was singular or saturated; widen the data "
            "or shrink the knot grid"
        )
    # Sort order encodes the tie policy: smaller K first, larger lam first.
    order = sorted(
        np.flatnonzero(finite),
        key=lambda i: (table[i, 2], table[i, 0], -table[i, 1]),
    )
    best = table[order[0]]
    return GCVResult(
        segments=int(best[0]), lam=float(best[1]), score=float(best[2]), table=table
    )


class PenalizedSplineSmoother(BaseEstimator, RegressorMixin):
    """Penalized least squares spline regression on [0, 1].

    This is the plain nonparametric estimator: a degree-``p`` B-spline basis
    on ``K`` equal knot segments, fit by least squares with an order-``m``
    difference penalty on the coefficients. ``segments`` and ``lam`` may be
    fixed numbers or the string ``"gcv"``, in which case fit() picks them by
    generalized cross validation over the supplied (or default) grids.

    Parameters
    ----------
    degree : int, default=3
        Spline degree p.
    segments : int or "gcv", default="gcv"
        Number of knot segments K.
    penalty_order : int, default=2
        Difference order m of the coefficient penalty.
    lam : float or "gcv", default="gcv"
        Penalty weight.
    segment_grid : sequence of int, optional
        GCV candidates for K. Defaults to 5..ceil(n/4) capped at 40.
    lambda_grid : sequence of float, optional
        GCV candidates for lam. Defaults to {0} plus 17 log-spaced values
        between 1e-4 and 1e4.

    Attributes
    ----------
    segments_ : int
        Knot count actually used.
    lam_ : float
        Penalty weight actually used.
    gcv_ : GCVResult or None
        Search record when GCV ran.
    fit_ : SplineFit
        The solved system.
    """

    def __init__(
        self,
        degree=3,
        segments="gcv",
        penalty_order=2,
        lam="gcv",
        segment_grid=None,
        lambda_grid=None,
    ):
        self.degree = degree
        self.segments = segments
        self.penalty_order = penalty_order
        self.lam = lam
        self.segment_grid = segment_grid
        self.lambda_grid = lambda_grid

    def _resolve_hyperparameters(self, x, y):
        want_k = self.segments == "gcv"
        want_lam = self.lam == "gcv"
        if not (want_k or want_lam):
            return int(self.segments), float(self.lam), None
        segment_grid = self.segment_grid if want_k else [int(self.segments)]
        lambda_grid = self.lambda_grid if want_lam else [float(self.lam)]
        result = gcv_search(
            x,
            y,
            degree=self.degree,
            penalty_order=self.penalty_order,
            segment_grid=segment_grid,
            lambda_grid=lambda_grid,
        )
        return result.segments, result.lam, result

    def fit(self, X, y):
        """Fit the smoother; runs the GCV search first when requested."""
        x = check_covariate(X)
        y = check_response(y, x.size)
        segments, lam, gcv = self._resolve_hyperparameters(x, y)
        self.segments_ = segments
        self.lam_ = lam
        self.gcv_ = gcv
        self.fit_ = fit_spline(
            x,
            y,
            degree=self.degree,
            segments=segments,
            penalty_order=self.penalty_order,
            lam=lam,
        )
        self.coef_ = self.fit_.coef
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        x = check_covariate(X)
        return self.fit_.predict(x)
