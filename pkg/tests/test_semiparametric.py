"""Tests for the parametrically guided spline estimator.

The estimator is a two-stage composition: an OLS guide fit, then a
penalized spline smooth of the (possibly guide-scaled) residuals, recombined
as guide + guide^gamma * smooth. The oracle tests below rebuild both stages
with plain dense linear algebra.
"""

import numpy as np
import pytest
import scipy.stats
from numpy.testing import assert_allclose
from sklearn.base import clone

from spsreg import (
    BSplineBasis,
    PenalizedSplineSmoother,
    PositivityError,
    SemiparametricSplineEstimator,
    difference_penalty,
    gcv_search,
    parse_family,
)


def sine_data(n, noise_sd, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, n)
    y = scale * (2.0 + np.sin(2.0 * np.pi * x)) + rng.normal(0.0, noise_sd, n)
    return x, y


def oracle_two_stage(x, y, z, gamma, segments, lam):
    """Dense reference: OLS sine guide, penalized residual smooth."""
    design = np.column_stack([np.ones_like(x), np.sin(2.0 * np.pi * x)])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    guide_x = design @ beta
    corrected = (y - guide_x) / guide_x**gamma
    basis = BSplineBasis(3, segments)
    zmat = basis.design_matrix(x)
    q = difference_penalty(2, basis.size).matrix
    coef = np.linalg.solve(zmat.T @ zmat + lam * q, zmat.T @ corrected)
    guide_z = beta[0] + beta[1] * np.sin(2.0 * np.pi * z)
    return guide_z + guide_z**gamma * (basis.design_matrix(z) @ coef)


class TestExactReproduction:
    @pytest.mark.parametrize("gamma", [0, 1])
    @pytest.mark.parametrize("scale", [0.5, 1.0, 3.0])
    def test_noiseless_in_family_data_is_reproduced(self, gamma, scale):
        # With a correctly specified guide the corrected residuals vanish,
        # so the smoothing stage has nothing to add at either gamma and the
        # estimate equals the truth no matter how the data are scaled.
        x, y = sine_data(40, 0.0, seed=3, scale=scale)
        est = SemiparametricSplineEstimator(
            model="sin", gamma=gamma, segments=6, lam=1.0,
        ).fit(x, y)
        assert_allclose(est.predict(x), y, rtol=0.0, atol=1e-8)
        grid = np.linspace(0.0, 1.0, 101)
        truth = scale * (2.0 + np.sin(2.0 * np.pi * grid))
        assert_allclose(est.predict(grid), truth, rtol=0.0, atol=1e-8)
        assert np.max(np.abs(est.residuals_)) < 1e-10


class TestTwoStageComposition:
    @pytest.mark.parametrize("gamma", [0, 1])
    def test_matches_dense_oracle(self, gamma):
        x, y = sine_data(25, 0.25, seed=20260401)
        est = SemiparametricSplineEstimator(
            model="sin", gamma=gamma, segments=5, lam=2.0,
        ).fit(x, y)
        grid = np.linspace(0.0, 1.0, 101)
        assert_allclose(est.predict(grid),
                        oracle_two_stage(x, y, grid, gamma, 5, 2.0),
                        rtol=1e-8, atol=1e-10)

    def test_fitted_attributes_expose_the_stages(self):
        x, y = sine_data(30, 0.25, seed=7)
        est = SemiparametricSplineEstimator(
            model="sin", gamma=1, segments=5, lam=2.0,
        ).fit(x, y)
        guide_x = est.parametric_.value(x)
        assert_allclose(est.residuals_, (y - guide_x) / guide_x, rtol=1e-12)
        assert est.segments_ == 5
        assert est.lam_ == 2.0
        assert est.gcv_ is None
        assert est.gamma_ == 1

    def test_hyperparameter_search_runs_on_corrected_residuals(self):
        x, y = sine_data(60, 0.25, seed=11)
        est = SemiparametricSplineEstimator(model="sin", gamma=1).fit(x, y)
        guide_x = est.parametric_.value(x)
        manual = gcv_search(x, (y - guide_x) / guide_x, degree=3, penalty_order=2)
        assert est.segments_ == manual.segments
        assert est.lam_ == manual.lam
        assert est.gcv_.score == manual.score


class TestConstantModelCollapse:
    @pytest.mark.parametrize("lam", [0.0, 2.5])
    def test_constant_guide_reduces_to_plain_smoother(self, lam):
        # The constant guide is the sample mean; shifting the data by a
        # constant commutes with the smoother because flat coefficient
        # vectors are unpenalized, so the guided fit is the plain fit.
        x, y = sine_data(50, 0.25, seed=13)
        guided = SemiparametricSplineEstimator(
            model="const", gamma=0, segments=6, lam=lam,
        ).fit(x, y)
        plain = PenalizedSplineSmoother(segments=6, lam=lam).fit(x, y)
        grid = np.linspace(0.0, 1.0, 201)
        assert_allclose(guided.predict(grid), plain.predict(grid),
                        rtol=0.0, atol=1e-8)


class TestGammaExchange:
    def test_unit_guide_makes_gamma_irrelevant(self):
        # With the guide pinned to the constant one, the residual scaling
        # and the recombination factor are both unity.
        x, y = sine_data(40, 0.25, seed=17)
        pinned = parse_family("const").with_coefficients([1.0])
        fits = [
            SemiparametricSplineEstimator(
                model=pinned, gamma=g, segments=6, lam=1.0,
            ).fit(x, y)
            for g in (0, 1)
        ]
        grid = np.linspace(0.0, 1.0, 101)
        assert_allclose(fits[0].predict(grid), fits[1].predict(grid),
                        rtol=0.0, atol=1e-12)


class TestPositivityGuard:
    def test_sign_changing_guide_rejected_for_ratio_corrections(self):
        rng = np.random.default_rng(19)
        x = rng.uniform(0.0, 1.0, 40)
        y = x - 0.5 + rng.normal(0.0, 0.05, 40)
        with pytest.raises(PositivityError):
            SemiparametricSplineEstimator(
                model="poly1", gamma=1, segments=5, lam=1.0,
            ).fit(x, y)

    def test_same_guide_is_fine_for_additive_corrections(self):
        rng = np.random.default_rng(19)
        x = rng.uniform(0.0, 1.0, 40)
        y = x - 0.5 + rng.normal(0.0, 0.05, 40)
        est = SemiparametricSplineEstimator(
            model="poly1", gamma=0, segments=5, lam=1.0,
        ).fit(x, y)
        assert np.all(np.isfinite(est.predict(x)))

    def test_invalid_gamma_rejected(self):
        x, y = sine_data(30, 0.25, seed=23)
        with pytest.raises(ValueError):
            SemiparametricSplineEstimator(gamma=2, segments=5, lam=1.0).fit(x, y)


class TestConfidenceIntervals:
    def test_centered_on_the_estimate(self):
        x, y = sine_data(60, 0.25, seed=29)
        est = SemiparametricSplineEstimator(
            model="sin", gamma=0, segments=6, lam=1.0,
        ).fit(x, y)
        grid = np.linspace(0.0, 1.0, 51)
        lo, hi = est.confidence_interval(grid, level=0.95)
        pred = est.predict(grid)
        assert np.all(lo <= pred + 1e-12)
        assert np.all(pred <= hi + 1e-12)
        assert_allclose((lo + hi) / 2.0, pred, rtol=0.0, atol=1e-10)

    def test_zero_residuals_collapse_the_band(self):
        x, y = sine_data(40, 0.0, seed=31)
        est = SemiparametricSplineEstimator(
            model="sin", gamma=0, segments=6, lam=1.0,
        ).fit(x, y)
        grid = np.linspace(0.0, 1.0, 21)
        lo, hi = est.confidence_interval(grid)
        assert_allclose(hi - lo, 0.0, rtol=0.0, atol=1e-10)

    def test_scaling_the_data_scales_the_band_width(self):
        x, y = sine_data(60, 0.25, seed=37)
        base = SemiparametricSplineEstimator(
            model="sin", gamma=0, segments=6, lam=1.0,
        ).fit(x, y)
        doubled = SemiparametricSplineEstimator(
            model="sin", gamma=0, segments=6, lam=1.0,
        ).fit(x, 2.0 * y)
        grid = np.linspace(0.0, 1.0, 51)
        lo1, hi1 = base.confidence_interval(grid)
        lo2, hi2 = doubled.confidence_interval(grid)
        assert_allclose(hi2 - lo2, 2.0 * (hi1 - lo1), rtol=1e-10)

    def test_wider_at_higher_confidence(self):
        x, y = sine_data(60, 0.25, seed=41)
        est = SemiparametricSplineEstimator(
            model="sin", gamma=0, segments=6, lam=1.0,
        ).fit(x, y)
        grid = np.linspace(0.05, 0.95, 19)
        lo90, hi90 = est.confidence_interval(grid, level=0.90)
        lo99, hi99 = est.confidence_interval(grid, level=0.99)
        assert np.all(hi99 - lo99 > hi90 - lo90)
        ratio = (hi99 - lo99) / (hi90 - lo90)
        expected = scipy.stats.norm.ppf(0.995) / scipy.stats.norm.ppf(0.95)
        assert_allclose(ratio, expected, rtol=1e-10)

    def test_bad_level_rejected(self):
        x, y = sine_data(30, 0.25, seed=43)
        est = SemiparametricSplineEstimator(segments=5, lam=1.0).fit(x, y)
        with pytest.raises(ValueError):
            est.confidence_interval([0.5], level=1.5)


class TestEstimatorProtocol:
    def test_clone_preserves_parameters(self):
        est = SemiparametricSplineEstimator(model="sin", gamma=1, segments=7,
                                            lam=0.5, degree=2)
        copy = clone(est)
        assert copy.get_params() == est.get_params()

    def test_predict_before_fit_raises(self):
        with pytest.raises(Exception):
            SemiparametricSplineEstimator().predict([0.5])

    def test_refit_overwrites_state(self):
        x, y = sine_data(40, 0.25, seed=47)
        est = SemiparametricSplineEstimator(model="sin", segments=5, lam=1.0)
        first = est.fit(x, y).predict([0.5])[0]
        x2, y2 = sine_data(40, 0.25, seed=48)
        second = est.fit(x2, y2).predict([0.5])[0]
        assert first != second
