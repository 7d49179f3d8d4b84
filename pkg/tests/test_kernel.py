"""Tests for local polynomial regression and its guided variant."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad

from spsreg import (
    BandwidthError,
    LocalPolynomialRegression,
    PositivityError,
    SemiparametricLocalLinear,
    default_bandwidth_grid,
    pilot_bandwidth_grid,
)
from spsreg.kernel import get_kernel


class TestKernels:
    @pytest.mark.parametrize("name,second_moment", [
        ("gaussian", 1.0),
        ("epanechnikov", 0.2),
    ])
    def test_mass_and_second_moment(self, name, second_moment):
        kernel = get_kernel(name)
        lo, hi = (-np.inf, np.inf) if name == "gaussian" else (-1.0, 1.0)
        mass, _ = quad(lambda z: kernel.weights(z), lo, hi)
        mu2, _ = quad(lambda z: z**2 * kernel.weights(z), lo, hi)
        assert_allclose(mass, 1.0, rtol=0.0, atol=1e-6)
        assert_allclose(mu2, second_moment, rtol=0.0, atol=1e-6)

    def test_unknown_kernel_rejected(self):
        with pytest.raises(ValueError):
            get_kernel("triweight")


class TestLocalPolynomial:
    @pytest.mark.parametrize("kernel", ["gaussian", "epanechnikov"])
    @pytest.mark.parametrize("bandwidth", [0.05, 0.2, 0.8])
    def test_reproduces_straight_lines(self, kernel, bandwidth):
        # Data exactly on a line is fit exactly by every local linear
        # smooth, interior and boundary alike.
        x = np.linspace(0.0, 1.0, 60)
        y = 1.5 - 0.7 * x
        est = LocalPolynomialRegression(
            degree=1, kernel=kernel, bandwidth=bandwidth,
        ).fit(x, y)
        grid = np.linspace(0.0, 1.0, 21)
        assert_allclose(est.predict(grid), 1.5 - 0.7 * grid,
                        rtol=0.0, atol=1e-9)
        ders = est.predict_derivatives(grid, 1)
        assert_allclose(ders[:, 1], -0.7, rtol=0.0, atol=1e-8)

    def test_cubic_fit_reproduces_cubic_derivatives(self):
        x = np.linspace(0.0, 1.0, 80)
        y = 1.0 + x - 2.0 * x**2 + 0.5 * x**3
        est = LocalPolynomialRegression(degree=3, bandwidth=0.3).fit(x, y)
        grid = np.linspace(0.1, 0.9, 9)
        ders = est.predict_derivatives(grid, 3)
        assert_allclose(ders[:, 0], 1.0 + grid - 2.0 * grid**2 + 0.5 * grid**3,
                        rtol=0.0, atol=1e-8)
        assert_allclose(ders[:, 1], 1.0 - 4.0 * grid + 1.5 * grid**2,
                        rtol=0.0, atol=1e-7)
        assert_allclose(ders[:, 2], -4.0 + 3.0 * grid, rtol=0.0, atol=1e-6)
        assert_allclose(ders[:, 3], 3.0, rtol=0.0, atol=1e-5)

    def test_constant_response_is_reproduced_at_any_bandwidth(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(0.0, 1.0, 50)
        est = LocalPolynomialRegression(degree=1, bandwidth=0.07).fit(
            x, np.full(50, 2.2)
        )
        assert_allclose(est.predict(np.linspace(0.0, 1.0, 31)), 2.2,
                        rtol=0.0, atol=1e-10)

    def test_huge_bandwidth_becomes_global_least_squares(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(0.0, 1.0, 60)
        y = 1.0 + 2.0 * x + rng.normal(0.0, 0.3, 60)
        est = LocalPolynomialRegression(degree=1, bandwidth=500.0).fit(x, y)
        slope, intercept = np.polyfit(x, y, 1)
        grid = np.linspace(0.0, 1.0, 11)
        assert_allclose(est.predict(grid), intercept + slope * grid,
                        rtol=0.0, atol=1e-6)

    def test_second_derivative_pilot_is_unbiased_at_inflection(self):
        # f'' of 2 + sin(2 pi x) vanishes at x = 0.5; the cubic pilot
        # should sit near zero against a curvature scale of 4 pi^2.
        x = np.linspace(0.0, 1.0, 500)
        y = 2.0 + np.sin(2.0 * np.pi * x)
        est = LocalPolynomialRegression(degree=3, bandwidth=0.1).fit(x, y)
        second = est.predict_derivatives([0.5], 2)[0, 2]
        assert abs(second) < 0.5

    def test_derivative_error_shrinks_with_sample_size(self):
        # Noiseless data: the only error is polynomial approximation bias,
        # which falls with the bandwidth as n grows.
        errors = []
        for n in [100, 500, 2000]:
            x = np.linspace(0.0, 1.0, n)
            y = np.sin(2.0 * np.pi * x)
            h = 0.5 * n ** (-1.0 / 9.0)
            est = LocalPolynomialRegression(degree=3, bandwidth=h).fit(x, y)
            grid = np.linspace(0.1, 0.9, 17)
            slopes = est.predict_derivatives(grid, 1)[:, 1]
            errors.append(np.max(np.abs(
                slopes - 2.0 * np.pi * np.cos(2.0 * np.pi * grid)
            )))
        assert errors[0] > errors[1] > errors[2]

    def test_sparse_neighborhood_widens_until_identified(self):
        # No observations near zero: the fit must widen its window rather
        # than return garbage or crash.
        rng = np.random.default_rng(7)
        x = rng.uniform(0.5, 1.0, 40)
        y = 1.0 + x
        est = LocalPolynomialRegression(
            degree=1, kernel="epanechnikov", bandwidth=0.01,
        ).fit(x, y)
        pred = est.predict([0.0])
        assert np.all(np.isfinite(pred))
        assert_allclose(pred, 1.0, rtol=0.0, atol=1e-8)

    def test_unidentifiable_design_raises(self):
        # Three observations can never support a cubic local fit.
        x = np.array([0.2, 0.5, 0.8])
        y = np.array([1.0, 2.0, 3.0])
        est = LocalPolynomialRegression(degree=3, bandwidth=0.1).fit(x, y)
        with pytest.raises(BandwidthError):
            est.predict([0.5])

    def test_derivative_order_capped_by_degree(self):
        x = np.linspace(0.0, 1.0, 30)
        est = LocalPolynomialRegression(degree=1, bandwidth=0.2).fit(x, x)
        with pytest.raises(ValueError):
            est.predict_derivatives([0.5], 2)


class TestBandwidthSelection:
    def test_grids_scale_with_sample_size(self):
        grid = default_bandwidth_grid(100)
        assert grid.size == 12
        assert_allclose(grid[0], 0.02)
        assert_allclose(grid[-1], 1.0)
        assert_allclose(default_bandwidth_grid(25)[0], 0.08)
        pilot = pilot_bandwidth_grid(100)
        assert pilot.size == 10
        assert_allclose(pilot[0], 0.02)
        assert_allclose(pilot[-1], 0.4)

    def test_cv_picks_from_the_grid(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(0.0, 1.0, 60)
        y = np.sin(2.0 * np.pi * x) + rng.normal(0.0, 0.2, 60)
        est = LocalPolynomialRegression(degree=1, bandwidth="cv").fit(x, y)
        assert est.bandwidth_ in default_bandwidth_grid(60)
        assert est.cv_scores_.size == 12
        chosen = np.flatnonzero(default_bandwidth_grid(60) == est.bandwidth_)[0]
        assert est.cv_scores_[chosen] == np.min(est.cv_scores_)

    def test_perfect_scores_tie_to_the_smallest_bandwidth(self):
        # A zero response gives zero leave-one-out error everywhere.
        rng = np.random.default_rng(13)
        x = rng.uniform(0.0, 1.0, 40)
        est = LocalPolynomialRegression(degree=1, bandwidth="cv").fit(
            x, np.zeros(40)
        )
        assert est.bandwidth_ == default_bandwidth_grid(40)[0]

    def test_oversmoothing_penalized_on_wiggly_signal(self):
        rng = np.random.default_rng(17)
        x = rng.uniform(0.0, 1.0, 100)
        y = np.sin(4.0 * np.pi * x) + rng.normal(0.0, 0.1, 100)
        est = LocalPolynomialRegression(degree=1, bandwidth="cv").fit(x, y)
        assert est.bandwidth_ < 0.3

    def test_invalid_grid_rejected(self):
        x = np.linspace(0.0, 1.0, 30)
        with pytest.raises(ValueError):
            LocalPolynomialRegression(bandwidth="cv", bandwidth_grid=[]).fit(x, x)
        with pytest.raises(ValueError):
            LocalPolynomialRegression(bandwidth="cv",
                                      bandwidth_grid=[-0.1, 0.2]).fit(x, x)


class TestSemiparametricLocalLinear:
    def test_noiseless_in_family_data_is_reproduced(self):
        x = np.linspace(0.0, 1.0, 50)
        y = 2.0 + np.sin(2.0 * np.pi * x)
        for gamma in (0, 1):
            est = SemiparametricLocalLinear(
                model="sin", gamma=gamma, bandwidth=0.2,
            ).fit(x, y)
            assert_allclose(est.predict(x), y, rtol=0.0, atol=1e-8)

    def test_matches_manual_composition(self):
        rng = np.random.default_rng(19)
        x = rng.uniform(0.0, 1.0, 50)
        y = 2.0 + np.sin(2.0 * np.pi * x) + rng.normal(0.0, 0.25, 50)
        est = SemiparametricLocalLinear(
            model="sin", gamma=1, bandwidth=0.15,
        ).fit(x, y)
        guide = est.parametric_.value(x)
        corrected = (y - guide) / guide
        local = LocalPolynomialRegression(degree=1, bandwidth=0.15).fit(
            x, corrected
        )
        grid = np.linspace(0.0, 1.0, 31)
        guide_grid = est.parametric_.value(grid)
        expected = guide_grid + guide_grid * local.predict(grid)
        assert_allclose(est.predict(grid), expected, rtol=0.0, atol=1e-12)

    def test_good_guide_beats_plain_local_linear(self):
        # When the guide captures the signal, the residual smooth has an
        # easy job; the unguided fit at the same bandwidth oversmooths.
        grid = np.linspace(0.05, 0.95, 37)
        truth = 2.0 + np.sin(2.0 * np.pi * grid)
        guided_err, plain_err = 0.0, 0.0
        for rep in range(30):
            rng = np.random.default_rng(1000 + rep)
            x = rng.uniform(0.0, 1.0, 50)
            y = 2.0 + np.sin(2.0 * np.pi * x) + rng.normal(0.0, 0.25, 50)
            guided = SemiparametricLocalLinear(
                model="sin", gamma=0, bandwidth=0.15,
            ).fit(x, y)
            plain = LocalPolynomialRegression(degree=1, bandwidth=0.15).fit(x, y)
            guided_err += np.mean((guided.predict(grid) - truth) ** 2)
            plain_err += np.mean((plain.predict(grid) - truth) ** 2)
        assert guided_err < plain_err / 2.0

    def test_positivity_guard_for_ratio_corrections(self):
        rng = np.random.default_rng(23)
        x = rng.uniform(0.0, 1.0, 40)
        y = x - 0.5 + rng.normal(0.0, 0.05, 40)
        with pytest.raises(PositivityError):
            SemiparametricLocalLinear(model="poly1", gamma=1,
                                      bandwidth=0.2).fit(x, y)

    def test_exposes_stage_attributes(self):
        rng = np.random.default_rng(29)
        x = rng.uniform(0.0, 1.0, 40)
        y = 2.0 + np.sin(2.0 * np.pi * x) + rng.normal(0.0, 0.2, 40)
        est = SemiparametricLocalLinear(model="sin", bandwidth="cv").fit(x, y)
        assert est.bandwidth_ == est.local_.bandwidth_
        assert est.bandwidth_ in default_bandwidth_grid(40)
        guide = est.parametric_.value(x)
        assert_allclose(est.residuals_, y - guide, rtol=1e-12)
