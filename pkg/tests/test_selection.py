"""Tests for the pointwise model-comparison criteria and candidate scoring.

The cleanest oracle is a noiseless cubic: the cubic pilot reproduces it
exactly, so a cubic candidate hits every grid point while a constant
candidate, which changes neither the high derivative nor the penalized
roughness of the correction, hits none.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from spsreg import (
    LocalPolynomialRegression,
    count_criteria,
    l_hat_a,
    l_hat_lambda,
    model_library,
    parse_family,
)
from spsreg.selection import selection_grid


def cubic_data(n=60, seed=51):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0.0, 1.0, n))
    return x, 2.0 + x + x**3


def noisy_sine_data(n=60, seed=20260401):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, n)
    y = 2.0 + np.sin(2.0 * np.pi * x) + rng.normal(0.0, 0.25, n)
    return x, y


class TestGrid:
    def test_points_are_strictly_interior(self):
        grid = selection_grid(100)
        assert grid.size == 100
        assert_allclose(grid, np.arange(1, 101) / 101.0, rtol=1e-15)
        assert grid[0] > 0.0
        assert grid[-1] < 1.0

    def test_bad_size_rejected(self):
        with pytest.raises(ValueError):
            selection_grid(0)


class TestPointwiseImprovements:
    @pytest.fixture
    def pilot(self):
        x, y = noisy_sine_data()
        return LocalPolynomialRegression(degree=3, bandwidth=0.2).fit(x, y)

    def test_additive_form_recomputed_directly(self, pilot):
        # For additive corrections the statistic is the gap between the
        # second-derivative magnitudes of the pilot and of the correction.
        grid = selection_grid(50)
        model = parse_family("const + sin(2)").with_coefficients([2.0, 1.0])
        values = l_hat_a(grid, pilot, model, gamma=0, degree=1)
        ders = pilot.predict_derivatives(grid, 2)
        expected = np.abs(ders[:, 2]) - np.abs(
            ders[:, 2] - model.derivative(grid, 2)
        )
        assert_allclose(values, expected, rtol=0.0, atol=1e-12)

    def test_constant_guide_changes_nothing(self, pilot):
        # A constant guide leaves the (p+1)-th derivative of the correction
        # equal to the pilot's, so the comparison is an exact wash.
        grid = selection_grid(50)
        model = parse_family("const").with_coefficients([2.0])
        assert_allclose(l_hat_a(grid, pilot, model, gamma=0, degree=1),
                        0.0, rtol=0.0, atol=1e-12)
        x, _ = noisy_sine_data()
        values = l_hat_lambda(grid, pilot, model, x, gamma=0, degree=1,
                              segments=8, penalty_order=2, lam=1.0)
        assert_allclose(values, 0.0, rtol=0.0, atol=1e-10)

    def test_unit_guide_equates_both_corrections(self, pilot):
        grid = selection_grid(50)
        model = parse_family("const").with_coefficients([1.0])
        additive = l_hat_a(grid, pilot, model, gamma=0, degree=1)
        ratio = l_hat_a(grid, pilot, model, gamma=1, degree=1)
        assert_allclose(ratio, additive, rtol=0.0, atol=1e-12)
        x, _ = noisy_sine_data()
        kwargs = dict(degree=1, segments=8, penalty_order=2, lam=1.0)
        assert_allclose(
            l_hat_lambda(grid, pilot, model, x, gamma=1, **kwargs),
            l_hat_lambda(grid, pilot, model, x, gamma=0, **kwargs),
            rtol=0.0, atol=1e-12,
        )

    def test_perfect_guide_wins_everywhere(self):
        x, y = cubic_data()
        pilot = LocalPolynomialRegression(degree=3, bandwidth=0.2).fit(x, y)
        grid = selection_grid(100)
        cubic = next(f for f in model_library(2) if f.name == "poly3")
        fitted = cubic.with_coefficients([2.0, 1.0, 0.0, 1.0])
        values = l_hat_a(grid, pilot, fitted, gamma=0, degree=1)
        assert np.all(values > 0.0)
        # base magnitude is |f''| = 6x exactly; the guided side vanishes
        assert_allclose(values, 6.0 * grid, rtol=0.0, atol=1e-6)


class TestCountCriteria:
    def test_perfect_candidate_sweeps_the_grid(self):
        x, y = cubic_data()
        report = count_criteria(x, y, ["poly3", "const"], gamma=0, degree=1,
                                working=(10, 1.0), example=2)
        cubic, const = report.candidates
        assert (cubic.name, cubic.c_a, cubic.c_lambda, cubic.c_both) == \
            ("poly3", 100, 100, 100)
        assert (const.name, const.c_a, const.c_lambda, const.c_both) == \
            ("const", 0, 0, 0)
        assert report.winner("c_both") == "poly3"
        assert report.winner("aic") == "poly3"
        assert report.winner("tic") == "poly3"

    def test_counts_scale_with_grid_resolution(self):
        x, y = cubic_data()
        fine = count_criteria(x, y, ["poly3", "const"], gamma=0, degree=1,
                              working=(10, 1.0), grid_size=200, example=2)
        assert fine.candidates[0].c_both == 200
        assert fine.candidates[1].c_both == 0
        assert fine.winner("c_both") == "poly3"

    def test_unpenalized_working_fit_concedes_the_penalty_count(self):
        # With lam = 0 there is no penalty bias to compare, so every
        # candidate is granted the full count and the joint criterion
        # reduces to the derivative one.
        x, y = cubic_data()
        report = count_criteria(x, y, ["poly3", "const"], gamma=0, degree=1,
                                working=(10, 0.0), example=2)
        for cand in report.candidates:
            assert cand.c_lambda == 100
            assert cand.c_both == cand.c_a
        assert report.winner("c_both") == report.winner("c_a") == "poly3"
        # every candidate ties on c_lambda; fewest parameters wins it
        assert report.winner("c_lambda") == "const"

    def test_count_ordering_invariants(self):
        x, y = noisy_sine_data()
        report = count_criteria(x, y, ["sin", "poly1", "poly3"], gamma=0,
                                degree=1, working=(6, 1.0), example=1)
        for cand in report.candidates:
            assert 0 <= cand.c_both <= min(cand.c_a, cand.c_lambda) <= 100
            assert np.isfinite(cand.aic)
            assert np.isfinite(cand.tic)
        assert set(report.selected) == {"c_a", "c_lambda", "c_both",
                                        "aic", "tic"}

    def test_repeat_runs_are_identical(self):
        x, y = noisy_sine_data()
        kwargs = dict(gamma=0, degree=1, example=1)
        first = count_criteria(x, y, ["sin", "poly1", "poly3"], **kwargs)
        second = count_criteria(x, y, ["sin", "poly1", "poly3"], **kwargs)
        assert first.selected == second.selected
        assert first.working_segments == second.working_segments
        assert first.working_lam == second.working_lam
        assert first.pilot_bandwidth == second.pilot_bandwidth
        for a, b in zip(first.candidates, second.candidates):
            assert (a.c_a, a.c_lambda, a.c_both) == (b.c_a, b.c_lambda, b.c_both)
            assert a.aic == b.aic
            assert a.tic == b.tic

    def test_information_criteria_prefer_the_parsimonious_truth(self):
        rng = np.random.default_rng(57)
        x = rng.uniform(0.0, 1.0, 200)
        y = 1.0 + 2.0 * x + rng.normal(0.0, 0.3, 200)
        report = count_criteria(x, y, ["poly1", "poly3"], gamma=0, degree=1,
                                working=(8, 1.0), example=2)
        assert report.winner("aic") == "poly1"

    def test_ratio_correction_drops_nonpositive_guides(self):
        # The fitted line crosses zero, so it cannot serve as a ratio
        # guide; the flat guide stays positive and wins by default.
        rng = np.random.default_rng(59)
        x = rng.uniform(0.0, 1.0, 60)
        y = 2.0 * x - 0.8 + rng.normal(0.0, 0.05, 60)
        report = count_criteria(x, y, ["poly1", "const"], gamma=1, degree=1,
                                working=(8, 1.0), example=2)
        line, const = report.candidates
        assert not line.usable
        assert "multiplicative correction" in line.failure
        assert const.usable
        assert report.winner("c_both") == "const"

    def test_no_usable_candidate_raises(self):
        from spsreg import SelectionError

        rng = np.random.default_rng(59)
        x = rng.uniform(0.0, 1.0, 60)
        y = 2.0 * x - 1.0 + rng.normal(0.0, 0.01, 60)
        with pytest.raises(SelectionError):
            count_criteria(x, y, ["poly1", "poly3"], gamma=1, degree=1,
                           working=(8, 1.0), example=2)

    def test_input_validation(self):
        x, y = noisy_sine_data()
        with pytest.raises(ValueError):
            count_criteria(x, y, [], example=1)
        with pytest.raises(ValueError):
            count_criteria(x, y, ["sin", "sin"], example=1)
        with pytest.raises(ValueError):
            count_criteria(x, y, ["sin"], gamma=2, example=1)
        shallow = LocalPolynomialRegression(degree=1, bandwidth=0.2).fit(x, y)
        with pytest.raises(ValueError):
            count_criteria(x, y, ["sin"], degree=1, pilot=shallow, example=1)


class TestReportSerialization:
    def test_csv_layout_is_pinned(self, tmp_path):
        x, y = cubic_data()
        report = count_criteria(x, y, ["poly3", "const"], gamma=0, degree=1,
                                working=(10, 1.0), example=2)
        path = tmp_path / "selection.csv"
        text = report.to_csv(path)
        lines = text.strip().split("\n")
        assert lines[0] == "model,C_a,C_lambda,C_a_lambda,AIC,TIC,selected_flags"
        first = lines[1].split(",")
        assert first[0] == "poly3"
        assert first[1:4] == ["100", "100", "100"]
        assert first[6] == "c_a;c_lambda;c_both;aic;tic"
        second = lines[2].split(",")
        assert second[0] == "const"
        assert second[1:4] == ["0", "0", "0"]
        assert second[6] == ""
        assert path.read_text() == text

    def test_scores_round_trip_through_repr(self, tmp_path):
        x, y = noisy_sine_data()
        report = count_criteria(x, y, ["sin", "poly1"], gamma=0, degree=1,
                                working=(6, 1.0), example=1)
        text = report.to_csv(tmp_path / "s.csv")
        for line, cand in zip(text.strip().split("\n")[1:], report.candidates):
            cells = line.split(",")
            assert float(cells[4]) == cand.aic
            assert float(cells[5]) == cand.tic
