"""
Тесты оценщиков: Plasso, Slasso, Alasso, TAlasso, оракул и RWwD.
"""

import os
import sys

import numpy as np
import pytest

# Добавляем src в путь для импортов
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core import Family, TimeSeriesDataset, check_kkt, lambda_max, ols_fit, sample_std
from dgp import Design, DgpSpec, simulate
from errors import ConstantColumn, DomainError, EmptyWindow, MissingTruth
from estimators import (adaptive_weights, alasso_fit, fit_estimator, fit_path, oracle_fit,
                        plasso_fit, rwwd_forecast, slasso_fit, slasso_weights, talasso_fit)


def dgp2_sample(seed=5, n=200):
    return simulate(DgpSpec(Design.DGP2, n, seed)).rows(slice(0, n))


class TestWeights:
    """Тесты весов штрафа."""

    def test_adaptive_weights_gamma_one(self):
        """Тест |theta|^(-1) и бесконечного веса для нуля."""
        weights = adaptive_weights(np.array([2.0, -0.5, 0.0]), 1.0)
        np.testing.assert_allclose(weights[:2], [0.5, 2.0])
        assert np.isinf(weights[2])

    def test_adaptive_weights_gamma_two(self):
        weights = adaptive_weights(np.array([2.0, -0.5, 1e-12]), 2.0)
        np.testing.assert_allclose(weights[:2], [0.25, 4.0])
        assert np.isinf(weights[2])

    def test_adaptive_weights_gamma_below_one(self):
        with pytest.raises(DomainError):
            adaptive_weights(np.ones(2), 0.5)

    def test_slasso_weights_are_sample_std(self):
        """Тест что веса Slasso равны sigma_j с делителем 1/n."""
        data = dgp2_sample()
        expected = [sample_std(data.W[:, j]) for j in range(data.p)]
        np.testing.assert_allclose(slasso_weights(data), expected)

    def test_constant_column_warns(self):
        """Тест предупреждения о постоянном столбце."""
        rng = np.random.default_rng(1)
        W = np.column_stack([rng.standard_normal(30), np.full(30, 2.0)])
        data = TimeSeriesDataset(rng.standard_normal(30), W)
        with pytest.warns(ConstantColumn):
            fit = slasso_fit(data, 1.0)
        assert fit.coefficients[1] == 0.0


class TestPenalizedFits:
    """Тесты штрафуемых оценок."""

    def test_plasso_zero_lambda_is_ols(self):
        data = dgp2_sample()
        np.testing.assert_allclose(plasso_fit(data, 0.0).coefficients, ols_fit(data).coefficients, atol=1e-8)

    def test_fits_satisfy_kkt(self):
        """Тест KKT для всех штрафуемых оценщиков при их собственных весах."""
        data = dgp2_sample()
        lam = 0.1 * lambda_max(data)
        for family in (Family.PLASSO, Family.SLASSO, Family.ALASSO, Family.TALASSO):
            fit = fit_estimator(family, data, lam)
            assert fit.penalty.family is family
            assert check_kkt(data, fit), family

    def test_alasso_uses_ols_initial(self):
        """Тест что Alasso при lambda = 0 совпадает с МНК."""
        data = dgp2_sample()
        np.testing.assert_allclose(alasso_fit(data, 0.0).coefficients, ols_fit(data).coefficients, atol=1e-8)

    def test_talasso_restricted_to_stage_one(self):
        """Тест что отбор TAlasso - подмножество отбора первого этапа."""
        data = dgp2_sample()
        lam = 2.0
        fit = talasso_fit(data, lam)
        assert fit.stage_detail is not None
        assert fit.active_set <= fit.stage_detail.active_set
        outside = [j for j in range(data.p) if j not in fit.stage_detail.active_set]
        assert np.all(np.isinf(fit.penalty.weights[outside]))

    def test_talasso_empty_stage_one(self):
        """Тест нулевого решения при пустом первом этапе."""
        data = dgp2_sample()
        fit = talasso_fit(data, 1e12)
        assert fit.active_set == frozenset()
        assert fit.intercept == pytest.approx(float(np.mean(data.y)))
        assert np.all(np.isinf(fit.penalty.weights))

    def test_slasso_matches_grid_search_oracle(self):
        """Тест Slasso против перебора по сетке для p = 2, n = 60 со свободным членом."""
        rng = np.random.default_rng(40)
        coarse = np.arange(-500, 501) * 0.01
        for _ in range(20):
            W = rng.standard_normal((60, 2)) * rng.uniform(0.5, 2.0, 2)
            y = 0.7 + W @ rng.uniform(-1.5, 1.5, 2) + rng.standard_normal(60)
            data = TimeSeriesDataset(y, W)
            sigma = slasso_weights(data)
            lam = rng.uniform(0.0, 0.9) * lambda_max(data, sigma)
            fit = slasso_fit(data, lam)

            Wc, yc = W - W.mean(axis=0), y - y.mean()
            G, c, yy = Wc.T @ Wc, Wc.T @ yc, float(yc @ yc)

            def objective(b1, b2):
                return (yy - 2 * (b1 * c[0] + b2 * c[1])
                        + G[0, 0] * b1 ** 2 + 2 * G[0, 1] * b1 * b2 + G[1, 1] * b2 ** 2
                        + lam * (sigma[0] * np.abs(b1) + sigma[1] * np.abs(b2)))

            b1, b2 = np.meshgrid(coarse, coarse, indexing='ij')
            i, j = np.unravel_index(np.argmin(objective(b1, b2)), b1.shape)
            fine1 = coarse[i] + np.arange(-50, 51) * 0.001
            fine2 = coarse[j] + np.arange(-50, 51) * 0.001
            b1, b2 = np.meshgrid(fine1, fine2, indexing='ij')
            i, j = np.unravel_index(np.argmin(objective(b1, b2)), b1.shape)

            assert abs(fit.coefficients[0] - fine1[i]) <= 2e-3
            assert abs(fit.coefficients[1] - fine2[j]) <= 2e-3
            expected_intercept = y.mean() - W.mean(axis=0) @ fit.coefficients
            assert fit.intercept == pytest.approx(expected_intercept, abs=1e-10)

    def test_heavier_penalty_selects_fewer(self):
        data = dgp2_sample()
        light = plasso_fit(data, 0.01 * lambda_max(data))
        heavy = plasso_fit(data, 0.8 * lambda_max(data))
        assert len(heavy.active_set) <= len(light.active_set)


class TestScaleInvariance:
    """Тесты инвариантности к масштабу столбцов."""

    @pytest.mark.parametrize("scale", [1e-3, 1e3])
    @pytest.mark.parametrize("family", [Family.SLASSO, Family.ALASSO])
    def test_fitted_values_unchanged(self, family, scale):
        data = dgp2_sample()
        lam = 2.0 if family is Family.ALASSO else 0.05 * lambda_max(data, slasso_weights(data))
        base = fit_estimator(family, data, lam)
        for j in range(data.p):
            scaled_data = data.with_column_scaled(j, scale)
            scaled = fit_estimator(family, scaled_data, lam)
            np.testing.assert_allclose(scaled.predict(scaled_data.W), base.predict(data.W), atol=1e-8)
            assert scaled.active_set == base.active_set

    @pytest.mark.parametrize("scale", [1e-2, 1e2])
    def test_slasso_coefficient_scales_inversely(self, scale):
        """Тест что при умножении столбца на c коэффициент Slasso делится на c."""
        data = dgp2_sample()
        lam = 0.05 * lambda_max(data, slasso_weights(data))
        base = slasso_fit(data, lam)
        for j in range(data.p):
            scaled = slasso_fit(data.with_column_scaled(j, scale), lam)
            expected = base.coefficients.copy()
            expected[j] /= scale
            np.testing.assert_allclose(scaled.coefficients, expected, rtol=1e-6, atol=1e-10)
            assert scaled.intercept == pytest.approx(base.intercept, abs=1e-8)

    @pytest.mark.parametrize("scale", [1e-3, 1e3])
    def test_talasso_active_set_unchanged(self, scale):
        data = dgp2_sample()
        base = talasso_fit(data, 2.0)
        for j in range(data.p):
            assert talasso_fit(data.with_column_scaled(j, scale), 2.0).active_set == base.active_set


class TestBenchmarks:
    """Тесты оракула и RWwD."""

    def test_oracle_uses_true_active_set(self):
        data = dgp2_sample()
        fit = oracle_fit(data)
        expected = ols_fit(data, sorted(data.truth.active_set))
        np.testing.assert_allclose(fit.coefficients, expected.coefficients)
        assert fit.active_set == data.truth.active_set

    def test_oracle_without_truth(self):
        data = dgp2_sample()
        with pytest.raises(MissingTruth):
            oracle_fit(TimeSeriesDataset(data.y, data.W))

    def test_rwwd_forecast_is_mean(self):
        assert rwwd_forecast([1.0, 2.0, 3.0]) == 2.0

    def test_rwwd_empty_window(self):
        with pytest.raises(EmptyWindow):
            rwwd_forecast([])

    def test_fit_estimator_rejects_rwwd(self):
        with pytest.raises(DomainError):
            fit_estimator(Family.RWWD, dgp2_sample())


class TestFitPath:
    """Тесты оценок вдоль сетки lambda."""

    @pytest.mark.parametrize("family", [Family.PLASSO, Family.SLASSO, Family.ALASSO, Family.TALASSO])
    def test_path_matches_individual_fits(self, family):
        data = dgp2_sample()
        lambdas = [0.5, 5.0, 0.05, 2.0]
        path = fit_path(family, data, lambdas)
        for lam, fit in zip(lambdas, path):
            single = fit_estimator(family, data, lam)
            np.testing.assert_allclose(fit.coefficients, single.coefficients, atol=1e-6)
            assert fit.penalty.lam == lam

    def test_path_for_ols_repeats_fit(self):
        data = dgp2_sample()
        path = fit_path(Family.OLS, data, [1.0, 2.0])
        assert len(path) == 2
        np.testing.assert_allclose(path[0].coefficients, ols_fit(data).coefficients)
