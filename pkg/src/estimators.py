"""
Именованные стратегии оценки: Plasso, Slasso, Alasso, TAlasso, OLS, оракул
и эталонный прогноз RWwD. Все собираются из примитивов core.
"""

import dataclasses
from typing import Dict, List, Optional, Sequence

import numpy as np

from core import (Family, FitResult, PenaltySpec, TimeSeriesDataset, make_fit, ols_fit,
                  sample_std, warn_constant_columns, weighted_lasso_solve)
from errors import DomainError, EmptyWindow, MissingTruth


# |theta_ols| ниже порога считается нулём и получает бесконечный вес
ZERO_EPS = 1e-10
DEFAULT_GAMMA = 1.0


def plasso_fit(data: TimeSeriesDataset, lam: float, include_intercept: bool = True,
               warm_start: Optional[np.ndarray] = None) -> FitResult:
    """Обычное LASSO: tau_j = 1 для всех j."""
    penalty = PenaltySpec(Family.PLASSO, lam, np.ones(data.p))
    return weighted_lasso_solve(data, penalty, include_intercept, warm_start=warm_start)


def slasso_weights(data: TimeSeriesDataset) -> np.ndarray:
    """Веса стандартизированного LASSO: sigma_j с делителем 1/n."""
    sigma = np.array([sample_std(data.W[:, j]) for j in range(data.p)])
    warn_constant_columns(data, sigma)
    return sigma


def slasso_fit(data: TimeSeriesDataset, lam: float, include_intercept: bool = True,
               warm_start: Optional[np.ndarray] = None) -> FitResult:
    """Стандартизированное LASSO: tau_j = sample_std(w_j)."""
    penalty = PenaltySpec(Family.SLASSO, lam, slasso_weights(data))
    return weighted_lasso_solve(data, penalty, include_intercept, warm_start=warm_start)


def adaptive_weights(initial: np.ndarray, gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """
    Адаптивные веса |theta_init|^(-gamma).

    Args:
        initial: начальная оценка коэффициентов
        gamma: показатель степени (>= 1)

    Returns:
        Вектор весов; inf там, где |theta_init| < ZERO_EPS
    """
    if gamma < 1:
        raise DomainError(f"gamma должна быть >= 1, получено {gamma}")
    magnitude = np.abs(np.asarray(initial, dtype=float))
    weights = np.full(magnitude.size, np.inf)
    usable = magnitude >= ZERO_EPS
    weights[usable] = magnitude[usable] ** (-gamma)
    return weights


def alasso_fit(data: TimeSeriesDataset, lam: float, gamma: float = DEFAULT_GAMMA,
               include_intercept: bool = True, initial: Optional[FitResult] = None,
               warm_start: Optional[np.ndarray] = None) -> FitResult:
    """
    Адаптивное LASSO с начальной оценкой МНК по всем столбцам.

    initial позволяет переиспользовать уже посчитанный МНК (например, вдоль сетки lambda).
    """
    if initial is None:
        initial = ols_fit(data, None, include_intercept)
    penalty = PenaltySpec(Family.ALASSO, lam, adaptive_weights(initial.coefficients, gamma), gamma)
    return weighted_lasso_solve(data, penalty, include_intercept, warm_start=warm_start)


def talasso_fit(data: TimeSeriesDataset, lam: float, gamma: float = DEFAULT_GAMMA,
                include_intercept: bool = True, lam_stage2: Optional[float] = None,
                stage1: Optional[FitResult] = None) -> FitResult:
    """
    Двойное адаптивное LASSO.

    Этап 1 - Alasso. Затем МНК только по отобранным столбцам M1, новые веса
    |theta_postols|^(-gamma) и повторное взвешенное LASSO, ограниченное M1,
    с той же lambda (если не задана lam_stage2). Пустое M1 - нулевое решение.
    """
    if stage1 is None:
        stage1 = alasso_fit(data, lam, gamma, include_intercept)
    lam2 = lam if lam_stage2 is None else lam_stage2
    selected = sorted(stage1.active_set)
    weights = np.full(data.p, np.inf)

    if not selected:
        intercept = float(data.y.mean()) if include_intercept else 0.0
        resid = data.y - intercept
        penalty = PenaltySpec(Family.TALASSO, lam2, weights, gamma)
        return make_fit(np.zeros(data.p), intercept, float(resid @ resid), 0, True, penalty, stage1)

    post_ols = ols_fit(data, selected, include_intercept)
    weights[selected] = adaptive_weights(post_ols.coefficients[selected], gamma)
    penalty = PenaltySpec(Family.TALASSO, lam2, weights, gamma)
    fit = weighted_lasso_solve(data, penalty, include_intercept)
    return dataclasses.replace(fit, stage_detail=stage1)


def oracle_fit(data: TimeSeriesDataset, include_intercept: bool = True) -> FitResult:
    """МНК на истинном активном множестве (только для симулированных данных)."""
    if data.truth is None:
        raise MissingTruth("оракульной оценке нужна истина (data.truth)")
    return ols_fit(data, sorted(data.truth.active_set), include_intercept)


def rwwd_forecast(y_window: Sequence[float]) -> float:
    """Случайное блуждание со сносом: прогноз равен среднему окна."""
    y_window = np.asarray(y_window, dtype=float)
    if y_window.size == 0:
        raise EmptyWindow("пустое окно для RWwD")
    return float(np.mean(y_window))


def fit_estimator(family: Family, data: TimeSeriesDataset, lam: float = 0.0,
                  gamma: float = DEFAULT_GAMMA, include_intercept: bool = True) -> FitResult:
    """Оценить модель семейства family с заданной lambda."""
    if family is Family.PLASSO:
        return plasso_fit(data, lam, include_intercept)
    if family is Family.SLASSO:
        return slasso_fit(data, lam, include_intercept)
    if family is Family.ALASSO:
        return alasso_fit(data, lam, gamma, include_intercept)
    if family is Family.TALASSO:
        return talasso_fit(data, lam, gamma, include_intercept)
    if family is Family.OLS:
        return ols_fit(data, None, include_intercept)
    if family is Family.ORACLE:
        return oracle_fit(data, include_intercept)
    raise DomainError(f"{family.value} не является регрессионной оценкой, используйте rwwd_forecast")


def fit_path(family: Family, data: TimeSeriesDataset, lambdas: Sequence[float],
             gamma: float = DEFAULT_GAMMA, include_intercept: bool = True) -> List[FitResult]:
    """
    Оценки вдоль сетки lambda с тёплым стартом.

    Проход идёт от большей lambda к меньшей, результат - в порядке lambdas.
    Начальный МНК для Alasso/TAlasso считается один раз.
    """
    if not family.is_penalized:
        fit = fit_estimator(family, data, 0.0, gamma, include_intercept)
        return [fit for _ in lambdas]

    order = sorted(range(len(lambdas)), key=lambda k: -lambdas[k])
    if family is Family.PLASSO:
        weights = np.ones(data.p)
    elif family is Family.SLASSO:
        weights = slasso_weights(data)
    else:
        initial = ols_fit(data, None, include_intercept)
        weights = adaptive_weights(initial.coefficients, gamma)
    base_family = Family.ALASSO if family.is_adaptive else family

    fits: Dict[int, FitResult] = {}
    previous: Optional[np.ndarray] = None
    for k in order:
        penalty = PenaltySpec(base_family, lambdas[k], weights, gamma)
        fit = weighted_lasso_solve(data, penalty, include_intercept, warm_start=previous)
        previous = fit.coefficients
        if family is Family.TALASSO:
            fit = talasso_fit(data, lambdas[k], gamma, include_intercept, stage1=fit)
        fits[k] = fit
    return [fits[k] for k in range(len(lambdas))]
