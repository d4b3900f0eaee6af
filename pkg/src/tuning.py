"""
Подбор параметра штрафа: расписания lambda_n, кросс-валидация по
последовательным блокам, калибровка c_lambda и выбор по BIC.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core import Family, FitResult, TimeSeriesDataset
from dgp import DEFAULT_BURN_IN, Design, DgpSpec, replication_seeds, simulate
from errors import AllCandidatesFailed, DomainError, PredLassoError
from estimators import DEFAULT_GAMMA, fit_estimator, fit_path
from logger import log_error


DEFAULT_FOLDS = 10
CALIBRATION_STREAM = 1


class Schedule(str, Enum):
    SQRT_N = "sqrt_n"
    SQRT_N_OVER_LOGLOG = "sqrt_n_over_loglog"


class Selector(str, Enum):
    CV = "cv"
    BIC = "bic"


class LossScale(str, Enum):
    """
    Масштаб потерь, к которому относится c_lambda.

    SUM  - ||y - W theta||^2 + lambda_n * sum tau_j |theta_j|
    MEAN - ||y - W theta||^2 / (2n) + lambda_n * sum tau_j |theta_j|
    """

    SUM = "sum"
    MEAN = "mean"


DEFAULT_LOSS_SCALE = LossScale.MEAN


def default_grid(grid_min: float = 1e-5, grid_max: float = 1e2, points: int = 36) -> Tuple[float, ...]:
    """Логарифмически равномерная сетка кандидатов c_lambda."""
    if grid_min <= 0 or grid_max < grid_min or points < 1:
        raise DomainError("сетка c_lambda: нужно 0 < grid_min <= grid_max и points >= 1")
    return tuple(float(c) for c in np.logspace(np.log10(grid_min), np.log10(grid_max), points))


@dataclass(frozen=True)
class TuningConfig:
    """Константа c_lambda, расписание, сетка кандидатов, число блоков CV, способ выбора и масштаб потерь."""

    c_lambda: float
    schedule: Schedule
    grid: Tuple[float, ...] = default_grid()
    folds: int = DEFAULT_FOLDS
    selector: Selector = Selector.CV
    loss_scale: LossScale = DEFAULT_LOSS_SCALE

    def __post_init__(self):
        if not self.c_lambda > 0:
            raise DomainError("c_lambda должна быть положительной")
        if not self.grid or any(c <= 0 for c in self.grid):
            raise DomainError("сетка кандидатов должна быть непустой и положительной")
        if self.folds < 2:
            raise DomainError("folds должно быть >= 2")

    def penalty(self, n: int, family: Family) -> float:
        return penalty_level(self.c_lambda, n, family, self.loss_scale)


def schedule_for(family: Family) -> Schedule:
    """sqrt(n) для Plasso/Slasso, sqrt(n)/log(log n) для Alasso/TAlasso."""
    if family in (Family.PLASSO, Family.SLASSO):
        return Schedule.SQRT_N
    if family.is_adaptive:
        return Schedule.SQRT_N_OVER_LOGLOG
    raise DomainError(f"у {family.value} нет параметра штрафа")


def lambda_schedule(c_lambda: float, n: int, family: Family) -> float:
    """
    lambda_n = c_lambda * sqrt(n) или c_lambda * sqrt(n) / log(log n).

    Raises:
        DomainError: c_lambda <= 0 или log(log n) <= 0
    """
    if not c_lambda > 0:
        raise DomainError(f"c_lambda должна быть положительной, получено {c_lambda}")
    if n < 1:
        raise DomainError(f"n должно быть положительным, получено {n}")
    if schedule_for(family) is Schedule.SQRT_N:
        return c_lambda * math.sqrt(n)
    if n <= math.e:
        raise DomainError(f"log(log n) не определён или неположителен при n={n}")
    return c_lambda * math.sqrt(n) / math.log(math.log(n))


def penalty_level(c_lambda: float, n: int, family: Family,
                  loss_scale: LossScale = DEFAULT_LOSS_SCALE) -> float:
    """
    lambda для решателя, который минимизирует ||y - W theta||^2 + lambda * sum tau_j |theta_j|.

    При MEAN lambda_n задана для потерь ||.||^2 / (2n), поэтому умножается на 2n;
    n - размер выборки, на которой идёт оценка.
    """
    lam = lambda_schedule(c_lambda, n, family)
    if LossScale(loss_scale) is LossScale.MEAN:
        return lam * 2.0 * n
    return lam


def fold_blocks(n: int, folds: int = DEFAULT_FOLDS) -> List[np.ndarray]:
    """Разбиение 0..n-1 на folds последовательных блоков, размеры отличаются не более чем на 1."""
    if folds < 2 or n < folds:
        raise DomainError(f"нельзя разбить {n} наблюдений на {folds} блоков")
    return np.array_split(np.arange(n), folds)


def _fits_for_grid(family: Family, data: TimeSeriesDataset, grid: Sequence[float], gamma: float,
                   include_intercept: bool, loss_scale: LossScale) -> List[Optional[FitResult]]:
    """Оценки для всех кандидатов; при ошибке пути - поштучно, неудачные - None."""
    lambdas = [penalty_level(c, data.n, family, loss_scale) for c in grid]
    try:
        return fit_path(family, data, lambdas, gamma, include_intercept)
    except PredLassoError:
        pass

    fits: List[Optional[FitResult]] = []
    for c, lam in zip(grid, lambdas):
        try:
            fits.append(fit_estimator(family, data, lam, gamma, include_intercept))
        except PredLassoError as e:
            logging.warning(f"Кандидат c={c:.4g} пропущен ({family.value}): {e}")
            log_error(type(e).__name__, str(e), {"family": family.value, "c_lambda": c, "n": data.n})
            fits.append(None)
    return fits


def cv_scores(data: TimeSeriesDataset, family: Family, grid: Sequence[float],
              folds: int = DEFAULT_FOLDS, gamma: float = DEFAULT_GAMMA,
              include_intercept: bool = True,
              loss_scale: LossScale = DEFAULT_LOSS_SCALE) -> np.ndarray:
    """
    Средняя MPSE на отложенных блоках для каждого кандидата.

    Обучение - все блоки, кроме отложенного (включая более поздние), lambda
    пересчитывается по размеру обучающей выборки. Кандидат с ошибкой хотя бы
    в одном блоке получает nan.
    """
    if data.n < 3 * folds:
        raise DomainError(f"для {folds}-кратной CV нужно n >= {3 * folds}, получено {data.n}")
    errors = np.full((folds, len(grid)), np.nan)
    blocks = fold_blocks(data.n, folds)
    for k, block in enumerate(blocks):
        train = data.rows(np.concatenate([b for i, b in enumerate(blocks) if i != k]))
        W_test, y_test = data.W[block], data.y[block]
        for i, fit in enumerate(_fits_for_grid(family, train, grid, gamma, include_intercept, loss_scale)):
            if fit is not None:
                resid = y_test - fit.predict(W_test)
                errors[k, i] = float(np.mean(resid ** 2))
    return errors.mean(axis=0)


def _select(grid: Sequence[float], scores: np.ndarray, criterion: str) -> float:
    """Минимум критерия; при равенстве - больший c (более сильный штраф)."""
    best: Optional[int] = None
    for i in sorted(range(len(grid)), key=lambda k: -grid[k]):
        if np.isnan(scores[i]):
            continue
        if best is None or scores[i] < scores[best]:
            best = i
    if best is None:
        raise AllCandidatesFailed(f"{criterion}: ни один кандидат c_lambda не оценён")
    return float(grid[best])


def cv_select(data: TimeSeriesDataset, family: Family, grid: Sequence[float],
              folds: int = DEFAULT_FOLDS, gamma: float = DEFAULT_GAMMA,
              include_intercept: bool = True,
              loss_scale: LossScale = DEFAULT_LOSS_SCALE) -> float:
    """Выбрать c_lambda по folds-кратной CV на последовательных блоках."""
    scores = cv_scores(data, family, grid, folds, gamma, include_intercept, loss_scale)
    return _select(grid, scores, "CV")


def bic_scores(data: TimeSeriesDataset, family: Family, grid: Sequence[float],
               gamma: float = DEFAULT_GAMMA, include_intercept: bool = True,
               loss_scale: LossScale = DEFAULT_LOSS_SCALE) -> np.ndarray:
    """BIC(c) = n log(RSS(c)/n) + |M(c)| log n для каждого кандидата (nan при ошибке)."""
    n = data.n
    scores = np.full(len(grid), np.nan)
    for i, fit in enumerate(_fits_for_grid(family, data, grid, gamma, include_intercept, loss_scale)):
        if fit is None:
            continue
        resid = data.y - fit.predict(data.W)
        with np.errstate(divide='ignore'):
            scores[i] = n * np.log(float(resid @ resid) / n) + len(fit.active_set) * np.log(n)
    return scores


def bic_select(data: TimeSeriesDataset, family: Family, grid: Sequence[float],
               gamma: float = DEFAULT_GAMMA, include_intercept: bool = True,
               loss_scale: LossScale = DEFAULT_LOSS_SCALE) -> float:
    """Выбрать c_lambda по минимуму BIC на всей выборке."""
    scores = bic_scores(data, family, grid, gamma, include_intercept, loss_scale)
    return _select(grid, scores, "BIC")


def _calibration_replicate(args: tuple) -> float:
    design, family, n, seed, grid, folds, gamma, burn_in, include_intercept, loss_scale = args
    sample = simulate(DgpSpec(design, n, seed, burn_in)).rows(slice(0, n))
    return cv_select(sample, family, grid, folds, gamma, include_intercept, loss_scale)


def calibrate_clambda(design: Design, family: Family, reps: int = 100, n: int = 200,
                      master_seed: int = 0, grid: Optional[Sequence[float]] = None,
                      folds: int = DEFAULT_FOLDS, gamma: float = DEFAULT_GAMMA,
                      burn_in: int = DEFAULT_BURN_IN, jobs: int = 1,
                      include_intercept: bool = True,
                      loss_scale: LossScale = DEFAULT_LOSS_SCALE) -> float:
    """
    Калибровка c_lambda: медиана выборов CV по reps независимым симуляциям размера n.

    Для чётного reps берётся нижняя медиана, так что результат - элемент сетки.
    """
    if reps < 1:
        raise DomainError("reps должно быть >= 1")
    grid = tuple(default_grid() if grid is None else grid)
    loss_scale = LossScale(loss_scale)
    seeds = replication_seeds(master_seed, reps, design.index, n, CALIBRATION_STREAM)
    tasks = [(design, family, n, seed, grid, folds, gamma, burn_in, include_intercept, loss_scale)
             for seed in seeds]

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            choices = list(executor.map(_calibration_replicate, tasks))
    else:
        choices = [_calibration_replicate(task) for task in tasks]

    c_lambda = sorted(choices)[(reps - 1) // 2]
    logging.info(f"Калибровка {design.value}/{family.value}: c_lambda={c_lambda:.6g} "
                 f"(reps={reps}, n={n}, master_seed={master_seed}, loss_scale={loss_scale.value})")
    return c_lambda
