"""
Монте-Карло: прогноз на шаг вперёд, метрики отбора SR/SR1/SR2, MPSE
и разбор коинтегрированной группы с нулевыми коэффициентами.

Свободный член в метриках отбора не участвует.
"""

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from calibration_cache import calibration_cache
from core import Family, FitResult, TimeSeriesDataset
from dgp import DEFAULT_BURN_IN, Design, DgpSpec, Persistence, replication_seeds, simulate
from errors import DomainError, LengthMismatch, PredLassoError
from estimators import DEFAULT_GAMMA, fit_estimator, rwwd_forecast
from logger import log_error
from tuning import DEFAULT_FOLDS, DEFAULT_LOSS_SCALE, LossScale, penalty_level


MONTECARLO_STREAM = 0
INTERCEPT_NOTE = "intercept excluded from selection metrics"

Estimator = Union[Family, Callable[[TimeSeriesDataset], FitResult]]


def mpse(forecasts: Sequence[float], realized: Sequence[float]) -> float:
    """Средний квадрат ошибки прогноза."""
    forecasts = np.asarray(forecasts, dtype=float).reshape(-1)
    realized = np.asarray(realized, dtype=float).reshape(-1)
    if forecasts.size != realized.size or forecasts.size == 0:
        raise LengthMismatch(f"длины прогнозов ({forecasts.size}) и реализаций ({realized.size}) "
                             f"должны совпадать и быть ненулевыми")
    return math.fsum((forecasts - realized) ** 2) / forecasts.size


def selection_rates(truth_active: Iterable[int], estimated_active: Iterable[int],
                    p: int) -> Tuple[float, float, float]:
    """
    Доли правильной классификации коэффициентов.

    Returns:
        (sr, sr1, sr2): общая доля, доля отобранных истинно активных,
        доля отброшенных истинно нулевых (пустой знаменатель даёт 1)
    """
    truth = set(truth_active)
    estimated = set(estimated_active)
    universe = set(range(p))
    inactive = universe - truth

    sr1 = len(truth & estimated) / len(truth) if truth else 1.0
    sr2 = len(inactive - estimated) / len(inactive) if inactive else 1.0
    agree = sum(1 for j in universe if (j in truth) == (j in estimated))
    return agree / p, sr1, sr2


@dataclass
class SelectionReport:
    """Средние метрики ячейки (дизайн, n, оценщик) и их стандартные ошибки."""

    design: str
    n: int
    estimator: str
    sr: float
    sr1: float
    sr2: float
    mpse: float
    reps: int
    failures: int = 0
    mpse_se: float = 0.0
    sr_se: float = 0.0
    sr1_se: float = 0.0
    sr2_se: float = 0.0
    c_lambda: Optional[float] = None

    def __post_init__(self):
        if self.reps <= 0:
            raise DomainError("в отчёте должна быть хотя бы одна успешная репликация")
        for name in ('sr', 'sr1', 'sr2'):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise DomainError(f"{name} вне [0, 1]")


@dataclass
class CointGroupReport:
    """Доли репликаций, где оба, ровно один или ни один коэффициент группы C2 равен нулю."""

    frac_both_zero: float
    frac_exactly_one_zero: float
    frac_neither_zero: float
    reps: int
    design: str = ""
    n: int = 0
    estimator: str = ""

    def __post_init__(self):
        fractions = (self.frac_both_zero, self.frac_exactly_one_zero, self.frac_neither_zero)
        if any(f < 0 for f in fractions) or abs(math.fsum(fractions) - 1.0) > 1e-12:
            raise DomainError("доли группы должны быть неотрицательны и давать в сумме 1")

    @classmethod
    def from_zero_flags(cls, flags: Sequence[Tuple[bool, ...]], design: str = "", n: int = 0,
                        estimator: str = "") -> "CointGroupReport":
        reps = len(flags)
        if reps == 0:
            raise DomainError("нет репликаций для разбора группы")
        zeros = [sum(f) for f in flags]
        both = sum(1 for z in zeros if z == 2)
        one = sum(1 for z in zeros if z == 1)
        neither = reps - both - one
        return cls(both / reps, one / reps, neither / reps, reps, design, n, estimator)

    def binomial_se(self) -> Dict[str, float]:
        return {name: math.sqrt(value * (1.0 - value) / self.reps)
                for name, value in (("both_zero", self.frac_both_zero),
                                    ("exactly_one_zero", self.frac_exactly_one_zero),
                                    ("neither_zero", self.frac_neither_zero))}


@dataclass(frozen=True)
class ReplicationOutcome:
    """Итог одной репликации для одного оценщика; error заполнен при сбое."""

    squared_error: float = float('nan')
    sr: float = float('nan')
    sr1: float = float('nan')
    sr2: float = float('nan')
    coint_zeros: Tuple[bool, ...] = ()
    error: Optional[str] = None


@dataclass
class MonteCarloResult:
    selection: List[SelectionReport] = field(default_factory=list)
    coint: List[CointGroupReport] = field(default_factory=list)
    constants: Dict[str, float] = field(default_factory=dict)
    failed_cells: List[Dict[str, object]] = field(default_factory=list)
    master_seed: int = 0
    reps: int = 0

    def to_dict(self) -> Dict:
        return {
            "master_seed": self.master_seed,
            "reps": self.reps,
            "note": INTERCEPT_NOTE,
            "constants": dict(sorted(self.constants.items())),
            "selection": [asdict(report) for report in self.selection],
            "coint": [dict(asdict(report), se=report.binomial_se()) for report in self.coint],
            "failed_cells": self.failed_cells,
        }


def _forecast_and_selection(estimator: Estimator, sample: TimeSeriesDataset, x_next: np.ndarray,
                            lam: float, gamma: float,
                            include_intercept: bool = True) -> Tuple[float, np.ndarray]:
    """Прогноз для строки x_next и вектор коэффициентов выбранного оценщика."""
    if estimator is Family.RWWD:
        return rwwd_forecast(sample.y), np.zeros(sample.p)
    if isinstance(estimator, Family):
        fit = fit_estimator(estimator, sample, lam, gamma, include_intercept)
    else:
        fit = estimator(sample)
    return float(fit.predict(x_next)), np.asarray(fit.coefficients, dtype=float)


def _replicate(task: tuple) -> List[ReplicationOutcome]:
    """Одна репликация: симуляция n + 1 строк, оценка на первых n, прогноз строки n + 1."""
    design, n, seed, burn_in, estimators, lambdas, gamma, include_intercept = task
    data = simulate(DgpSpec(design, n, seed, burn_in))
    sample = data.rows(slice(0, n))
    truth = data.truth
    coint_columns = truth.columns_with(Persistence.C2)

    outcomes = []
    for estimator, lam in zip(estimators, lambdas):
        try:
            forecast, theta = _forecast_and_selection(estimator, sample, data.W[n], lam, gamma,
                                                      include_intercept)
        except PredLassoError as e:
            label = getattr(estimator, 'value', str(estimator))
            logging.warning(f"Репликация {design.value} n={n} seed={seed} {label}: {e}")
            log_error(type(e).__name__, str(e),
                      {"design": design.value, "n": n, "seed": seed, "estimator": label})
            outcomes.append(ReplicationOutcome(error=f"{type(e).__name__}: {e}"))
            continue
        estimated = np.flatnonzero(theta)
        sr, sr1, sr2 = selection_rates(truth.active_set, estimated, sample.p)
        outcomes.append(ReplicationOutcome(
            squared_error=(float(data.y[n]) - forecast) ** 2,
            sr=sr, sr1=sr1, sr2=sr2,
            coint_zeros=tuple(bool(theta[j] == 0) for j in coint_columns),
        ))
    return outcomes


def _run_tasks(tasks: List[tuple], jobs: int) -> List[List[ReplicationOutcome]]:
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            return list(executor.map(_replicate, tasks))
    return [_replicate(task) for task in tasks]


def _mean_and_se(values: Sequence[float]) -> Tuple[float, float]:
    count = len(values)
    mean = math.fsum(values) / count
    if count < 2:
        return mean, 0.0
    variance = math.fsum((v - mean) ** 2 for v in values) / (count - 1)
    return mean, math.sqrt(variance / count)


def _lambda_for(family: Family, n: int, constants: Dict[Family, float],
                loss_scale: LossScale = DEFAULT_LOSS_SCALE) -> float:
    if not family.is_penalized:
        return 0.0
    return penalty_level(constants[family], n, family, loss_scale)


def resolve_constants(designs: Sequence[Design], estimators: Sequence[Family],
                      constants: Optional[Dict[Family, float]] = None, master_seed: int = 0,
                      calibration_reps: int = 100, calibration_n: int = 200,
                      gamma: float = DEFAULT_GAMMA, grid: Optional[Sequence[float]] = None,
                      folds: int = DEFAULT_FOLDS, jobs: int = 1, include_intercept: bool = True,
                      loss_scale: LossScale = DEFAULT_LOSS_SCALE) -> Dict[Tuple[Design, Family], float]:
    """
    Константы c_lambda для каждой пары (дизайн, штрафуемый оценщик).

    Явно заданные constants используются для всех дизайнов, остальные берутся
    из кэша калибровки или калибруются.
    """
    resolved: Dict[Tuple[Design, Family], float] = {}
    for design in designs:
        for family in estimators:
            if not family.is_penalized:
                continue
            if constants and family in constants:
                resolved[(design, family)] = float(constants[family])
            else:
                resolved[(design, family)] = calibration_cache.calibrated(
                    design, family, calibration_reps, calibration_n, master_seed, grid, folds, gamma, jobs,
                    include_intercept, loss_scale)
    return resolved


def run_montecarlo(design: Union[Design, Sequence[Design]], n_list: Sequence[int], reps: int,
                   estimators: Sequence[Family], master_seed: int,
                   constants: Optional[Dict[Family, float]] = None, gamma: float = DEFAULT_GAMMA,
                   calibration_reps: int = 100, calibration_n: int = 200,
                   grid: Optional[Sequence[float]] = None, folds: int = DEFAULT_FOLDS,
                   burn_in: int = DEFAULT_BURN_IN, jobs: int = 1,
                   coint_screening: bool = True, include_intercept: bool = True,
                   loss_scale: LossScale = DEFAULT_LOSS_SCALE) -> MonteCarloResult:
    """
    Монте-Карло по ячейкам (дизайн, n, оценщик).

    Для каждой репликации симулируется n + 1 наблюдение, модель оценивается на
    первых n, прогнозируется наблюдение n + 1. Сбои репликаций учитываются, ячейка
    отчитывается по числу успешных репликаций. Для DGP2/DGP3 из тех же репликаций
    строится разбор коинтегрированной группы.

    Args:
        design: дизайн или список дизайнов
        n_list: размеры выборки
        reps: число репликаций
        estimators: оценщики
        master_seed: мастер-зерно
        constants: c_lambda по оценщикам (иначе калибровка)
        jobs: число процессов (результат от него не зависит)
        loss_scale: масштаб потерь, к которому относятся c_lambda

    Returns:
        MonteCarloResult с отчётами по ячейкам
    """
    if reps < 1:
        raise DomainError("reps должно быть >= 1")
    designs = [design] if isinstance(design, Design) else list(design)
    estimators = list(estimators)
    resolved = resolve_constants(designs, estimators, constants, master_seed,
                                 calibration_reps, calibration_n, gamma, grid, folds, jobs,
                                 include_intercept, loss_scale)

    cells: List[Tuple[Design, int]] = [(d, n) for d in designs for n in n_list]
    tasks: List[tuple] = []
    for d, n in cells:
        by_family = {f: c for (dd, f), c in resolved.items() if dd is d}
        lambdas = [_lambda_for(family, n, by_family, loss_scale) for family in estimators]
        seeds = replication_seeds(master_seed, reps, d.index, n, MONTECARLO_STREAM)
        tasks.extend((d, n, seed, burn_in, estimators, lambdas, gamma, include_intercept) for seed in seeds)

    outcomes = _run_tasks(tasks, jobs)

    result = MonteCarloResult(master_seed=master_seed, reps=reps,
                              constants={f"{d.value}.{f.value}": c for (d, f), c in resolved.items()})
    for cell_index, (d, n) in enumerate(cells):
        cell = outcomes[cell_index * reps:(cell_index + 1) * reps]
        for k, family in enumerate(estimators):
            ok = [rep[k] for rep in cell if rep[k].error is None]
            failures = reps - len(ok)
            if not ok:
                logging.error(f"Ячейка {d.value} n={n} {family.value}: все {reps} репликаций с ошибкой")
                result.failed_cells.append({"design": d.value, "n": n, "estimator": family.value,
                                            "failures": failures, "error": cell[0][k].error})
                continue
            mpse_mean, mpse_se = _mean_and_se([o.squared_error for o in ok])
            sr, sr_se = _mean_and_se([o.sr for o in ok])
            sr1, sr1_se = _mean_and_se([o.sr1 for o in ok])
            sr2, sr2_se = _mean_and_se([o.sr2 for o in ok])
            result.selection.append(SelectionReport(
                d.value, n, family.value, sr, sr1, sr2, mpse_mean, len(ok), failures,
                mpse_se, sr_se, sr1_se, sr2_se, resolved.get((d, family))))
            if coint_screening and d is not Design.DGP1:
                result.coint.append(CointGroupReport.from_zero_flags(
                    [o.coint_zeros for o in ok], d.value, n, family.value))
        logging.info(f"Ячейка {d.value} n={n} готова ({reps} репликаций)")
    return result


def coint_group_screening(design: Design, n: int, estimator: Estimator, reps: int, master_seed: int,
                          c_lambda: Optional[float] = None, gamma: float = DEFAULT_GAMMA,
                          burn_in: int = DEFAULT_BURN_IN, jobs: int = 1, include_intercept: bool = True,
                          loss_scale: LossScale = DEFAULT_LOSS_SCALE) -> CointGroupReport:
    """
    Разбор неактивной коинтегрированной группы C2 по репликациям.

    estimator - семейство или функция data -> FitResult. Репликации те же,
    что и у run_montecarlo с тем же master_seed.
    """
    if design is Design.DGP1:
        raise DomainError("в DGP1 нет коинтегрированной группы")
    if reps < 1:
        raise DomainError("reps должно быть >= 1")

    lam = 0.0
    label = getattr(estimator, 'value', getattr(estimator, '__name__', 'custom'))
    if isinstance(estimator, Family) and estimator.is_penalized:
        if c_lambda is None:
            c_lambda = calibration_cache.calibrated(design, estimator, master_seed=master_seed, gamma=gamma,
                                                    include_intercept=include_intercept,
                                                    loss_scale=loss_scale)
        lam = penalty_level(c_lambda, n, estimator, loss_scale)

    seeds = replication_seeds(master_seed, reps, design.index, n, MONTECARLO_STREAM)
    tasks = [(design, n, seed, burn_in, [estimator], [lam], gamma, include_intercept) for seed in seeds]
    outcomes = _run_tasks(tasks, jobs if isinstance(estimator, Family) else 1)
    ok = [rep[0] for rep in outcomes if rep[0].error is None]
    if not ok:
        raise PredLassoError(f"все {reps} репликаций {design.value} n={n} {label} завершились ошибкой")
    return CointGroupReport.from_zero_flags([o.coint_zeros for o in ok], design.value, n, label)


def _write_csv(frame: pd.DataFrame, path: str, header_lines: Sequence[str]) -> None:
    with open(path, 'w', encoding='utf-8', newline='') as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        frame.to_csv(f, index=False, float_format='%.17g', lineterminator='\n')


def provenance_lines(provenance: Dict[str, object]) -> List[str]:
    lines = [f"{key}: {provenance[key]}" for key in sorted(provenance)]
    lines.append(INTERCEPT_NOTE)
    return lines


def table2a_frame(result: MonteCarloResult, estimators: Sequence[str]) -> pd.DataFrame:
    """MPSE: строки (дизайн, n), столбцы - оценщики."""
    frame = pd.DataFrame([asdict(r) for r in result.selection])
    if frame.empty:
        return pd.DataFrame(columns=['design', 'n', *estimators])
    wide = frame.pivot(index=['design', 'n'], columns='estimator', values='mpse')
    return wide.reindex(columns=list(estimators)).reset_index()


def table2b_frame(result: MonteCarloResult, estimators: Sequence[str]) -> pd.DataFrame:
    """SR, SR1, SR2: строки (дизайн, n, метрика), столбцы - оценщики."""
    frame = pd.DataFrame([asdict(r) for r in result.selection])
    if frame.empty:
        return pd.DataFrame(columns=['design', 'n', 'metric', *estimators])
    long = frame.melt(id_vars=['design', 'n', 'estimator'], value_vars=['sr', 'sr1', 'sr2'],
                      var_name='metric')
    wide = long.pivot(index=['design', 'n', 'metric'], columns='estimator', values='value')
    return wide.reindex(columns=list(estimators)).reset_index()


def table3_frame(result: MonteCarloResult) -> pd.DataFrame:
    """Разбор группы C2: по строке на (дизайн, n, оценщик)."""
    columns = ['design', 'n', 'estimator', 'both_zero', 'exactly_one_zero', 'neither_zero', 'reps']
    rows = [(r.design, r.n, r.estimator, r.frac_both_zero, r.frac_exactly_one_zero,
             r.frac_neither_zero, r.reps) for r in result.coint]
    return pd.DataFrame(rows, columns=columns)


def write_reports(result: MonteCarloResult, out_dir: str, estimators: Sequence[str],
                  provenance: Dict[str, object]) -> List[str]:
    """
    Записать table2a_mpse.csv, table2b_selection.csv, table3_coint.csv и montecarlo.json.

    Returns:
        Пути записанных файлов
    """
    os.makedirs(out_dir, exist_ok=True)
    header = provenance_lines(provenance)
    paths = []
    for name, frame in (('table2a_mpse.csv', table2a_frame(result, estimators)),
                        ('table2b_selection.csv', table2b_frame(result, estimators)),
                        ('table3_coint.csv', table3_frame(result))):
        path = os.path.join(out_dir, name)
        _write_csv(frame, path, header)
        paths.append(path)

    path = os.path.join(out_dir, 'montecarlo.json')
    payload = dict(result.to_dict(), provenance=provenance)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write('\n')
    paths.append(path)
    logging.info(f"Отчёты Монте-Карло записаны в {out_dir}")
    return paths
