"""
Эмпирический прогноз доходностей: загрузка помесячной панели, длинные
доходности, прогноз скользящим окном и метрики RMPSE/MPAE.

Выравнивание: цель LongReturn_i (сумма ex_return за i..i+m-1, m = 12h)
сопоставляется строке предикторов i - predictor_lag, predictor_lag >= 1.
Для окна с концом t в обучение входят только цели, полностью реализованные
к t (i <= t - m + 1), прогнозируется LongReturn_{t+1}.
"""

import json
import logging
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from config import get_empirical_config
from core import Family, TimeSeriesDataset
from errors import (DomainError, LengthMismatch, MissingColumn, NonFiniteValue, NonMonotoneDates,
                    PanelError, PredLassoError, SeriesTooShort)
from estimators import DEFAULT_GAMMA, fit_estimator, rwwd_forecast
from evalmetrics import mpse
from logger import log_error
from tuning import (DEFAULT_FOLDS, DEFAULT_LOSS_SCALE, LossScale, bic_select, cv_select, default_grid,
                    penalty_level)


HorizonLike = Union[Fraction, str, int, float]


@dataclass(frozen=True, eq=False)
class ReturnPanel:
    """
    Помесячная панель: даты, избыточная доходность и матрица предикторов.

    Даты идут подряд по месяцам, все значения конечны. Номера строк в ошибках
    считаются с 1.
    """

    dates: pd.PeriodIndex
    ex_return: np.ndarray
    predictors: pd.DataFrame
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        ex_return = np.array(self.ex_return, dtype=float).reshape(-1)
        predictors = self.predictors.reset_index(drop=True).astype(float)
        dates = pd.PeriodIndex(self.dates, freq='M')
        if not (len(dates) == ex_return.size == len(predictors)):
            raise LengthMismatch("даты, ex_return и предикторы должны иметь одинаковую длину")
        if not np.all(np.isfinite(ex_return)):
            raise NonFiniteValue('ex_return', int(np.flatnonzero(~np.isfinite(ex_return))[0]) + 1)

        bad = np.argwhere(~np.isfinite(predictors.to_numpy()))
        if bad.size:
            row, column = bad[0]
            raise NonFiniteValue(str(predictors.columns[column]), int(row) + 1)

        months = np.asarray(dates.year) * 12 + np.asarray(dates.month)
        gaps = np.flatnonzero(np.diff(months) != 1)
        if gaps.size:
            row = int(gaps[0]) + 1
            raise NonMonotoneDates(row + 1, str(dates[row]))

        ex_return.flags.writeable = False
        object.__setattr__(self, 'dates', dates)
        object.__setattr__(self, 'ex_return', ex_return)
        object.__setattr__(self, 'predictors', predictors)

    @property
    def n(self) -> int:
        return self.ex_return.size

    @property
    def names(self) -> List[str]:
        return list(self.predictors.columns)


def horizon_months(h: HorizonLike) -> int:
    """Число месяцев 12h; 12h должно быть положительным целым."""
    if isinstance(h, float):
        frac = Fraction(h).limit_denominator(12)
    else:
        frac = Fraction(h)
    months = frac * 12
    if months.denominator != 1 or months <= 0:
        raise DomainError(f"12h должно быть положительным целым, h={h}")
    return int(months)


@dataclass(frozen=True)
class HorizonSpec:
    """Горизонт h в годах и длина окна в месяцах."""

    h: Fraction
    window_months: int

    def __post_init__(self):
        object.__setattr__(self, 'h', Fraction(horizon_months(self.h), 12))
        if self.window_months < 24:
            raise DomainError(f"окно должно быть >= 24 месяцев, получено {self.window_months}")

    @property
    def months(self) -> int:
        return int(self.h * 12)

    @property
    def label(self) -> str:
        return str(self.h)


def _parse_dates(column: pd.Series) -> pd.Series:
    """Даты вида YYYYMM, YYYY-MM или YYYY-MM-DD."""
    text = column.astype(str).str.strip()
    if text.map(lambda s: re.fullmatch(r"\d{6}", s) is not None).all():
        return pd.to_datetime(text, format='%Y%m')
    return pd.to_datetime(text)


def _numeric_column(frame: pd.DataFrame, column: str) -> np.ndarray:
    values = pd.to_numeric(frame[column], errors='coerce').to_numpy(dtype=float)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NonFiniteValue(column, int(bad[0]) + 1)
    return values


def load_panel(csv_path: str, predictor_columns: Optional[Sequence[str]] = None) -> ReturnPanel:
    """
    Загрузить и проверить панель из CSV.

    Нужны столбцы date, ex_return (или index_return и tbill) и предикторы.
    Номера строк в ошибках считаются с 1 по строкам данных (без заголовка).

    Raises:
        MissingColumn, NonMonotoneDates, NonFiniteValue
    """
    if predictor_columns is None:
        predictor_columns = get_empirical_config()['predictors']
    predictor_columns = list(predictor_columns)

    frame = pd.read_csv(csv_path)
    frame.columns = [str(c).strip() for c in frame.columns]

    if 'date' not in frame.columns:
        raise MissingColumn('date')
    if 'ex_return' in frame.columns:
        ex_return = _numeric_column(frame, 'ex_return')
        source = 'ex_return'
    elif 'index_return' in frame.columns and 'tbill' in frame.columns:
        ex_return = _numeric_column(frame, 'index_return') - _numeric_column(frame, 'tbill')
        source = 'index_return - tbill'
    else:
        raise MissingColumn('ex_return')
    for column in predictor_columns:
        if column not in frame.columns:
            raise MissingColumn(column)

    try:
        dates = _parse_dates(frame['date'])
    except (ValueError, TypeError) as e:
        raise PanelError(f"не удалось разобрать столбец date: {e}")

    predictors = pd.DataFrame({c: _numeric_column(frame, c) for c in predictor_columns})
    metadata = {"source": os.path.basename(csv_path), "ex_return": source}
    panel = ReturnPanel(pd.DatetimeIndex(dates).to_period('M'), ex_return, predictors, metadata)
    logging.info(f"Загружена панель {csv_path}: {panel.n} месяцев, {len(predictor_columns)} предикторов")
    return panel


def long_horizon_return(ex_return: Sequence[float], h: HorizonLike) -> np.ndarray:
    """Сумма ex_return за 12h месяцев вперёд; длина результата n - 12h + 1."""
    months = horizon_months(h)
    ex_return = np.asarray(ex_return, dtype=float).reshape(-1)
    if ex_return.size < months:
        raise SeriesTooShort(f"ряд из {ex_return.size} месяцев короче горизонта {months}")
    return sliding_window_view(ex_return, months).sum(axis=1)


def build_targets(panel: ReturnPanel, months: int, predictor_lag: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    Цели LongReturn_i и соответствующие строки предикторов.

    Returns:
        (targets, rows): targets[i] = LongReturn_i, rows[i] = i - predictor_lag
        (отрицательная строка означает, что пары нет)

    Raises:
        DomainError: predictor_lag < 1 (предикторы из месяца цели дают заглядывание вперёд)
    """
    if predictor_lag < 1:
        raise DomainError(f"predictor_lag должен быть >= 1, получено {predictor_lag}")
    targets = long_horizon_return(panel.ex_return, Fraction(months, 12))
    return targets, np.arange(targets.size) - predictor_lag


def mpae(forecasts: Sequence[float], realized: Sequence[float]) -> float:
    """Средняя абсолютная ошибка прогноза."""
    forecasts = np.asarray(forecasts, dtype=float).reshape(-1)
    realized = np.asarray(realized, dtype=float).reshape(-1)
    if forecasts.size != realized.size or forecasts.size == 0:
        raise LengthMismatch(f"длины прогнозов ({forecasts.size}) и реализаций ({realized.size}) "
                             f"должны совпадать и быть ненулевыми")
    return math.fsum(np.abs(forecasts - realized)) / forecasts.size


def ar1_coefficient(x: Sequence[float]) -> float:
    """Коэффициент МНК-регрессии x_t на константу и x_{t-1}."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size < 3:
        raise SeriesTooShort("для AR(1) нужно хотя бы 3 наблюдения")
    lagged = x[:-1] - x[:-1].mean()
    current = x[1:] - x[1:].mean()
    denom = float(lagged @ lagged)
    if denom == 0:
        raise DomainError("постоянный ряд: AR(1) не определён")
    return float(lagged @ current) / denom


def persistence_summary(panel: ReturnPanel) -> pd.DataFrame:
    """AR(1)-коэффициенты ex_return и каждого предиктора (nan для постоянного ряда)."""
    series = [('ex_return', panel.ex_return)]
    series.extend((name, panel.predictors[name].to_numpy()) for name in panel.names)
    rows = []
    for name, values in series:
        try:
            rows.append((name, ar1_coefficient(values)))
        except DomainError as e:
            logging.warning(f"AR(1) для {name} не определён: {e}")
            rows.append((name, np.nan))
    return pd.DataFrame(rows, columns=['series', 'ar1'])


def resolve_tuning(estimator: Family, tuning_mode: str = 'auto') -> Optional[str]:
    """'cv' или 'bic' для штрафуемых оценщиков ('auto': BIC для Alasso/TAlasso), None для остальных."""
    if not estimator.is_penalized:
        return None
    if tuning_mode == 'auto':
        return 'bic' if estimator.is_adaptive else 'cv'
    if tuning_mode not in ('cv', 'bic'):
        raise DomainError(f"неизвестный режим настройки: {tuning_mode!r}")
    return tuning_mode


def tuning_modes(estimator: Family, tuning_mode: str = 'auto') -> List[str]:
    """Режимы для одного запуска: 'both' даёт CV и BIC для штрафуемых оценщиков и один прогон для остальных."""
    if tuning_mode != 'both':
        return [tuning_mode]
    return ['cv', 'bic'] if estimator.is_penalized else ['auto']


@dataclass
class ForecastResult:
    """
    Прогнозы по окнам и метрики для пары (горизонт, окно, оценщик).

    Для TAlasso stage1_coefficients - коэффициенты первого этапа (Alasso) по окнам.
    """

    horizon: HorizonSpec
    estimator: Family
    tuning: Optional[str]
    dates: List[str]
    forecasts: np.ndarray
    realized: np.ndarray
    coefficients: np.ndarray
    c_lambda: List[Optional[float]]
    names: List[str]
    failures: int = 0
    failed_windows: List[str] = field(default_factory=list)
    stage1_coefficients: Optional[np.ndarray] = None

    @property
    def mpse(self) -> float:
        return mpse(self.forecasts, self.realized)

    @property
    def rmpse_x100(self) -> float:
        return math.sqrt(self.mpse) * 100.0

    @property
    def mpae_x100(self) -> float:
        return mpae(self.forecasts, self.realized) * 100.0

    def eliminated_share(self) -> Optional[np.ndarray]:
        """Доля активных на первом этапе коэффициентов, обнулённых вторым, по окнам (nan при пустом M1)."""
        if self.stage1_coefficients is None:
            return None
        stage1 = self.stage1_coefficients != 0
        eliminated = (stage1 & (self.coefficients == 0)).sum(axis=1)
        active = stage1.sum(axis=1)
        with np.errstate(invalid='ignore', divide='ignore'):
            return np.where(active > 0, eliminated / np.maximum(active, 1), np.nan)

    def metrics(self) -> Dict[str, object]:
        shares = self.eliminated_share()
        finite = None if shares is None else shares[np.isfinite(shares)]
        return {
            "h": self.horizon.label,
            "window_months": self.horizon.window_months,
            "estimator": self.estimator.value,
            "tuning": self.tuning,
            "windows": len(self.forecasts),
            "failures": self.failures,
            "failed_windows": self.failed_windows,
            "mpse": self.mpse,
            "rmpse_x100": self.rmpse_x100,
            "mpae_x100": self.mpae_x100,
            "eliminated_share_mean": float(finite.mean()) if finite is not None and finite.size else None,
        }


def _forecast_window(task: tuple) -> Tuple[float, np.ndarray, Optional[float], Optional[np.ndarray]]:
    """Один шаг: настройка и оценка по обучающим парам окна, прогноз для x_next."""
    targets, X, x_next, names, estimator, tuning, grid, folds, gamma, include_intercept, loss_scale = task
    if estimator is Family.RWWD:
        return rwwd_forecast(targets), np.zeros(len(names)), None, None

    data = TimeSeriesDataset(targets, X, tuple(names))
    c_lambda, lam = None, 0.0
    if tuning is not None:
        if tuning == 'bic':
            c_lambda = bic_select(data, estimator, grid, gamma, include_intercept, loss_scale)
        else:
            c_lambda = cv_select(data, estimator, grid, folds, gamma, include_intercept, loss_scale)
        lam = penalty_level(c_lambda, data.n, estimator, loss_scale)
    fit = fit_estimator(estimator, data, lam, gamma, include_intercept)
    stage1 = None
    if estimator is Family.TALASSO and fit.stage_detail is not None:
        stage1 = np.array(fit.stage_detail.coefficients)
    return float(fit.predict(x_next)), np.array(fit.coefficients), c_lambda, stage1


def rolling_forecast(panel: ReturnPanel, horizon: HorizonSpec, estimator: Family,
                     tuning_mode: str = 'auto', grid: Optional[Sequence[float]] = None,
                     folds: int = DEFAULT_FOLDS, gamma: float = DEFAULT_GAMMA,
                     predictor_lag: Optional[int] = None, jobs: int = 1,
                     include_intercept: bool = True,
                     loss_scale: LossScale = DEFAULT_LOSS_SCALE) -> ForecastResult:
    """
    Прогноз длинной доходности скользящим окном.

    Для каждого конца окна t обучение идёт на парах (LongReturn_i, X_{i-lag}) с
    t - W + 1 <= i <= t - m + 1, параметр штрафа выбирается заново (CV или BIC),
    прогнозируется LongReturn_{t+1} по X_{t+1-lag}. Данные позже t не используются.
    Окна с ошибкой пропускаются и учитываются в failures.

    Args:
        panel: панель доходностей
        horizon: горизонт и длина окна
        estimator: оценщик (RWWD - среднее обучающих целей, без решателя)
        tuning_mode: 'auto', 'cv' или 'bic'
        predictor_lag: сдвиг предикторов, >= 1 (None - из настроек)
        jobs: число процессов (результат от него не зависит)

    Returns:
        ForecastResult с рядами прогнозов и коэффициентов
    """
    if predictor_lag is None:
        predictor_lag = int(get_empirical_config().get('predictor_lag', 1))
    tuning = resolve_tuning(estimator, tuning_mode)
    grid = tuple(default_grid() if grid is None else grid)
    loss_scale = LossScale(loss_scale)
    months, window = horizon.months, horizon.window_months

    targets, rows = build_targets(panel, months, predictor_lag)
    X = panel.predictors.to_numpy(dtype=float)
    names = panel.names

    # последний конец окна: LongReturn_{t+1} должна быть реализована
    ends = list(range(window - 1, panel.n - months))
    if not ends:
        raise SeriesTooShort(f"панель из {panel.n} месяцев короче окна {window} плюс горизонт {months}")

    tasks = []
    for t in ends:
        train = np.arange(max(t - window + 1, predictor_lag), t - months + 2)
        tasks.append((targets[train], X[rows[train]], X[t + 1 - predictor_lag], names,
                      estimator, tuning, grid, folds, gamma, include_intercept, loss_scale))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            outcomes = list(executor.map(_safe_forecast_window, tasks))
    else:
        outcomes = [_safe_forecast_window(task) for task in tasks]

    dates, forecasts, realized, coefficients, constants, stage1, failed = [], [], [], [], [], [], []
    for t, outcome in zip(ends, outcomes):
        date = str(panel.dates[t + 1])
        if isinstance(outcome, str):
            logging.warning(f"Окно {panel.dates[t]} ({estimator.value}, h={horizon.label}) пропущено: {outcome}")
            log_error('rolling_forecast', outcome, {"window_end": str(panel.dates[t]),
                                                    "estimator": estimator.value, "h": horizon.label})
            failed.append(str(panel.dates[t]))
            continue
        forecast, theta, c_lambda, theta_stage1 = outcome
        dates.append(date)
        forecasts.append(forecast)
        realized.append(float(targets[t + 1]))
        coefficients.append(theta)
        constants.append(c_lambda)
        stage1.append(theta_stage1)

    if not forecasts:
        raise PredLassoError(f"все {len(ends)} окон завершились ошибкой ({estimator.value}, h={horizon.label})")
    logging.info(f"{estimator.value}, h={horizon.label}, окно {window}: {len(forecasts)} прогнозов, "
                 f"ошибок {len(failed)}")
    stage1_coefficients = np.vstack(stage1) if estimator is Family.TALASSO else None
    return ForecastResult(horizon, estimator, tuning, dates, np.array(forecasts), np.array(realized),
                          np.vstack(coefficients), constants, names, len(failed), failed,
                          stage1_coefficients)


def _safe_forecast_window(task: tuple):
    """Ошибки предметной области возвращаются строкой, чтобы пул не прерывался."""
    try:
        return _forecast_window(task)
    except PredLassoError as e:
        return f"{type(e).__name__}: {e}"


def metrics_frame(results: Sequence[ForecastResult]) -> pd.DataFrame:
    """Таблица в раскладке Table 4: строки (оценщик, настройка, окно, метрика), столбцы - горизонты."""
    rows = []
    for result in results:
        for metric in ('rmpse_x100', 'mpae_x100'):
            rows.append({"estimator": result.estimator.value, "tuning": result.tuning or "",
                         "window_months": result.horizon.window_months, "metric": metric,
                         "h": result.horizon.label, "value": getattr(result, metric)})
    if not rows:
        return pd.DataFrame(columns=['estimator', 'tuning', 'window_months', 'metric'])
    frame = pd.DataFrame(rows)
    horizons = list(dict.fromkeys(frame['h']))
    wide = frame.pivot(index=['estimator', 'tuning', 'window_months', 'metric'], columns='h', values='value')
    return wide.reindex(columns=horizons).reset_index()


def forecasts_frame(results: Sequence[ForecastResult]) -> pd.DataFrame:
    frames = [pd.DataFrame({"date": r.dates, "realized": r.realized, "forecast": r.forecasts,
                            "estimator": r.estimator.value, "tuning": r.tuning or "", "h": r.horizon.label,
                            "window_months": r.horizon.window_months}) for r in results]
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()


def coefficients_frame(results: Sequence[ForecastResult]) -> pd.DataFrame:
    frames = []
    for r in results:
        frame = pd.DataFrame(r.coefficients, columns=r.names)
        frame.insert(0, 'c_lambda', [np.nan if c is None else c for c in r.c_lambda])
        frame.insert(0, 'window_months', r.horizon.window_months)
        frame.insert(0, 'h', r.horizon.label)
        frame.insert(0, 'tuning', r.tuning or "")
        frame.insert(0, 'estimator', r.estimator.value)
        frame.insert(0, 'date', r.dates)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()


ACTIVE_SETS_COLUMNS = ['date', 'estimator', 'tuning', 'h', 'window_months',
                       'stage1_active', 'final_active', 'eliminated_share']
ELIMINATION_COLUMNS = ['estimator', 'tuning', 'h', 'window_months', 'predictor',
                       'stage1_active_windows', 'eliminated_windows', 'eliminated_share']


def active_sets_frame(results: Sequence[ForecastResult]) -> pd.DataFrame:
    """Активные множества первого этапа и TAlasso по окнам (имена через ';')."""
    rows = []
    for r in results:
        if r.stage1_coefficients is None:
            continue
        shares = r.eliminated_share()
        for k, date in enumerate(r.dates):
            stage1 = [name for name, b in zip(r.names, r.stage1_coefficients[k]) if b != 0]
            final = [name for name, b in zip(r.names, r.coefficients[k]) if b != 0]
            rows.append((date, r.estimator.value, r.tuning or "", r.horizon.label, r.horizon.window_months,
                         ';'.join(stage1), ';'.join(final), shares[k]))
    return pd.DataFrame(rows, columns=ACTIVE_SETS_COLUMNS)


def elimination_frame(results: Sequence[ForecastResult]) -> pd.DataFrame:
    """
    По каждому предиктору: в скольких окнах он активен на первом этапе и в какой
    доле из них TAlasso его обнуляет (nan, если он ни разу не активен).
    """
    rows = []
    for r in results:
        if r.stage1_coefficients is None:
            continue
        stage1 = r.stage1_coefficients != 0
        active = stage1.sum(axis=0)
        eliminated = (stage1 & (r.coefficients == 0)).sum(axis=0)
        for j, name in enumerate(r.names):
            share = eliminated[j] / active[j] if active[j] else np.nan
            rows.append((r.estimator.value, r.tuning or "", r.horizon.label, r.horizon.window_months, name,
                         int(active[j]), int(eliminated[j]), share))
    return pd.DataFrame(rows, columns=ELIMINATION_COLUMNS)


def write_forecast_reports(results: Sequence[ForecastResult], out_dir: str,
                           header_lines: Sequence[str] = (),
                           provenance: Optional[Dict[str, object]] = None,
                           persistence: Optional[pd.DataFrame] = None) -> List[str]:
    """
    Записать table4_metrics.csv, forecasts.csv, coefficients.csv, active_sets.csv,
    elimination.csv, persistence.csv (если передана) и forecast.json.

    Returns:
        Пути записанных файлов
    """
    os.makedirs(out_dir, exist_ok=True)
    tables = [('table4_metrics.csv', metrics_frame(results)),
              ('forecasts.csv', forecasts_frame(results)),
              ('coefficients.csv', coefficients_frame(results)),
              ('active_sets.csv', active_sets_frame(results)),
              ('elimination.csv', elimination_frame(results))]
    if persistence is not None:
        tables.append(('persistence.csv', persistence))

    paths = []
    for name, frame in tables:
        path = os.path.join(out_dir, name)
        with open(path, 'w', encoding='utf-8', newline='') as f:
            for line in header_lines:
                f.write(f"# {line}\n")
            frame.to_csv(f, index=False, float_format='%.17g', lineterminator='\n')
        paths.append(path)

    path = os.path.join(out_dir, 'forecast.json')
    with open(path, 'w', encoding='utf-8') as f:
        json.dump({"provenance": provenance or {}, "metrics": [r.metrics() for r in results]},
                  f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write('\n')
    paths.append(path)
    logging.info(f"Результаты прогноза записаны в {out_dir}")
    return paths
