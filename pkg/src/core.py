"""
Примитивы наименьших квадратов и взвешенного L1-штрафа.
Общая основа для всех оценщиков: OLS, soft-thresholding,
координатный спуск для ||y - W theta||^2 + lambda * sum_j tau_j |theta_j|
и проверка условий Каруша-Куна-Таккера.
"""

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, FrozenSet, Iterable, Optional, Sequence, Tuple

import numpy as np

from errors import ConstantColumn, DimensionMismatch, DomainError, NonConvergence, SingularDesign


DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100_000
DEFAULT_KKT_TOL = 1e-6


class Family(str, Enum):
    """Семейство оценщиков (RWWD - эталонный прогноз без регрессоров)."""

    PLASSO = "plasso"
    SLASSO = "slasso"
    ALASSO = "alasso"
    TALASSO = "talasso"
    OLS = "ols"
    ORACLE = "oracle"
    RWWD = "rwwd"

    @classmethod
    def parse(cls, name: str) -> "Family":
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise ValueError(f"неизвестный оценщик: {name!r}")

    @property
    def is_penalized(self) -> bool:
        return self in (Family.PLASSO, Family.SLASSO, Family.ALASSO, Family.TALASSO)

    @property
    def is_adaptive(self) -> bool:
        return self in (Family.ALASSO, Family.TALASSO)


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    """
    Отклик y (n) и матрица предикторов W (n x p).

    truth заполняется только для симулированных данных (dgp.TruthInfo).
    """

    y: np.ndarray
    W: np.ndarray
    names: Tuple[str, ...] = ()
    truth: Optional[Any] = None

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        W = np.array(self.W, dtype=float)
        if W.ndim == 1:
            W = W.reshape(-1, 1)
        if y.ndim != 1 or W.ndim != 2:
            raise DimensionMismatch("y должен быть вектором, W - матрицей")
        if W.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"в y {y.shape[0]} наблюдений, в W {W.shape[0]}")
        n, p = W.shape
        if n < p + 2:
            raise DimensionMismatch(f"нужно n >= p + 2, получено n={n}, p={p}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(W))):
            raise DomainError("в данных есть нечисловые значения")

        names = tuple(self.names) if self.names else tuple(f"x{j + 1}" for j in range(p))
        if len(names) != p:
            raise DimensionMismatch(f"{len(names)} имён для {p} столбцов")

        y.flags.writeable = False
        W.flags.writeable = False
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'W', W)
        object.__setattr__(self, 'names', names)

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def p(self) -> int:
        return self.W.shape[1]

    def rows(self, index) -> "TimeSeriesDataset":
        """Подвыборка наблюдений (истина сохраняется)."""
        return TimeSeriesDataset(self.y[index], self.W[index], self.names, self.truth)

    def columns(self, index: Sequence[int]) -> "TimeSeriesDataset":
        """Подмножество столбцов; истина относится к полному набору и отбрасывается."""
        index = list(index)
        return TimeSeriesDataset(self.y, self.W[:, index], tuple(self.names[j] for j in index))

    def with_column_scaled(self, j: int, c: float) -> "TimeSeriesDataset":
        """Копия с j-м столбцом, умноженным на c."""
        W = self.W.copy()
        W[:, j] *= c
        return TimeSeriesDataset(self.y, W, self.names, self.truth)


@dataclass(frozen=True, eq=False)
class PenaltySpec:
    """Семейство, lambda, веса tau_j (inf - коэффициент принудительно 0) и gamma."""

    family: Family
    lam: float
    weights: np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if not np.isfinite(self.lam) or self.lam < 0:
            raise DomainError(f"lambda должна быть конечной и >= 0, получено {self.lam}")
        if np.any(np.isnan(weights)) or np.any(weights < 0):
            raise DomainError("веса штрафа должны быть >= 0 (inf допускается)")
        if self.gamma < 1:
            raise DomainError(f"gamma должна быть >= 1, получено {self.gamma}")
        weights.flags.writeable = False
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'lam', float(self.lam))


@dataclass(frozen=True, eq=False)
class FitResult:
    """Результат оценки; active_set - индексы ненулевых коэффициентов (с 0)."""

    coefficients: np.ndarray
    intercept: float
    active_set: FrozenSet[int]
    objective: float
    iterations: int
    converged: bool
    penalty: Optional[PenaltySpec] = None
    stage_detail: Optional["FitResult"] = field(default=None, repr=False)

    def predict(self, W: np.ndarray) -> np.ndarray:
        """Прогноз intercept + W theta для матрицы (или одной строки) предикторов."""
        W = np.asarray(W, dtype=float)
        return self.intercept + W @ self.coefficients


def make_fit(coefficients: np.ndarray, intercept: float, objective: float, iterations: int,
             converged: bool, penalty: Optional[PenaltySpec] = None,
             stage_detail: Optional[FitResult] = None) -> FitResult:
    """Собрать FitResult; активное множество выводится из ненулевых координат."""
    coefficients = np.array(coefficients, dtype=float)
    coefficients.flags.writeable = False
    active = frozenset(int(j) for j in np.flatnonzero(coefficients))
    return FitResult(coefficients, float(intercept), active, float(objective),
                     int(iterations), bool(converged), penalty, stage_detail)


def _penalized_objective(data: TimeSeriesDataset, theta: np.ndarray, intercept: float,
                         lam: float, weights: np.ndarray) -> float:
    resid = data.y - intercept - data.W @ theta
    nz = theta != 0
    return float(resid @ resid + lam * np.sum(weights[nz] * np.abs(theta[nz])))


def sample_std(x: Iterable[float]) -> float:
    """Выборочное стандартное отклонение с делителем 1/n."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size == 0:
        raise DimensionMismatch("sample_std требует хотя бы одно наблюдение")
    return float(np.sqrt(np.mean((x - x.mean()) ** 2)))


def soft_threshold(z: float, t: float) -> float:
    """sign(z) * max(|z| - t, 0)."""
    if t < 0:
        raise DomainError(f"порог должен быть >= 0, получено {t}")
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def ols_fit(data: TimeSeriesDataset, subset: Optional[Iterable[int]] = None,
            include_intercept: bool = True) -> FitResult:
    """
    Точный МНК по столбцам subset (None - все столбцы).

    Коэффициенты вне subset равны нулю. Пустой subset с intercept даёт
    регрессию на константу.

    Raises:
        SingularDesign: матрица Грама подвыборки вырождена
        DimensionMismatch: индекс вне 0..p-1
    """
    p = data.p
    cols = list(range(p)) if subset is None else sorted({int(j) for j in subset})
    if any(j < 0 or j >= p for j in cols):
        raise DimensionMismatch(f"индексы subset вне диапазона 0..{p - 1}: {cols}")

    weights = np.full(p, np.inf)
    weights[cols] = 0.0
    penalty = PenaltySpec(Family.OLS, 0.0, weights)
    theta = np.zeros(p)

    blocks = [np.ones((data.n, 1))] if include_intercept else []
    if cols:
        blocks.append(data.W[:, cols])
    if not blocks:
        return make_fit(theta, 0.0, float(data.y @ data.y), 0, True, penalty)

    A = np.hstack(blocks)
    singular_values = np.linalg.svd(A, compute_uv=False)
    rank_tol = singular_values.max() * max(A.shape) * np.finfo(float).eps
    if singular_values.max() == 0 or np.sum(singular_values > rank_tol) < A.shape[1]:
        raise SingularDesign(f"вырожденная матрица Грама для столбцов {cols}")

    solution = np.linalg.lstsq(A, data.y, rcond=None)[0]
    intercept = solution[0] if include_intercept else 0.0
    theta[cols] = solution[1:] if include_intercept else solution
    resid = data.y - A @ solution
    return make_fit(theta, intercept, float(resid @ resid), 1, True, penalty)


def _centered(data: TimeSeriesDataset, include_intercept: bool):
    if include_intercept:
        y_mean = float(data.y.mean())
        x_mean = data.W.mean(axis=0)
        return data.y - y_mean, data.W - x_mean, y_mean, x_mean
    return data.y, data.W, 0.0, np.zeros(data.p)


def lambda_max(data: TimeSeriesDataset, weights: Optional[np.ndarray] = None,
               include_intercept: bool = True) -> float:
    """Наименьшая lambda, при которой все коэффициенты равны нулю."""
    yc, Wc, _, _ = _centered(data, include_intercept)
    grad = 2.0 * np.abs(Wc.T @ yc)
    weights = np.ones(data.p) if weights is None else np.asarray(weights, dtype=float)
    finite = np.isfinite(weights)
    if np.any(finite & (weights == 0) & (grad > 0)):
        return float('inf')
    usable = finite & (weights > 0)
    if not np.any(usable):
        return 0.0
    return float(np.max(grad[usable] / weights[usable]))


def _coordinate_descent(G: np.ndarray, c: np.ndarray, thresholds: np.ndarray, psi: np.ndarray,
                        tol: float, max_iter: int) -> Tuple[np.ndarray, int, bool]:
    """Циклический спуск по psi: min ||y - X psi||^2 + 2 * sum thr_j |psi_j|."""
    diag = np.diag(G)
    for sweep in range(1, max_iter + 1):
        max_change = 0.0
        for j in range(psi.size):
            old = psi[j]
            rho = c[j] - G[j] @ psi + diag[j] * old
            new = soft_threshold(rho, thresholds[j]) / diag[j]
            if new != old:
                psi[j] = new
                max_change = max(max_change, abs(new - old))
        if max_change < tol * max(1.0, float(np.max(np.abs(psi), initial=0.0))):
            return psi, sweep, True
    return psi, max_iter, False


def _refine_active_set(G: np.ndarray, c: np.ndarray, thresholds: np.ndarray,
                       psi: np.ndarray) -> np.ndarray:
    """
    Точное решение при фиксированных активном множестве и знаках.

    Возвращает исходный psi, если решение нарушает знаки или KKT на неактивных.
    """
    active = np.flatnonzero(psi)
    if active.size == 0:
        return psi
    signs = np.sign(psi[active])
    try:
        solution = np.linalg.solve(G[np.ix_(active, active)], c[active] - thresholds[active] * signs)
    except np.linalg.LinAlgError:
        return psi
    if np.any(np.sign(solution) != signs):
        return psi

    candidate = np.zeros_like(psi)
    candidate[active] = solution
    grad = c - G @ candidate
    slack = 1e-9 * max(1.0, float(np.max(np.abs(c))))
    inactive = np.setdiff1d(np.arange(psi.size), active)
    if np.any(np.abs(grad[inactive]) > thresholds[inactive] + slack):
        return psi
    return candidate


def weighted_lasso_solve(data: TimeSeriesDataset, penalty: PenaltySpec, include_intercept: bool = True,
                         warm_start: Optional[np.ndarray] = None, tol: float = DEFAULT_TOL,
                         max_iter: int = DEFAULT_MAX_ITER) -> FitResult:
    """
    Минимизировать ||y - b0 - W theta||^2 + lambda * sum_j tau_j |theta_j|.

    Свободный член не штрафуется и исключается центрированием. Координаты с
    tau_j = inf исключаются до решения и возвращаются точными нулями.
    Спуск ведётся по psi_j = ||w_j|| theta_j, после сходимости активное
    множество уточняется точным решением условий стационарности.

    Args:
        data: данные
        penalty: lambda и веса
        include_intercept: оценивать ли свободный член
        warm_start: начальная точка theta (по умолчанию ноль)
        tol: порог максимального изменения координаты за проход
        max_iter: предельное число проходов

    Returns:
        FitResult; при исчерпании max_iter converged=False и выдаётся NonConvergence
    """
    weights = penalty.weights
    if weights.size != data.p:
        raise DimensionMismatch(f"{weights.size} весов для {data.p} столбцов")

    yc, Wc, y_mean, x_mean = _centered(data, include_intercept)
    norms = np.sqrt(np.sum(Wc ** 2, axis=0))
    free = np.flatnonzero(np.isfinite(weights) & (norms > 0))

    theta = np.zeros(data.p)
    iterations, converged = 0, True
    if free.size:
        X = Wc[:, free] / norms[free]
        G = X.T @ X
        c = X.T @ yc
        thresholds = penalty.lam * weights[free] / (2.0 * norms[free])

        psi = np.zeros(free.size)
        if warm_start is not None:
            warm_start = np.asarray(warm_start, dtype=float)
            if warm_start.size != data.p:
                raise DimensionMismatch("warm_start должен иметь длину p")
            psi = warm_start[free] * norms[free]

        psi, iterations, converged = _coordinate_descent(G, c, thresholds, psi, tol, max_iter)
        psi = _refine_active_set(G, c, thresholds, psi)
        theta[free] = psi / norms[free]

    if not converged:
        logging.warning(f"Координатный спуск не сошёлся за {max_iter} проходов "
                        f"({penalty.family.value}, lambda={penalty.lam:.6g})")
        warnings.warn(f"координатный спуск не сошёлся за {max_iter} проходов", NonConvergence)

    intercept = y_mean - float(x_mean @ theta) if include_intercept else 0.0
    objective = _penalized_objective(data, theta, intercept, penalty.lam, weights)
    return make_fit(theta, intercept, objective, iterations, converged, penalty)


def kkt_violation(data: TimeSeriesDataset, fit: FitResult) -> float:
    """
    Наибольшее нарушение условий KKT, нормированное на max(1, ||2 W'y||_inf).

    Для j из активного множества |2 w_j'r - lambda tau_j sgn(theta_j)|,
    для остальных max(0, |2 w_j'r| - lambda tau_j).
    """
    if fit.penalty is None:
        raise DomainError("FitResult не содержит штрафа для проверки KKT")
    lam, weights = fit.penalty.lam, fit.penalty.weights
    theta = fit.coefficients
    resid = data.y - fit.intercept - data.W @ theta
    grad = 2.0 * (data.W.T @ resid)
    scale = max(1.0, float(np.max(np.abs(2.0 * (data.W.T @ data.y)))))

    violation = 0.0
    for j in range(data.p):
        if theta[j] != 0:
            gap = abs(grad[j] - lam * weights[j] * np.sign(theta[j]))
        elif np.isinf(weights[j]):
            gap = 0.0
        else:
            gap = max(0.0, abs(grad[j]) - lam * weights[j])
        violation = max(violation, float(gap))
    return violation / scale


def check_kkt(data: TimeSeriesDataset, fit: FitResult, kkt_tol: float = DEFAULT_KKT_TOL) -> bool:
    """True, если решение удовлетворяет KKT с точностью kkt_tol."""
    return kkt_violation(data, fit) <= kkt_tol


def warn_constant_columns(data: TimeSeriesDataset, sigma: np.ndarray) -> None:
    """Предупредить о столбцах с нулевым sigma_j (их коэффициенты не штрафуются)."""
    constant = [data.names[j] for j in np.flatnonzero(sigma == 0)]
    if constant:
        logging.warning(f"Постоянные столбцы без штрафа: {', '.join(constant)}")
        warnings.warn(f"постоянные столбцы: {', '.join(constant)}", ConstantColumn)
