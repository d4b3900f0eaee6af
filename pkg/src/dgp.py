"""
Генераторы данных для трёх дизайнов Монте-Карло.

DGP1 - восемь независимых случайных блужданий.
DGP2 - стационарные AR(1), коинтегрированный VECM-блок ранга 2 и блуждания.
DGP3 - ARDL с лагом отклика, тем же VECM-блоком, блужданием и его лагом, AR(1) с лагами.

Случайность: numpy Generator на PCG64, нормальные величины методом зиккурата
(Generator.standard_normal). Порядок выборок фиксирован внутри каждой функции,
поэтому (n, seed) однозначно определяет данные на любой платформе.
Каждый генератор возвращает n + 1 строку: последняя - отложенное наблюдение.
"""

import json
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core import TimeSeriesDataset
from errors import DomainError


DEFAULT_BURN_IN = 200


# Матрица коинтеграции и матрица нагрузок VECM-блока
COINT_LAMBDA = np.array([[1.0, -1.0, 0.0, 0.0],
                         [0.0, 0.0, 1.0, -1.0]])
COINT_GAMMA = np.array([[0.0, 1.0, 0.0, 0.0],
                        [0.0, 0.0, 0.0, 1.0]])


class Design(str, Enum):
    DGP1 = "dgp1"
    DGP2 = "dgp2"
    DGP3 = "dgp3"

    @classmethod
    def parse(cls, name: str) -> "Design":
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise ValueError(f"неизвестный дизайн: {name!r}")

    @property
    def index(self) -> int:
        return int(self.value[-1])


class Persistence(str, Enum):
    """I0 - стационарный, C1/C2 - коинтегрированный (активная/неактивная группа), I1 - единичный корень."""

    I0 = "I0"
    C1 = "C1"
    C2 = "C2"
    I1 = "I1"


@dataclass(frozen=True, eq=False)
class TruthInfo:
    """Истинные коэффициенты (уже делённые на sqrt(n)), активное множество и типы столбцов."""

    theta_star: np.ndarray
    intercept_star: float
    active_set: FrozenSet[int]
    persistence: Tuple[Persistence, ...]
    coint_matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        nonzero = frozenset(int(j) for j in np.flatnonzero(self.theta_star))
        if nonzero != self.active_set:
            raise DomainError("active_set не совпадает с ненулевыми theta_star")
        if len(self.persistence) != len(self.theta_star):
            raise DomainError("persistence должен иметь длину p")

    def columns_with(self, *labels: Persistence) -> List[int]:
        return [j for j, label in enumerate(self.persistence) if label in labels]

    def to_dict(self, names: Sequence[str]) -> Dict:
        return {
            "theta_star": {name: float(v) for name, v in zip(names, self.theta_star)},
            "intercept_star": float(self.intercept_star),
            "active_set": [names[j] for j in sorted(self.active_set)],
            "persistence": {name: label.value for name, label in zip(names, self.persistence)},
            "coint_matrix": None if self.coint_matrix is None else self.coint_matrix.tolist(),
        }


@dataclass(frozen=True)
class DgpSpec:
    design: Design
    n: int
    seed: int
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self):
        if self.n < 20:
            raise DomainError(f"n должно быть >= 20, получено {self.n}")
        if self.burn_in < 0:
            raise DomainError(f"burn_in должен быть >= 0, получено {self.burn_in}")


def replication_seeds(master_seed: int, reps: int, *key: int) -> List[int]:
    """
    Независимые 64-битные зерна репликаций из мастер-зерна.

    key (например, номер дизайна и n) разводит потоки разных ячеек.
    """
    sequence = np.random.SeedSequence([int(master_seed), *[int(k) for k in key]])
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in sequence.spawn(reps)]


def _ar1(shocks: np.ndarray, coef: float) -> np.ndarray:
    """AR(1) по столбцам из нулевого начального значения."""
    out = np.empty_like(shocks)
    prev = np.zeros(shocks.shape[1:])
    for t in range(shocks.shape[0]):
        prev = coef * prev + shocks[t]
        out[t] = prev
    return out


def _vecm(shocks: np.ndarray) -> np.ndarray:
    """Delta x_i = Gamma' Lambda x_{i-1} + e_i из x_0 = 0."""
    loading = COINT_GAMMA.T @ COINT_LAMBDA
    out = np.empty_like(shocks)
    prev = np.zeros(shocks.shape[1])
    for t in range(shocks.shape[0]):
        prev = prev + loading @ prev + shocks[t]
        out[t] = prev
    return out


def _coint_block(e_common: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """Ошибки VECM-блока: e2 = e1 - nu1, e4 = e3 - nu2."""
    e = np.empty((e_common.shape[0], 4))
    e[:, 0] = e_common[:, 0]
    e[:, 1] = e_common[:, 0] - nu[:, 0]
    e[:, 2] = e_common[:, 1]
    e[:, 3] = e_common[:, 1] - nu[:, 1]
    return _vecm(e)


def _embed_lambda(p: int, first_column: int) -> np.ndarray:
    matrix = np.zeros((COINT_LAMBDA.shape[0], p))
    matrix[:, first_column:first_column + 4] = COINT_LAMBDA
    return matrix


def simulate_dgp1(n: int, seed: int, burn_in: int = DEFAULT_BURN_IN,
                  noise_scale: float = 1.0) -> TimeSeriesDataset:
    """Восемь блужданий из нуля, y = 0.25 + x beta_n + u, beta_n = (1,1,1,1,0,0,0,0)/sqrt(n)."""
    DgpSpec(Design.DGP1, n, seed, burn_in)
    rng = np.random.default_rng(seed)
    rows = n + 1

    e = rng.standard_normal((rows, 8)) * noise_scale
    u = rng.standard_normal(rows) * noise_scale

    x = np.cumsum(e, axis=0)
    theta = np.r_[np.ones(4), np.zeros(4)] / np.sqrt(n)
    y = 0.25 + x @ theta + u

    truth = TruthInfo(theta, 0.25, frozenset(range(4)), (Persistence.I1,) * 8)
    return TimeSeriesDataset(y, x, tuple(f"x{j + 1}" for j in range(8)), truth)


def simulate_dgp2(n: int, seed: int, burn_in: int = DEFAULT_BURN_IN,
                  noise_scale: float = 1.0) -> TimeSeriesDataset:
    """
    Смешанные корни: столбцы (z1, z2, xc1..xc4, x1, x2).

    z - AR(1) с коэффициентом 0.5, nu - AR(1) с 0.2, оба с разгоном burn_in;
    xc - VECM ранга 2, x - блуждания. gamma* = 0.3, alpha* = (0.4, 0),
    phi* = (0.3, -0.3, 0, 0), beta_n = (1/sqrt(n), 0).
    """
    DgpSpec(Design.DGP2, n, seed, burn_in)
    rng = np.random.default_rng(seed)
    rows = n + 1
    total = burn_in + rows

    z_shocks = rng.standard_normal((total, 2)) * noise_scale
    nu_shocks = rng.standard_normal((total, 2)) * noise_scale
    e_common = rng.standard_normal((rows, 2)) * noise_scale
    x_shocks = rng.standard_normal((rows, 2)) * noise_scale
    u = rng.standard_normal(rows) * noise_scale

    z = _ar1(z_shocks, 0.5)[burn_in:]
    nu = _ar1(nu_shocks, 0.2)[burn_in:]
    xc = _coint_block(e_common, nu)
    x = np.cumsum(x_shocks, axis=0)

    W = np.column_stack([z, xc, x])
    theta = np.array([0.4, 0.0, 0.3, -0.3, 0.0, 0.0, 1.0 / np.sqrt(n), 0.0])
    y = 0.3 + W @ theta + u

    persistence = (Persistence.I0,) * 2 + (Persistence.C1,) * 2 + (Persistence.C2,) * 2 + (Persistence.I1,) * 2
    truth = TruthInfo(theta, 0.3, frozenset({0, 2, 3, 6}), persistence, _embed_lambda(8, 2))
    names = ('z1', 'z2', 'xc1', 'xc2', 'xc3', 'xc4', 'x1', 'x2')
    return TimeSeriesDataset(y, W, names, truth)


def simulate_dgp3(n: int, seed: int, burn_in: int = DEFAULT_BURN_IN,
                  noise_scale: float = 1.0) -> TimeSeriesDataset:
    """
    ARDL: y_i = 0.3 + 0.4 y_{i-1} + xc_i phi + 1.5/sqrt(n) x_i + 0 x_{i-1}
    + sum_l (alpha_l1 z_il + alpha_l2 z_{i-1,l}) + u_i.

    Столбцы: y_lag1, xc1..xc4, x, x_lag1, z1..z3, z1_lag1..z3_lag1 (p = 13).
    z - AR(1) с коэффициентами (0.5, 0.2, 0.2), nu - AR(1) с 0.4.
    До начала выборки блуждания равны нулю, рекурсия y и стационарные
    компоненты проходят разгон burn_in.
    """
    DgpSpec(Design.DGP3, n, seed, burn_in)
    rng = np.random.default_rng(seed)
    rows = n + 1
    total = burn_in + rows + 1
    start = total - rows

    z_shocks = rng.standard_normal((total, 3)) * noise_scale
    nu_shocks = rng.standard_normal((total, 2)) * noise_scale
    e_common = rng.standard_normal((rows, 2)) * noise_scale
    x_shocks = rng.standard_normal(rows) * noise_scale
    u = rng.standard_normal(total) * noise_scale

    z = np.column_stack([_ar1(z_shocks[:, [l]], coef)[:, 0] for l, coef in enumerate((0.5, 0.2, 0.2))])
    nu = _ar1(nu_shocks, 0.4)[start:]
    xc = np.zeros((total, 4))
    xc[start:] = _coint_block(e_common, nu)
    x = np.zeros(total)
    x[start:] = np.cumsum(x_shocks)

    phi = np.array([0.75, -0.75, 0.0, 0.0])
    beta = np.array([1.5 / np.sqrt(n), 0.0])
    alpha = np.array([[0.6, 0.4], [0.8, 0.0], [0.0, 0.0]])

    y = np.empty(total)
    y_prev, x_prev, z_prev = 0.0, 0.0, np.zeros(3)
    for t in range(total):
        y[t] = (0.3 + 0.4 * y_prev + xc[t] @ phi + beta[0] * x[t] + beta[1] * x_prev
                + z[t] @ alpha[:, 0] + z_prev @ alpha[:, 1] + u[t])
        y_prev, x_prev, z_prev = y[t], x[t], z[t]

    sample = slice(start, total)
    lagged = slice(start - 1, total - 1)
    W = np.column_stack([y[lagged], xc[sample], x[sample], x[lagged], z[sample], z[lagged]])
    theta = np.r_[0.4, phi, beta, alpha[:, 0], alpha[:, 1]]

    persistence = ((Persistence.I0,) + (Persistence.C1,) * 2 + (Persistence.C2,) * 2
                   + (Persistence.I1,) * 2 + (Persistence.I0,) * 6)
    truth = TruthInfo(theta, 0.3, frozenset(int(j) for j in np.flatnonzero(theta)), persistence,
                      _embed_lambda(13, 1))
    names = ('y_lag1', 'xc1', 'xc2', 'xc3', 'xc4', 'x', 'x_lag1',
             'z1', 'z2', 'z3', 'z1_lag1', 'z2_lag1', 'z3_lag1')
    return TimeSeriesDataset(y[sample], W, names, truth)


_SIMULATORS = {
    Design.DGP1: simulate_dgp1,
    Design.DGP2: simulate_dgp2,
    Design.DGP3: simulate_dgp3,
}


def simulate(spec: DgpSpec, noise_scale: float = 1.0) -> TimeSeriesDataset:
    """Сгенерировать данные по спецификации."""
    return _SIMULATORS[spec.design](spec.n, spec.seed, spec.burn_in, noise_scale)


def dataset_frame(data: TimeSeriesDataset) -> pd.DataFrame:
    """Таблица t, y, предикторы (t с единицы)."""
    frame = pd.DataFrame(data.W, columns=list(data.names))
    frame.insert(0, 'y', data.y)
    frame.insert(0, 't', np.arange(1, data.n + 1))
    return frame


def write_dataset_csv(data: TimeSeriesDataset, path: str, header_lines: Iterable[str] = ()) -> None:
    """Записать данные в CSV; header_lines пишутся строками-комментариями '# ...'."""
    with open(path, 'w', encoding='utf-8', newline='') as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        dataset_frame(data).to_csv(f, index=False, float_format='%.17g', lineterminator='\n')


def write_truth_json(data: TimeSeriesDataset, path: str, extra: Optional[Dict] = None) -> None:
    """Записать истину симуляции в JSON рядом с CSV."""
    if data.truth is None:
        raise DomainError("у данных нет истины для записи")
    payload = dict(extra or {})
    payload["truth"] = data.truth.to_dict(data.names)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write('\n')
