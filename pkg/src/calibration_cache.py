"""
Хранилище откалиброванных констант c_lambda.
Синглтон в памяти процесса плюс JSON-файл рядом с результатами.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import tuning
from core import Family
from dgp import Design
from estimators import DEFAULT_GAMMA


def _grid_key(grid: Optional[Sequence[float]]) -> Tuple[float, ...]:
    return tuple(float(c) for c in (tuning.default_grid() if grid is None else grid))


@dataclass(frozen=True)
class CalibrationRecord:
    """Результат калибровки для пары (дизайн, оценщик) и протокола, которым он получен."""

    design: str
    family: str
    c_lambda: float
    reps: int
    n: int
    master_seed: int
    folds: int = tuning.DEFAULT_FOLDS
    gamma: float = DEFAULT_GAMMA
    grid: Tuple[float, ...] = tuning.default_grid()
    loss_scale: str = tuning.DEFAULT_LOSS_SCALE.value

    def __post_init__(self):
        # из JSON сетка приходит списком
        object.__setattr__(self, 'grid', _grid_key(self.grid))

    @property
    def key(self) -> Tuple:
        return (self.design, self.family, self.reps, self.n, self.master_seed, self.folds,
                float(self.gamma), self.grid, self.loss_scale)


class CalibrationCache:
    """Кэш констант c_lambda, общий для всех ячеек Монте-Карло."""

    _instance = None
    _records: Dict[Tuple, CalibrationRecord] = {}

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(CalibrationCache, cls).__new__(cls)
        return cls._instance

    def get(self, design: Design, family: Family, reps: int, n: int, master_seed: int,
            folds: int = tuning.DEFAULT_FOLDS, gamma: float = DEFAULT_GAMMA,
            grid: Optional[Sequence[float]] = None,
            loss_scale: tuning.LossScale = tuning.DEFAULT_LOSS_SCALE) -> Optional[CalibrationRecord]:
        """Найти запись или None (сетка None - сетка по умолчанию)."""
        key = (design.value, family.value, reps, n, master_seed, folds, float(gamma),
               _grid_key(grid), tuning.LossScale(loss_scale).value)
        return self._records.get(key)

    def put(self, record: CalibrationRecord) -> None:
        self._records[record.key] = record

    def calibrated(self, design: Design, family: Family, reps: int = 100, n: int = 200,
                   master_seed: int = 0, grid: Optional[Sequence[float]] = None,
                   folds: int = tuning.DEFAULT_FOLDS, gamma: float = DEFAULT_GAMMA,
                   jobs: int = 1, include_intercept: bool = True,
                   loss_scale: tuning.LossScale = tuning.DEFAULT_LOSS_SCALE) -> float:
        """
        c_lambda из кэша, либо калибровка и запись в кэш.

        Args:
            design: дизайн симуляции
            family: штрафуемый оценщик
            reps, n, master_seed, grid, folds, gamma, loss_scale: протокол калибровки (ключ кэша)

        Returns:
            Откалиброванная константа c_lambda
        """
        loss_scale = tuning.LossScale(loss_scale)
        cached = self.get(design, family, reps, n, master_seed, folds, gamma, grid, loss_scale)
        if cached is not None:
            logging.debug(f"c_lambda из кэша: {design.value}/{family.value}={cached.c_lambda:.6g}")
            return cached.c_lambda

        c_lambda = tuning.calibrate_clambda(design, family, reps, n, master_seed, grid, folds, gamma,
                                            jobs=jobs, include_intercept=include_intercept,
                                            loss_scale=loss_scale)
        self.put(CalibrationRecord(design.value, family.value, float(c_lambda), reps, n,
                                   master_seed, folds, float(gamma), _grid_key(grid), loss_scale.value))
        return c_lambda

    def load(self, path: str) -> int:
        """
        Загрузить записи из JSON-файла.

        Returns:
            Число загруженных записей (0, если файла нет или он повреждён)
        """
        if not os.path.exists(path):
            return 0
        try:
            with open(path, 'r', encoding='utf-8') as f:
                payload = json.load(f)
            records = [CalibrationRecord(**entry) for entry in payload.get('calibrations', [])]
        except (OSError, ValueError, TypeError) as e:
            logging.error(f"Ошибка чтения файла калибровки {path}: {e}")
            return 0
        for record in records:
            self.put(record)
        logging.info(f"Загружено {len(records)} констант c_lambda из {path}")
        return len(records)

    def save(self, path: str) -> None:
        """Записать все записи в JSON (порядок ключей и записей фиксирован)."""
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        entries = [asdict(self._records[key]) for key in sorted(self._records)]
        with open(path, 'w', encoding='utf-8') as f:
            json.dump({"calibrations": entries}, f, ensure_ascii=False, indent=2, sort_keys=True)
            f.write('\n')

    def records(self) -> List[CalibrationRecord]:
        return [self._records[key] for key in sorted(self._records)]

    def clear(self) -> None:
        self._records.clear()

    def get_stats(self) -> Dict[str, Any]:
        """Статистика кэша."""
        return {
            "total_records": len(self._records),
            "designs": sorted({record.design for record in self._records.values()}),
            "families": sorted({record.family for record in self._records.values()}),
        }


# Глобальный экземпляр
calibration_cache = CalibrationCache()
