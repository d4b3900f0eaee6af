"""
Загрузка конфигурации из YAML файлов и разбор конфигураций запусков.
Настройки по умолчанию подставляются при отсутствии файла или ключей.
"""

import copy
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import yaml

from core import Family
from dgp import Design
from errors import ConfigError
from tuning import LossScale


__version__ = "0.1.0"

DEFAULT_CONFIG: Dict[str, Any] = {
    'project': {
        'name': 'predictive-lasso',
        'version': __version__
    },
    'estimators': {
        'gamma': 1.0,
        'include_intercept': True
    },
    'tuning': {
        'grid_min': 1.0e-5,
        'grid_max': 100.0,
        'grid_points': 36,
        'folds': 10,
        'loss_scale': 'mean'
    },
    'calibration': {
        'reps': 100,
        'n': 200,
        'cache_file': 'results/calibration.json'
    },
    'simulation': {
        'burn_in': 200,
        'reps': 500,
        'n_values': [40, 80, 120, 200, 400, 800],
        'master_seed': 20240601
    },
    'empirical': {
        'predictors': ['dp', 'dy', 'ep', 'tms', 'dfy', 'dfr', 'bm', 'tbl', 'ltr', 'svar', 'infl', 'ntis'],
        'predictor_lag': 1,
        'horizons': ['1/12', '1/4', '1/2', '1', '2', '3'],
        'windows': [120, 180]
    },
    'logging': {
        'level': 'INFO',
        'dir': 'logs'
    }
}


def get_project_root() -> str:
    """Получить путь к корню проекта."""
    return os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Наложить override на копию base (вложенные словари сливаются)."""
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def get_settings_path() -> str:
    """Путь к settings.yaml; переменная PREDLASSO_SETTINGS имеет приоритет."""
    env_path = os.getenv('PREDLASSO_SETTINGS')
    if env_path:
        return env_path
    return os.path.join(get_project_root(), 'config', 'settings.yaml')


def load_config() -> Dict[str, Any]:
    """
    Загрузить основные настройки из config/settings.yaml.

    Returns:
        Словарь настроек, дополненный значениями по умолчанию
    """
    settings_path = get_settings_path()

    try:
        with open(settings_path, 'r', encoding='utf-8') as f:
            config = yaml.safe_load(f) or {}
        if not isinstance(config, dict):
            raise ValueError("корень settings.yaml должен быть словарём")
        logging.debug(f"Конфигурация загружена из {settings_path}")
        return _deep_merge(DEFAULT_CONFIG, config)
    except FileNotFoundError:
        logging.error(f"Файл конфигурации не найден: {settings_path}")
        return copy.deepcopy(DEFAULT_CONFIG)
    except Exception as e:
        logging.error(f"Ошибка при загрузке конфигурации: {e}")
        # Не поднимаем исключение, возвращаем конфигурацию по умолчанию
        return copy.deepcopy(DEFAULT_CONFIG)


def get_project_config() -> Dict[str, Any]:
    """Получить имя и версию проекта."""
    return load_config().get('project', {})


def get_estimators_config() -> Dict[str, Any]:
    """Получить настройки оценщиков (gamma, intercept)."""
    return load_config().get('estimators', {})


def get_tuning_config() -> Dict[str, Any]:
    """
    Получить настройки подбора lambda.

    Raises:
        ConfigError: loss_scale не 'sum' и не 'mean'
    """
    tuning = load_config().get('tuning', {})
    try:
        tuning['loss_scale'] = LossScale(str(tuning.get('loss_scale', 'mean')).lower())
    except ValueError:
        raise ConfigError(f"ожидается 'sum' или 'mean', получено {tuning.get('loss_scale')!r}",
                          field='tuning.loss_scale')
    return tuning


def get_calibration_config() -> Dict[str, Any]:
    """Получить настройки калибровки c_lambda."""
    return load_config().get('calibration', {})


def get_simulation_config() -> Dict[str, Any]:
    """Получить настройки симуляций Монте-Карло."""
    return load_config().get('simulation', {})


def get_empirical_config() -> Dict[str, Any]:
    """
    Получить настройки эмпирического прогноза.

    Raises:
        ConfigError: predictor_lag не целое >= 1
    """
    empirical = load_config().get('empirical', {})
    lag = empirical.get('predictor_lag', 1)
    if isinstance(lag, bool) or not isinstance(lag, int) or lag < 1:
        raise ConfigError(f"predictor_lag должен быть целым >= 1, получено {lag!r}",
                          field='empirical.predictor_lag')
    return empirical


def get_logging_config() -> Dict[str, Any]:
    """Получить конфигурацию логирования."""
    return load_config().get('logging', {})


@dataclass
class MonteCarloConfig:
    """Параметры запуска montecarlo (плоский key = value файл или JSON)."""

    designs: List[Design]
    n_values: List[int]
    estimators: List[Family]
    reps: int
    master_seed: int
    tuning: str = 'calibrate'
    c_lambda: Dict[Family, float] = field(default_factory=dict)
    calibration_reps: int = 100
    calibration_n: int = 200
    gamma: float = 1.0
    coint_screening: bool = True


_LIST_KEYS = {'designs', 'n_values', 'estimators'}
_INT_KEYS = {'reps', 'master_seed', 'calibration_reps', 'calibration_n'}
_FLOAT_KEYS = {'gamma'}
_BOOL_KEYS = {'coint_screening'}
_REQUIRED_KEYS = ('designs', 'estimators', 'master_seed')


def _parse_flat(text: str) -> Dict[str, tuple]:
    """Разобрать key = value строки в словарь key -> (значение, номер строки)."""
    raw: Dict[str, tuple] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split('#', 1)[0].strip()
        if not stripped:
            continue
        if '=' not in stripped:
            raise ConfigError("ожидается 'key = value'", line=lineno)
        key, value = (part.strip() for part in stripped.split('=', 1))
        if not key:
            raise ConfigError("пустой ключ", line=lineno)
        if key in raw:
            raise ConfigError("ключ повторяется", line=lineno, field=key)
        raw[key] = (value, lineno)
    return raw


def _parse_json(text: str) -> Dict[str, tuple]:
    """Разобрать JSON-конфигурацию в тот же вид, что и плоский формат."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"некорректный JSON: {e.msg}", line=e.lineno)
    if not isinstance(data, dict):
        raise ConfigError("корень JSON должен быть объектом")
    raw: Dict[str, tuple] = {}
    for key, value in data.items():
        if key == 'c_lambda' and isinstance(value, dict):
            for family_name, c in value.items():
                raw[f'c_lambda.{family_name}'] = (c, None)
        else:
            raw[key] = (value, None)
    return raw


def _as_list(value: Any) -> List[str]:
    if isinstance(value, list):
        return [str(v).strip() for v in value]
    return [part.strip() for part in str(value).split(',') if part.strip()]


def _convert(key: str, value: Any, line: Optional[int]) -> Any:
    """Привести значение поля к нужному типу, иначе ConfigError."""
    try:
        if key == 'designs':
            return [Design.parse(v) for v in _as_list(value)]
        if key == 'estimators':
            return [Family.parse(v) for v in _as_list(value)]
        if key == 'n_values':
            return [int(v) for v in _as_list(value)]
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _BOOL_KEYS:
            if isinstance(value, bool):
                return value
            text = str(value).lower()
            if text not in ('true', 'false', 'yes', 'no', '1', '0'):
                raise ValueError(f"ожидается булево значение, получено {value!r}")
            return text in ('true', 'yes', '1')
        if key == 'tuning':
            text = str(value).lower()
            if text not in ('calibrate', 'fixed'):
                raise ValueError("ожидается 'calibrate' или 'fixed'")
            return text
    except ValueError as e:
        raise ConfigError(str(e), line=line, field=key)
    raise ConfigError("неизвестный ключ", line=line, field=key)


def load_run_config(path: str) -> MonteCarloConfig:
    """
    Прочитать конфигурацию запуска montecarlo.

    reps и n_values по умолчанию берутся из раздела simulation настроек,
    calibration_reps и calibration_n - из calibration, gamma - из estimators.

    Args:
        path: путь к файлу (key = value, либо .json)

    Returns:
        Проверенный MonteCarloConfig

    Raises:
        ConfigError: синтаксическая ошибка или неверное поле (с номером строки)
    """
    with open(path, 'r', encoding='utf-8') as f:
        text = f.read()

    raw = _parse_json(text) if path.endswith('.json') else _parse_flat(text)

    values: Dict[str, Any] = {}
    c_lambda: Dict[Family, float] = {}
    for key, (value, line) in raw.items():
        if key.startswith('c_lambda.'):
            try:
                family = Family.parse(key.split('.', 1)[1])
                c = float(value)
            except ValueError as e:
                raise ConfigError(str(e), line=line, field=key)
            if c <= 0:
                raise ConfigError("c_lambda должен быть положительным", line=line, field=key)
            c_lambda[family] = c
            continue
        values[key] = _convert(key, value, line)

    for key in _REQUIRED_KEYS:
        if key not in values:
            raise ConfigError("обязательное поле отсутствует или пусто", field=key)
    for key in _LIST_KEYS:
        if key in values and not values[key]:
            raise ConfigError("обязательное поле отсутствует или пусто", line=raw[key][1], field=key)

    simulation = get_simulation_config()
    calibration = get_calibration_config()
    values.setdefault('reps', int(simulation['reps']))
    values.setdefault('n_values', [int(n) for n in simulation['n_values']])
    values.setdefault('calibration_reps', int(calibration['reps']))
    values.setdefault('calibration_n', int(calibration['n']))
    values.setdefault('gamma', float(get_estimators_config()['gamma']))

    if values['reps'] < 1:
        raise ConfigError("reps должен быть >= 1", line=raw.get('reps', (None, None))[1], field='reps')
    if any(n < 20 for n in values['n_values']):
        raise ConfigError("все n должны быть >= 20", line=raw.get('n_values', (None, None))[1],
                          field='n_values')

    config = MonteCarloConfig(c_lambda=c_lambda, **values)
    if config.tuning == 'fixed':
        missing = [f.value for f in config.estimators if f.is_penalized and f not in c_lambda]
        if missing:
            raise ConfigError(f"tuning = fixed, но не заданы c_lambda для: {', '.join(missing)}",
                              field='c_lambda')
    return config
