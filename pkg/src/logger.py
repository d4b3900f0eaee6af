"""
Система логирования predictive-lasso.
Текстовый лог по дням плюс JSON-строки для запусков и ошибок.
"""

import json
import logging
import os
from datetime import date, datetime
from typing import Any, Dict, Optional


def get_project_root() -> str:
    """Получить путь к корню проекта."""
    return os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def get_logs_dir(log_dir: Optional[str] = None) -> str:
    """Каталог логов: аргумент, затем PREDLASSO_LOG_DIR, затем <root>/logs."""
    if log_dir is None:
        log_dir = os.getenv('PREDLASSO_LOG_DIR')
    if log_dir is None:
        log_dir = os.path.join(get_project_root(), 'logs')
    elif not os.path.isabs(log_dir):
        log_dir = os.path.join(get_project_root(), log_dir)
    return log_dir


def setup_logging(level: str = "INFO", log_dir: Optional[str] = None) -> None:
    """Настройка Python logging с записью в файл по дням и в stderr."""
    logs_dir = get_logs_dir(log_dir)

    # Создаем папку для логов если не существует
    os.makedirs(logs_dir, exist_ok=True)

    today = date.today().strftime("%Y-%m-%d")
    log_file = os.path.join(logs_dir, f'app_{today}.log')

    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file, encoding='utf-8'),
            logging.StreamHandler()
        ],
        force=True
    )

    logging.info(f"Логирование настроено. Файл: {log_file}")


def _append_json_line(prefix: str, entry: Dict[str, Any]) -> None:
    """Дописать одну JSON-строку в файл <prefix>_YYYY-MM-DD.json."""
    logs_dir = get_logs_dir()
    today = date.today().strftime("%Y-%m-%d")
    path = os.path.join(logs_dir, f'{prefix}_{today}.json')

    try:
        os.makedirs(logs_dir, exist_ok=True)
        with open(path, 'a', encoding='utf-8') as f:
            f.write(json.dumps(entry, ensure_ascii=False, default=str) + '\n')
    except Exception as e:
        logging.error(f"Ошибка записи лога {prefix}: {e}")


def log_run(command: str, params: Dict[str, Any], status: str = "success", elapsed_ms: Optional[int] = None) -> None:
    """
    Логирование запуска команды CLI в JSON файл.

    Args:
        command: Имя подкоманды (simulate/calibrate/montecarlo/forecast)
        params: Нормализованные параметры запуска
        status: Статус (success/error)
        elapsed_ms: Длительность в миллисекундах
    """
    _append_json_line('runs', {
        "timestamp": datetime.now().isoformat(),
        "command": command,
        "params": params,
        "status": status,
        "elapsed_ms": elapsed_ms
    })


def log_error(error_type: str, error_message: str, additional_data: Optional[dict] = None) -> None:
    """
    Логирование ошибок в отдельный JSON файл.

    Args:
        error_type: Тип ошибки (имя класса или место возникновения)
        error_message: Сообщение об ошибке
        additional_data: Контекст (дизайн, n, seed, окно...)
    """
    _append_json_line('errors', {
        "timestamp": datetime.now().isoformat(),
        "error_type": error_type,
        "error_message": error_message,
        "additional_data": additional_data or {}
    })
