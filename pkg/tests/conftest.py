"""
Общие настройки pytest: маркер slow и каталог логов во временной папке.
"""

import os
import sys

import pytest

# Добавляем src в путь для импортов
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="запустить статистические проверки на сотнях репликаций")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: статистические проверки (запуск с --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="нужен --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def isolated_logs(tmp_path, monkeypatch):
    """JSON-логи ошибок и запусков пишутся во временный каталог."""
    log_dir = tmp_path / "logs"
    monkeypatch.setenv("PREDLASSO_LOG_DIR", str(log_dir))
    monkeypatch.delenv("PREDLASSO_SETTINGS", raising=False)
    return log_dir
