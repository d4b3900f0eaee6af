"""
Базовые тесты predictive-lasso.
Простые тесты без сложных моков: конфигурация, кэш калибровки, логирование, структура.
"""

import pytest
import json
import os
import sys

# Добавляем src в путь для импортов
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

import tuning
from calibration_cache import CalibrationCache, CalibrationRecord
from config import get_empirical_config, get_tuning_config, load_config
from core import Family
from dgp import Design
from logger import get_logs_dir, log_error, log_run, setup_logging


class TestConfig:
    """Тесты конфигурации."""

    def test_load_config_returns_dict(self):
        """Тест что load_config возвращает словарь."""
        config = load_config()
        assert isinstance(config, dict)
        assert 'tuning' in config
        assert 'empirical' in config

    def test_tuning_config_has_required_fields(self):
        """Тест что настройки подбора содержат нужные поля."""
        tuning_config = get_tuning_config()
        assert tuning_config['folds'] == 10
        assert tuning_config['grid_points'] == 36
        assert tuning_config['grid_max'] == 100.0
        assert tuning_config['loss_scale'] is tuning.LossScale.MEAN
        assert tuning_config['grid_min'] < tuning_config['grid_max']

    def test_empirical_config_has_required_fields(self):
        empirical = get_empirical_config()
        assert empirical['predictor_lag'] == 1
        assert empirical['windows'] == [120, 180]


class TestCalibrationCache:
    """Тесты кэша констант c_lambda."""

    def setup_method(self):
        """Настройка перед каждым тестом."""
        self.cache = CalibrationCache()
        self.cache.clear()
        self.record = CalibrationRecord('dgp1', 'plasso', 0.00563, 100, 200, 7)

    def teardown_method(self):
        self.cache.clear()

    def test_cache_is_singleton(self):
        """Тест что кэш - синглтон."""
        assert CalibrationCache() is CalibrationCache()

    def test_empty_cache(self):
        assert self.cache.get(Design.DGP1, Family.PLASSO, 100, 200, 7) is None

    def test_put_and_get(self):
        self.cache.put(self.record)
        found = self.cache.get(Design.DGP1, Family.PLASSO, 100, 200, 7)
        assert found == self.record
        assert self.cache.get(Design.DGP1, Family.PLASSO, 100, 200, 8) is None

    def test_calibrated_uses_cache(self, monkeypatch):
        """Тест что повторный запрос не калибрует заново."""
        calls = []

        def fake_calibrate(*args, **kwargs):
            calls.append(args)
            return 0.25

        monkeypatch.setattr(tuning, 'calibrate_clambda', fake_calibrate)
        assert self.cache.calibrated(Design.DGP2, Family.ALASSO, reps=3, n=40, master_seed=1) == 0.25
        assert self.cache.calibrated(Design.DGP2, Family.ALASSO, reps=3, n=40, master_seed=1) == 0.25
        assert len(calls) == 1

    def test_save_and_load(self, tmp_path):
        path = str(tmp_path / "calibration.json")
        self.cache.put(self.record)
        self.cache.save(path)

        self.cache.clear()
        assert self.cache.load(path) == 1
        assert self.cache.records() == [self.record]

        with open(path, encoding='utf-8') as f:
            payload = json.load(f)
        assert payload["calibrations"][0]["c_lambda"] == 0.00563

    def test_protocol_is_part_of_key(self):
        """Тест что другая сетка, число фолдов или масштаб потерь не попадают в кэш."""
        self.cache.put(self.record)
        assert self.cache.get(Design.DGP1, Family.PLASSO, 100, 200, 7,
                              grid=tuning.default_grid()) == self.record
        assert self.cache.get(Design.DGP1, Family.PLASSO, 100, 200, 7, grid=[1e-3, 1e-2]) is None
        assert self.cache.get(Design.DGP1, Family.PLASSO, 100, 200, 7, folds=5) is None
        assert self.cache.get(Design.DGP1, Family.PLASSO, 100, 200, 7,
                              loss_scale=tuning.LossScale.SUM) is None

    def test_calibrated_recalibrates_for_new_protocol(self, monkeypatch):
        calls = []

        def fake_calibrate(design, family, reps, n, master_seed, grid, folds, gamma, **kwargs):
            calls.append((grid, folds, kwargs['loss_scale']))
            return 0.5

        monkeypatch.setattr(tuning, 'calibrate_clambda', fake_calibrate)
        self.cache.calibrated(Design.DGP1, Family.PLASSO, reps=3, n=40, master_seed=1)
        self.cache.calibrated(Design.DGP1, Family.PLASSO, reps=3, n=40, master_seed=1, grid=[0.1, 1.0])
        self.cache.calibrated(Design.DGP1, Family.PLASSO, reps=3, n=40, master_seed=1, folds=5)
        self.cache.calibrated(Design.DGP1, Family.PLASSO, reps=3, n=40, master_seed=1, loss_scale='sum')
        self.cache.calibrated(Design.DGP1, Family.PLASSO, reps=3, n=40, master_seed=1, grid=[0.1, 1.0])

        assert len(calls) == 4
        assert calls[3][2] is tuning.LossScale.SUM
        assert self.cache.get_stats()['total_records'] == 4

    def test_grid_survives_save_and_load(self, tmp_path):
        path = str(tmp_path / "calibration.json")
        record = CalibrationRecord('dgp2', 'talasso', 0.2, 50, 200, 7, 10, 1.0, (0.1, 1.0), 'sum')
        self.cache.put(record)
        self.cache.save(path)

        self.cache.clear()
        assert self.cache.load(path) == 1
        assert self.cache.get(Design.DGP2, Family.TALASSO, 50, 200, 7, 10, 1.0,
                              grid=[0.1, 1.0], loss_scale='sum') == record

    def test_load_missing_or_corrupt(self, tmp_path):
        assert self.cache.load(str(tmp_path / "missing.json")) == 0
        corrupt = tmp_path / "corrupt.json"
        corrupt.write_text("{not json", encoding='utf-8')
        assert self.cache.load(str(corrupt)) == 0

    def test_get_stats(self):
        """Тест получения статистики."""
        self.cache.put(self.record)
        self.cache.put(CalibrationRecord('dgp2', 'talasso', 0.1, 100, 200, 7))
        stats = self.cache.get_stats()

        assert stats['total_records'] == 2
        assert stats['designs'] == ['dgp1', 'dgp2']
        assert stats['families'] == ['plasso', 'talasso']


class TestLogging:
    """Тесты логирования."""

    def test_setup_logging_no_errors(self, isolated_logs):
        """Тест что setup_logging выполняется без ошибок."""
        try:
            setup_logging()
        except Exception as e:
            pytest.fail(f"setup_logging вызвал исключение: {e}")
        assert os.path.isdir(isolated_logs)

    def test_logs_dir_from_environment(self, isolated_logs):
        assert get_logs_dir() == str(isolated_logs)

    def test_run_and_error_json_lines(self, isolated_logs):
        """Тест что запуски и ошибки пишутся JSON-строками."""
        log_run('simulate', {"seed": 1}, elapsed_ms=5)
        log_error('SingularDesign', 'вырожденная матрица', {"n": 40})

        files = sorted(os.listdir(isolated_logs))
        assert [name.split('_')[0] for name in files] == ['errors', 'runs']
        with open(isolated_logs / files[0], encoding='utf-8') as f:
            entry = json.loads(f.readline())
        assert entry['error_type'] == 'SingularDesign'
        assert entry['additional_data'] == {"n": 40}


class TestProjectStructure:
    """Тесты структуры проекта."""

    def test_required_files_exist(self):
        """Тест что все необходимые файлы существуют."""
        project_root = os.path.dirname(os.path.dirname(__file__))

        required_files = [
            'src/core.py',
            'src/estimators.py',
            'src/dgp.py',
            'src/tuning.py',
            'src/evalmetrics.py',
            'src/empirical.py',
            'src/calibration_cache.py',
            'src/cli.py',
            'src/config.py',
            'src/logger.py',
            'src/errors.py',
            'config/settings.yaml',
            'config/montecarlo.conf',
            'pyproject.toml'
        ]

        for file_path in required_files:
            full_path = os.path.join(project_root, file_path)
            assert os.path.exists(full_path), f"Файл {file_path} не существует"

    def test_version_defined_once(self):
        """Тест что версия задана только в config.py и совпадает с pyproject.toml."""
        import tomllib

        import config

        project_root = os.path.dirname(os.path.dirname(__file__))
        with open(os.path.join(project_root, 'pyproject.toml'), 'rb') as f:
            assert tomllib.load(f)['project']['version'] == config.__version__
        with open(os.path.join(project_root, 'src', '__init__.py'), encoding='utf-8') as f:
            assert '__version__' not in f.read()

    def test_directories_exist(self):
        """Тест что все необходимые директории существуют."""
        project_root = os.path.dirname(os.path.dirname(__file__))

        for dir_path in ['src', 'config', 'tests', 'doc']:
            full_path = os.path.join(project_root, dir_path)
            assert os.path.isdir(full_path), f"{dir_path} не является директорией"


if __name__ == "__main__":
    pytest.main([__file__])
