"""
Тесты метрик Монте-Карло и записи отчётов.
"""

import json
import os
import sys

import numpy as np
import pytest

# Добавляем src в путь для импортов
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core import Family, make_fit
from dgp import Design, DgpSpec, replication_seeds, simulate
from errors import DomainError, LengthMismatch
from estimators import fit_estimator, rwwd_forecast
from evalmetrics import (INTERCEPT_NOTE, MONTECARLO_STREAM, CointGroupReport, SelectionReport,
                         coint_group_screening, mpse, provenance_lines, run_montecarlo,
                         selection_rates, table2a_frame, table2b_frame, table3_frame, write_reports)
from tuning import LossScale, penalty_level


def zero_estimator(data):
    """Оценка, которая никогда ничего не отбирает."""
    return make_fit(np.zeros(data.p), float(np.mean(data.y)), 0.0, 0, True)


class TestMetrics:
    """Тесты MPSE и долей правильного отбора."""

    def test_mpse_example(self):
        assert mpse([1, 2], [1, 4]) == 2.0

    def test_mpse_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            mpse([1, 2, 3], [1, 2])
        with pytest.raises(LengthMismatch):
            mpse([], [])

    def test_selection_rates_example(self):
        """Тест примера: истина {0, 1}, отбор {0, 2}, p = 4."""
        sr, sr1, sr2 = selection_rates({0, 1}, {0, 2}, 4)
        assert sr == 0.5
        assert sr1 == 0.5
        assert sr2 == 0.5

    def test_selection_rates_perfect(self):
        assert selection_rates({1, 3}, {1, 3}, 5) == (1.0, 1.0, 1.0)

    def test_empty_truth(self):
        """Тест что пустой знаменатель даёт 1."""
        sr, sr1, sr2 = selection_rates(set(), {2}, 4)
        assert sr1 == 1.0
        assert sr2 == 0.75
        assert sr == 0.75

    @pytest.mark.parametrize("seed", range(20))
    def test_rates_decomposition(self, seed):
        """Тест p * SR = |M*| SR1 + |M*^c| SR2 на случайных множествах."""
        rng = np.random.default_rng(seed)
        p = int(rng.integers(2, 15))
        truth = set(np.flatnonzero(rng.random(p) < 0.4).tolist())
        estimated = set(np.flatnonzero(rng.random(p) < 0.5).tolist())
        sr, sr1, sr2 = selection_rates(truth, estimated, p)
        inactive = p - len(truth)
        lhs = p * sr
        rhs = (len(truth) * sr1 if truth else 0.0) + (inactive * sr2 if inactive else 0.0)
        assert lhs == pytest.approx(rhs)


class TestReports:
    """Тесты структур отчётов."""

    def test_selection_report_validation(self):
        with pytest.raises(DomainError):
            SelectionReport('dgp1', 40, 'plasso', 0.5, 0.5, 0.5, 1.0, reps=0)
        with pytest.raises(DomainError):
            SelectionReport('dgp1', 40, 'plasso', 1.5, 0.5, 0.5, 1.0, reps=10)

    def test_coint_report_sums_to_one(self):
        report = CointGroupReport.from_zero_flags([(True, True), (True, False), (False, False), (True, True)])
        assert report.frac_both_zero == 0.5
        assert report.frac_exactly_one_zero == 0.25
        assert report.frac_neither_zero == 0.25
        assert report.reps == 4

    def test_coint_report_rejects_bad_fractions(self):
        with pytest.raises(DomainError):
            CointGroupReport(0.5, 0.5, 0.5, reps=10)

    def test_binomial_se(self):
        report = CointGroupReport(0.5, 0.5, 0.0, reps=100)
        se = report.binomial_se()
        assert se["both_zero"] == pytest.approx(0.05)
        assert se["neither_zero"] == 0.0


class TestCointScreening:
    """Тесты разбора коинтегрированной группы."""

    def test_zero_estimator_always_both_zero(self):
        report = coint_group_screening(Design.DGP2, 60, zero_estimator, reps=5, master_seed=3)
        assert (report.frac_both_zero, report.frac_exactly_one_zero, report.frac_neither_zero) == (1.0, 0.0, 0.0)
        assert report.estimator == 'zero_estimator'

    def test_ols_never_zero(self):
        report = coint_group_screening(Design.DGP3, 60, Family.OLS, reps=5, master_seed=3)
        assert report.frac_neither_zero == 1.0

    def test_dgp1_has_no_group(self):
        with pytest.raises(DomainError):
            coint_group_screening(Design.DGP1, 60, Family.OLS, reps=5, master_seed=3)


class TestRunMonteCarlo:
    """Тесты прогона Монте-Карло."""

    def test_single_replication_matches_manual(self):
        """Тест что одна репликация совпадает с ручным расчётом."""
        n, master = 60, 11
        estimators = [Family.PLASSO, Family.OLS, Family.RWWD]
        result = run_montecarlo(Design.DGP2, [n], 1, estimators, master, constants={Family.PLASSO: 0.01})

        seed = replication_seeds(master, 1, Design.DGP2.index, n, MONTECARLO_STREAM)[0]
        data = simulate(DgpSpec(Design.DGP2, n, seed))
        sample = data.rows(slice(0, n))
        plasso = fit_estimator(Family.PLASSO, sample, penalty_level(0.01, n, Family.PLASSO))
        ols = fit_estimator(Family.OLS, sample)

        reports = {r.estimator: r for r in result.selection}
        assert reports['plasso'].mpse == pytest.approx((data.y[n] - plasso.predict(data.W[n])) ** 2, rel=1e-12)
        assert reports['ols'].mpse == pytest.approx((data.y[n] - ols.predict(data.W[n])) ** 2, rel=1e-12)
        assert reports['rwwd'].mpse == pytest.approx((data.y[n] - rwwd_forecast(sample.y)) ** 2, rel=1e-12)
        assert reports['ols'].sr == 0.5
        assert reports['rwwd'].sr2 == 1.0
        assert reports['plasso'].c_lambda == 0.01
        assert result.constants == {'dgp2.plasso': 0.01}
        assert {r.estimator for r in result.coint} == {'plasso', 'ols', 'rwwd'}

    def test_loss_scale_and_intercept_reach_the_fit(self):
        """Тест что масштаб потерь и include_intercept доходят до оценки в репликации."""
        n, master = 60, 11
        result = run_montecarlo(Design.DGP1, [n], 1, [Family.PLASSO], master, constants={Family.PLASSO: 0.01},
                                include_intercept=False, loss_scale=LossScale.SUM)

        seed = replication_seeds(master, 1, Design.DGP1.index, n, MONTECARLO_STREAM)[0]
        data = simulate(DgpSpec(Design.DGP1, n, seed))
        fit = fit_estimator(Family.PLASSO, data.rows(slice(0, n)),
                            penalty_level(0.01, n, Family.PLASSO, LossScale.SUM), include_intercept=False)
        assert fit.intercept == 0.0
        assert result.selection[0].mpse == pytest.approx((data.y[n] - fit.predict(data.W[n])) ** 2, rel=1e-12)

    def test_dgp1_has_no_coint_reports(self):
        result = run_montecarlo(Design.DGP1, [40], 2, [Family.OLS], 1)
        assert result.coint == []
        assert result.selection[0].reps == 2

    def test_jobs_do_not_change_results(self):
        """Тест что число процессов не влияет на результат."""
        kwargs = dict(design=[Design.DGP1, Design.DGP3], n_list=[40, 60], reps=3,
                      estimators=[Family.PLASSO, Family.TALASSO], master_seed=5,
                      constants={Family.PLASSO: 1e-4, Family.TALASSO: 1e-3})
        serial = run_montecarlo(jobs=1, **kwargs)
        parallel = run_montecarlo(jobs=2, **kwargs)
        assert serial.to_dict() == parallel.to_dict()

    def test_coint_screening_disabled(self):
        result = run_montecarlo(Design.DGP2, [40], 2, [Family.OLS], 1, coint_screening=False)
        assert result.coint == []
        assert len(result.selection) == 1

    def test_invalid_reps(self):
        with pytest.raises(DomainError):
            run_montecarlo(Design.DGP1, [40], 0, [Family.OLS], 1)


class TestWriteReports:
    """Тесты записи таблиц."""

    def run_small(self):
        return run_montecarlo([Design.DGP1, Design.DGP2], [40], 2, [Family.PLASSO, Family.OLS], 7,
                              constants={Family.PLASSO: 1e-4})

    def test_frames_layout(self):
        result = self.run_small()
        table2a = table2a_frame(result, ['plasso', 'ols'])
        assert list(table2a.columns) == ['design', 'n', 'plasso', 'ols']
        assert len(table2a) == 2
        table2b = table2b_frame(result, ['plasso', 'ols'])
        assert list(table2b['metric']) == ['sr', 'sr1', 'sr2', 'sr', 'sr1', 'sr2']
        assert list(table3_frame(result)['design']) == ['dgp2', 'dgp2']

    def test_byte_identical_reports(self, tmp_path):
        provenance = {"command": "montecarlo", "master_seed": 7}
        first = write_reports(self.run_small(), str(tmp_path / "a"), ['plasso', 'ols'], provenance)
        second = write_reports(self.run_small(), str(tmp_path / "b"), ['plasso', 'ols'], provenance)
        assert [os.path.basename(p) for p in first] == [
            'table2a_mpse.csv', 'table2b_selection.csv', 'table3_coint.csv', 'montecarlo.json']
        for a, b in zip(first, second):
            with open(a, 'rb') as fa, open(b, 'rb') as fb:
                assert fa.read() == fb.read()

    def test_provenance_header(self, tmp_path):
        paths = write_reports(self.run_small(), str(tmp_path), ['plasso', 'ols'], {"seed": 7})
        with open(paths[0], encoding='utf-8') as f:
            lines = f.read().splitlines()
        assert lines[0] == "# seed: 7"
        assert lines[1] == f"# {INTERCEPT_NOTE}"
        with open(paths[-1], encoding='utf-8') as f:
            payload = json.load(f)
        assert payload["provenance"] == {"seed": 7}
        assert payload["note"] == INTERCEPT_NOTE

    def test_provenance_lines_sorted(self):
        assert provenance_lines({"b": 1, "a": 2}) == ["a: 2", "b: 1", INTERCEPT_NOTE]


@pytest.mark.slow
class TestAcceptance:
    """Приёмочные проверки на 500 репликациях с калибровкой (запуск с --runslow)."""

    MASTER_SEED = 20240601

    @pytest.fixture(scope="class")
    def dgp_results(self):
        families = [Family.PLASSO, Family.ALASSO, Family.TALASSO, Family.OLS]
        return {design: run_montecarlo(design, [40, 800], 500, families, self.MASTER_SEED, jobs=os.cpu_count() or 1)
                for design in Design}

    @staticmethod
    def report(result, n, estimator):
        return next(r for r in result.selection if r.n == n and r.estimator == estimator)

    @staticmethod
    def coint(result, n, estimator):
        return next(r for r in result.coint if r.n == n and r.estimator == estimator)

    def test_dgp1_plasso_constant_magnitude(self, dgp_results):
        """Тест что откалиброванная c_lambda Plasso для DGP1 того же порядка, что 0.00563."""
        assert 0.000563 <= dgp_results[Design.DGP1].constants['dgp1.plasso'] <= 0.0563

    def test_sr_increases_with_n(self, dgp_results):
        result = dgp_results[Design.DGP2]
        assert self.report(result, 40, 'talasso').sr < self.report(result, 800, 'talasso').sr

    def test_ols_selects_everything(self, dgp_results):
        """Тест что OLS никогда не обнуляет: SR равна доле истинно активных."""
        assert self.report(dgp_results[Design.DGP2], 800, 'ols').sr == pytest.approx(0.5)
        assert self.coint(dgp_results[Design.DGP2], 800, 'ols').frac_neither_zero == 1.0

    def test_coint_group_mostly_screened(self, dgp_results):
        result = dgp_results[Design.DGP2]
        assert self.coint(result, 800, 'talasso').frac_both_zero >= 0.6

    def test_mpse_near_noise_variance(self, dgp_results):
        for report in dgp_results[Design.DGP1].selection:
            if report.n == 800:
                assert 0.8 <= report.mpse <= 1.25

    def test_talasso_refines_alasso_at_shared_constant(self, dgp_results):
        """
        Тест что при общей c_lambda второй этап только удаляет: доля отброшенных нулей
        и доля полностью обнулённой группы C2 у TAlasso не меньше, чем у Alasso.
        """
        c_lambda = dgp_results[Design.DGP2].constants['dgp2.talasso']
        shared = run_montecarlo(Design.DGP2, [800], 200, [Family.ALASSO, Family.TALASSO], self.MASTER_SEED,
                                constants={Family.ALASSO: c_lambda, Family.TALASSO: c_lambda},
                                jobs=os.cpu_count() or 1)
        assert self.report(shared, 800, 'talasso').sr2 >= self.report(shared, 800, 'alasso').sr2
        talasso, alasso = self.coint(shared, 800, 'talasso'), self.coint(shared, 800, 'alasso')
        assert talasso.frac_both_zero >= alasso.frac_both_zero
        assert talasso.frac_neither_zero <= alasso.frac_neither_zero
