#!/usr/bin/env python3
"""
Командная строка predictive-lasso.
Точка входа: simulate, calibrate, montecarlo, forecast.

Коды выхода: 0 - успех, 1 - ошибка выполнения, 2 - ошибка использования или конфигурации.
"""

import argparse
import logging
import os
import sys
import time
from typing import Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv

from calibration_cache import CalibrationRecord, calibration_cache
from config import (__version__, get_calibration_config, get_empirical_config, get_estimators_config,
                    get_logging_config, get_project_config, get_project_root, get_simulation_config,
                    get_tuning_config, load_run_config)
from core import Family
from dgp import Design, DgpSpec, simulate, write_dataset_csv, write_truth_json
from empirical import (HorizonSpec, load_panel, persistence_summary, rolling_forecast, tuning_modes,
                       write_forecast_reports)
from errors import ConfigError, PredLassoError
from evalmetrics import provenance_lines, run_montecarlo, write_reports
from logger import log_error, log_run, setup_logging
from tuning import calibrate_clambda, default_grid


EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

_DESIGNS = [d.value for d in Design]


def _split(value: str) -> List[str]:
    return [part.strip() for part in value.split(',') if part.strip()]


def _resolve_path(path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(os.getcwd(), path)


def _grid_from_settings():
    tuning = get_tuning_config()
    return default_grid(float(tuning['grid_min']), float(tuning['grid_max']), int(tuning['grid_points']))


def _estimator_settings() -> Tuple[float, bool]:
    """gamma и include_intercept из раздела estimators."""
    estimators = get_estimators_config()
    return float(estimators['gamma']), bool(estimators.get('include_intercept', True))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='predlasso', description="LASSO для прогнозных регрессий")
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    simulate_parser = sub.add_parser('simulate', help="сгенерировать данные DGP в CSV")
    simulate_parser.add_argument('--design', required=True, choices=_DESIGNS)
    simulate_parser.add_argument('--n', type=int, required=True)
    simulate_parser.add_argument('--seed', type=int, required=True)
    simulate_parser.add_argument('--out', default=None, help="путь CSV (по умолчанию results/<design>_n<n>_s<seed>.csv)")
    simulate_parser.add_argument('--burn-in', type=int, default=None)

    calibrate_parser = sub.add_parser('calibrate', help="откалибровать c_lambda и записать JSON")
    calibrate_parser.add_argument('--designs', default=','.join(_DESIGNS))
    calibrate_parser.add_argument('--estimators', default='plasso,slasso,alasso,talasso')
    calibrate_parser.add_argument('--reps', type=int, default=None)
    calibrate_parser.add_argument('--n', type=int, default=None)
    calibrate_parser.add_argument('--seed', type=int, default=None)
    calibrate_parser.add_argument('--out', default=None, help="JSON-файл калибровки")
    calibrate_parser.add_argument('--jobs', type=int, default=1)

    mc_parser = sub.add_parser('montecarlo', help="Монте-Карло по конфигурации")
    mc_parser.add_argument('--config', required=True, help="файл key = value или .json")
    mc_parser.add_argument('--out', default='results/montecarlo')
    mc_parser.add_argument('--seed', type=int, default=None, help="заменяет master_seed из конфигурации")
    mc_parser.add_argument('--calibration-file', default=None)
    mc_parser.add_argument('--jobs', type=int, default=1)

    forecast_parser = sub.add_parser('forecast', help="прогноз скользящим окном по панели CSV")
    forecast_parser.add_argument('--csv', required=True)
    forecast_parser.add_argument('--horizons', default=None, help="например 1/12,1/4,1")
    forecast_parser.add_argument('--windows', default=None, help="например 120,180")
    forecast_parser.add_argument('--estimators', default='rwwd,plasso,slasso,alasso,talasso')
    forecast_parser.add_argument('--tuning', default='auto', choices=['auto', 'cv', 'bic', 'both'],
                                 help="both - CV и BIC для штрафуемых оценщиков в одном запуске")
    forecast_parser.add_argument('--predictors', default=None, help="список столбцов-предикторов")
    forecast_parser.add_argument('--out', default='results/forecast')
    forecast_parser.add_argument('--seed', type=int, default=0)
    forecast_parser.add_argument('--jobs', type=int, default=1)
    return parser


def _parse_choices(parser: argparse.ArgumentParser, value: str, parse, option: str) -> list:
    try:
        items = [parse(item) for item in _split(value)]
    except ValueError as e:
        parser.error(f"{option}: {e}")
    if not items:
        parser.error(f"{option}: пустой список")
    return items


def _normalized_command(args: argparse.Namespace) -> str:
    """Команда без --jobs и путей вывода, чтобы отчёты совпадали побайтово."""
    skip = {'command', 'jobs', 'out', 'calibration_file'}
    parts = [args.command]
    for key in sorted(vars(args)):
        value = getattr(args, key)
        if key in skip or value is None:
            continue
        parts.append(f"--{key.replace('_', '-')} {value}")
    return ' '.join(parts)


def cmd_simulate(args: argparse.Namespace) -> int:
    """Сгенерировать CSV с данными и JSON с истиной."""
    burn_in = args.burn_in if args.burn_in is not None else int(get_simulation_config()['burn_in'])
    design = Design.parse(args.design)
    data = simulate(DgpSpec(design, args.n, args.seed, burn_in))

    out = args.out or os.path.join('results', f"{design.value}_n{args.n}_s{args.seed}.csv")
    out = _resolve_path(out)
    os.makedirs(os.path.dirname(out), exist_ok=True)
    provenance = {"version": __version__, "command": _normalized_command(args), "seed": args.seed,
                  "design": design.value, "n": args.n, "burn_in": burn_in,
                  "rows": f"{data.n} (last row is the held-out observation)"}
    write_dataset_csv(data, out, provenance_lines(provenance)[:-1])
    write_truth_json(data, os.path.splitext(out)[0] + '.truth.json', {"provenance": provenance})
    logging.info(f"Данные {design.value} n={args.n} seed={args.seed} записаны в {out}")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    """Откалибровать c_lambda для пар (дизайн, оценщик) и записать JSON."""
    calibration = get_calibration_config()
    designs = _parse_choices(parser, args.designs, Design.parse, '--designs')
    families = _parse_choices(parser, args.estimators, Family.parse, '--estimators')
    reps = args.reps if args.reps is not None else int(calibration['reps'])
    n = args.n if args.n is not None else int(calibration['n'])
    seed = args.seed if args.seed is not None else int(get_simulation_config()['master_seed'])
    tuning = get_tuning_config()
    folds, loss_scale = int(tuning['folds']), tuning['loss_scale']
    gamma, include_intercept = _estimator_settings()
    grid = _grid_from_settings()

    for design in designs:
        for family in families:
            if not family.is_penalized:
                continue
            c_lambda = calibrate_clambda(design, family, reps, n, seed, grid, folds, gamma, jobs=args.jobs,
                                         include_intercept=include_intercept, loss_scale=loss_scale)
            calibration_cache.put(CalibrationRecord(design.value, family.value, float(c_lambda),
                                                    reps, n, seed, folds, gamma, grid, loss_scale.value))
            print(f"{design.value}\t{family.value}\t{c_lambda:.6g}")

    out = _resolve_path(args.out or os.path.join(get_project_root(), calibration['cache_file']))
    calibration_cache.save(out)
    logging.info(f"Калибровка записана в {out}")
    return EXIT_OK


def cmd_montecarlo(args: argparse.Namespace) -> int:
    """Монте-Карло по файлу конфигурации; 1, если хотя бы одна ячейка полностью не удалась."""
    config = load_run_config(args.config)
    if args.seed is not None:
        config.master_seed = args.seed

    cache_file = _resolve_path(args.calibration_file or
                               os.path.join(get_project_root(), get_calibration_config()['cache_file']))
    constants: Optional[Dict[Family, float]] = None
    if config.tuning == 'fixed':
        constants = dict(config.c_lambda)
    else:
        calibration_cache.load(cache_file)

    tuning = get_tuning_config()
    _, include_intercept = _estimator_settings()
    result = run_montecarlo(config.designs, config.n_values, config.reps, config.estimators,
                            config.master_seed, constants, config.gamma,
                            config.calibration_reps, config.calibration_n,
                            _grid_from_settings(), int(tuning['folds']),
                            int(get_simulation_config()["burn_in"]), args.jobs, config.coint_screening,
                            include_intercept, tuning['loss_scale'])
    if config.tuning != 'fixed':
        calibration_cache.save(cache_file)

    provenance = {"version": __version__, "command": _normalized_command(args),
                  "master_seed": config.master_seed, "reps": config.reps, "tuning": config.tuning,
                  "loss_scale": tuning['loss_scale'].value,
                  "c_lambda": ', '.join(f"{k}={v:.6g}" for k, v in sorted(result.constants.items()))}
    write_reports(result, _resolve_path(args.out), [f.value for f in config.estimators], provenance)

    if result.failed_cells:
        for cell in result.failed_cells:
            print(f"ячейка {cell['design']} n={cell['n']} {cell['estimator']}: "
                  f"все репликации с ошибкой ({cell['error']})", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_forecast(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    """Прогноз скользящим окном для всех горизонтов, окон и оценщиков."""
    empirical = get_empirical_config()
    horizons = _split(args.horizons) if args.horizons else [str(h) for h in empirical['horizons']]
    windows = [int(w) for w in _split(args.windows)] if args.windows else [int(w) for w in empirical['windows']]
    families = _parse_choices(parser, args.estimators, Family.parse, '--estimators')
    predictors = _split(args.predictors) if args.predictors else None
    try:
        specs = [HorizonSpec(h, w) for w in windows for h in horizons]
    except (PredLassoError, ValueError, ZeroDivisionError) as e:
        parser.error(f"--horizons/--windows: {e}")

    panel = load_panel(args.csv, predictors)
    grid = _grid_from_settings()
    tuning = get_tuning_config()
    folds, loss_scale = int(tuning['folds']), tuning['loss_scale']
    gamma, include_intercept = _estimator_settings()
    predictor_lag = int(empirical['predictor_lag'])

    results = []
    for family in families:
        for mode in tuning_modes(family, args.tuning):
            for spec in specs:
                results.append(rolling_forecast(panel, spec, family, mode, grid, folds, gamma,
                                                predictor_lag, args.jobs, include_intercept, loss_scale))

    provenance = {"version": __version__, "command": _normalized_command(args), "seed": args.seed,
                  "panel": panel.metadata.get('source', ''), "months": panel.n,
                  "tuning": args.tuning, "loss_scale": loss_scale.value, "predictor_lag": predictor_lag,
                  "grid": f"{grid[0]:.6g}..{grid[-1]:.6g} ({len(grid)} points)"}
    write_forecast_reports(results, _resolve_path(args.out), provenance_lines(provenance)[:-1], provenance,
                           persistence_summary(panel))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Разобрать аргументы и выполнить подкоманду, вернуть код выхода."""
    load_dotenv(os.path.join(get_project_root(), '.env'))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK

    logging_config = get_logging_config()
    setup_logging(logging_config.get('level', 'INFO'), os.getenv('PREDLASSO_LOG_DIR') or logging_config.get('dir'))

    project = get_project_config()
    logging.info(f"Запуск {project.get('name', 'predictive-lasso')} {project.get('version', __version__)}: {args.command}")

    started = time.monotonic()
    params = {key: value for key, value in vars(args).items() if key != 'command'}
    try:
        if args.command == 'simulate':
            code = cmd_simulate(args)
        elif args.command == 'calibrate':
            code = cmd_calibrate(args, parser)
        elif args.command == 'montecarlo':
            code = cmd_montecarlo(args)
        else:
            code = cmd_forecast(args, parser)
    except SystemExit as e:
        code = EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    except ConfigError as e:
        logging.error(f"Ошибка конфигурации: {e}")
        log_error('ConfigError', str(e), {"command": args.command})
        print(f"ошибка конфигурации: {e}", file=sys.stderr)
        code = EXIT_USAGE
    except (PredLassoError, OSError) as e:
        logging.error(f"Ошибка выполнения {args.command}: {e}")
        log_error(type(e).__name__, str(e), {"command": args.command})
        print(f"ошибка: {e}", file=sys.stderr)
        code = EXIT_FAILURE

    elapsed_ms = int((time.monotonic() - started) * 1000)
    log_run(args.command, params, "success" if code == EXIT_OK else "error", elapsed_ms)
    return code


if __name__ == "__main__":
    sys.exit(main())
