import argparse
import json
import logging
import sys
import time

from src import __version__
from src.core.calibration import band_trace, calibrate
from src.core.config import CONFIG_ENV, ConfigManager, RunConfig, config_path_is_explicit
from src.core.database import CalibrationStore
from src.core.errors import CapbandError, ConfigError, NumericalError
from src.core.geometry import build_grid
from src.core.runner import VerificationRunner
from src.core.spectral import spectrum
from src.core.stability import build_stability_report
from src.utils.mesh import PROJECTIONS, write_obj
from src.utils.serialization import read_params, sanitize, write_json, write_trace_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2

COMMANDS = ('solve', 'trace', 'verify', 'spectrum', 'index', 'mesh')


class UsageError(Exception):
    pass


class CapbandArgumentParser(argparse.ArgumentParser):
    """Reports usage problems with exit code 1 instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = CapbandArgumentParser(
        prog='capband', description="Free-boundary minimal Moebius band in a spherical cap",
        epilog=f"Settings come from ${CONFIG_ENV} or ./config.json. The last run is written back only when "
               f"${CONFIG_ENV} is set.",
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest='command', required=True, parser_class=CapbandArgumentParser)

    for name in COMMANDS:
        sub = commands.add_parser(name)
        sub.add_argument('--r', type=float, help="cap radius in radians, 0 < r <= pi/2")
        sub.add_argument('--params', dest='params_path', help="CapParams JSON from a previous solve")
        sub.add_argument('--tol', type=float)
        sub.add_argument('--ns', dest='n_s', type=int)
        sub.add_argument('--ntheta', dest='n_theta', type=int)
        sub.add_argument('--kmax', dest='k_max', type=int)
        sub.add_argument('--projection', choices=PROJECTIONS)
        sub.add_argument('--out')
        sub.add_argument('--cache', help="sqlite file caching calibrations")
        sub.add_argument('--workers', type=int)
        sub.add_argument('--seed', type=int)
    return parser


def run_config_from_args(args, manager=None):
    overrides = {name: getattr(args, name) for name in (
        'r', 'params_path', 'tol', 'n_s', 'n_theta', 'k_max', 'projection', 'out', 'cache', 'workers', 'seed')}
    return RunConfig.from_config(manager, **overrides)


def resolve_params(cfg):
    """CapParams from --params, the calibration cache, or a fresh calibration."""
    if cfg.params_path:
        try:
            return read_params(cfg.params_path)
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"cannot read params from {cfg.params_path}: {e}") from e

    store = CalibrationStore(cfg.cache) if cfg.cache else None
    if store:
        cached = store.get_params(cfg.r, cfg.tol)
        if cached:
            logger.info("using cached calibration for r=%s tol=%s", cfg.r, cfg.tol)
            return cached

    scan_points = ConfigManager().get_section('calibration').get('scan_points', 24)
    params = calibrate(cfg.r, cfg.tol, cfg.integrator, scan_points)
    if store:
        store.add_params(params, cfg.tol)
    return params


def cmd_solve(cfg):
    write_json(resolve_params(cfg).to_dict(), cfg.out)
    return EXIT_OK


def cmd_trace(cfg):
    params = resolve_params(cfg)
    write_trace_csv(band_trace(params, cfg.integrator), params.s_r, cfg.out)
    return EXIT_OK


def cmd_verify(cfg):
    params = resolve_params(cfg)
    report = VerificationRunner(cfg, progress=lambda message: logger.debug(message)).run(params)
    write_json(report.to_dict(), cfg.out)
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def cmd_spectrum(cfg):
    params = resolve_params(cfg)
    report = spectrum(params, band_trace(params, cfg.integrator), cfg.k_max, cfg.integrator, cfg.workers)
    write_json(report.to_dict(), cfg.out)
    return EXIT_OK


def cmd_index(cfg):
    params = resolve_params(cfg)
    grid = build_grid(params, band_trace(params, cfg.integrator), cfg.n_s, cfg.n_theta)
    write_json(build_stability_report(grid).to_dict(), cfg.out)
    return EXIT_OK


def cmd_mesh(cfg):
    if not cfg.out:
        raise UsageError("mesh needs --out PATH")
    params = resolve_params(cfg)
    grid = build_grid(params, band_trace(params, cfg.integrator), cfg.n_s, cfg.n_theta)
    write_obj(grid, cfg.out, cfg.projection)
    return EXIT_OK


HANDLERS = {
    'solve': cmd_solve,
    'trace': cmd_trace,
    'verify': cmd_verify,
    'spectrum': cmd_spectrum,
    'index': cmd_index,
    'mesh': cmd_mesh,
}


def _record_run(command, status):
    if not config_path_is_explicit():
        return
    try:
        ConfigManager().set_last_run_info({
            'timestamp': time.strftime('%Y-%m-%d %H:%M:%S'),
            'command': command,
            'status': status,
        })
    except CapbandError as e:
        logger.warning("could not record last run: %s", e)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        cfg = run_config_from_args(args)
        code = HANDLERS[args.command](cfg)
    except (ConfigError, UsageError) as e:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"capband: error: {e}\n")
        return EXIT_USAGE
    except NumericalError as e:
        sys.stderr.write(json.dumps(sanitize(e.to_dict()), indent=2) + "\n")
        _record_run(args.command, 'failed')
        return EXIT_NUMERICAL

    _record_run(args.command, 'pass' if code == EXIT_OK else 'fail')
    return code
