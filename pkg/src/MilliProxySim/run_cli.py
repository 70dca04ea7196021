import argparse
import logging
from pathlib import Path
import sys
from typing import Any, Optional, Sequence

from .basics import SimulationError, constants
from .config_files import RunConfig, SweepConfig, scalar_fields
from .experiment import describe, run_one
from .plots import emit_plots
from .sweep import read_runs_csv, run_sweep, summarize, write_runs_csv


def setup_logger() -> logging.Logger:
    # remove all existing handlers and create one for strerr
    # this is important for multiple calls of run() from a meta script
    logging.basicConfig(force=True)
    logger = logging.getLogger()
    logger.handlers[0].setFormatter(constants.LOGFORMAT)
    logger.setLevel(logging.INFO)
    return logger


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='milliproxy_sim', description="TCP proxy simulator for mmWave links")
    verbs = parser.add_subparsers(dest='verb', required=True)

    run = verbs.add_parser('run', help="simulate a single configuration")
    run.add_argument('--config', type=Path, help="JSON configuration file (comments allowed)")
    run.add_argument('--output', type=Path, help="directory for runs.csv and the log file")
    run.add_argument('--export-default', action='store_true', help="print the default configuration and exit")
    flags = run.add_argument_group("configuration keys", "override the value from the configuration file")
    for name, field in scalar_fields().items():
        # pydantic does the type conversion, so every flag takes a string
        flags.add_argument(f"--{name.replace('_', '-')}", dest=name, metavar=field.type_.__name__.upper())

    sweep = verbs.add_parser('sweep', help="run a grid of configurations over many seeds")
    sweep.add_argument('sweep_file', type=Path, nargs='?', help="JSON sweep file (comments allowed)")
    sweep.add_argument('--workers', type=int, help="number of worker processes")
    sweep.add_argument('--seeds', type=int, help="number of seeds per configuration")
    sweep.add_argument('--output-dir', type=Path, help="directory for the result files")
    sweep.add_argument('--export-default', action='store_true', help="print the default sweep file and exit")

    plot = verbs.add_parser('plot', help="write plot data from a runs.csv file")
    plot.add_argument('runs_csv', type=Path)
    plot.add_argument('--output-dir', type=Path, help="defaults to the directory of runs.csv")
    return parser


def _config_overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {name: getattr(args, name) for name in scalar_fields() if getattr(args, name) is not None}


def do_run(args: argparse.Namespace, logger: logging.Logger) -> None:
    if args.export_default:
        print(RunConfig.export_default())
        return
    overrides = _config_overrides(args)
    if args.config is not None:
        cfg = RunConfig.loadUserConfigFile(args.config, overrides)
    else:
        cfg = RunConfig.fromDict(overrides)
    logger.setLevel(cfg.log_level)
    if args.output is not None:
        args.output.mkdir(parents=True, exist_ok=True)
        fileHandler = logging.FileHandler(args.output.joinpath(constants.LOG_FILENAME), encoding='utf-8')
        fileHandler.setFormatter(constants.LOGFORMAT)
        logger.addHandler(fileHandler)
    metrics = run_one(cfg)
    logging.info("Results:\n" + describe(metrics))
    if args.output is not None:
        write_runs_csv(args.output.joinpath(constants.RUNS_FILENAME), [metrics])


def do_sweep(args: argparse.Namespace, logger: logging.Logger) -> None:
    if args.export_default:
        print(SweepConfig.export_default())
        return
    if args.sweep_file is None:
        logging.critical("Please specify the sweep file.")
        raise SimulationError("missing sweep file")
    sweep = SweepConfig.loadUserConfigFile(args.sweep_file)
    changes = {key: value for key, value in (('workers', args.workers), ('seeds', args.seeds),
                                             ('output_dir', args.output_dir)) if value is not None}
    if changes:
        sweep = SweepConfig.fromDict({**sweep.dict(), **changes})
    logger.setLevel(RunConfig.fromDict(sweep.base).log_level)
    summary = run_sweep(sweep, logger)
    emit_plots(summary, sweep.output_dir)


def do_plot(args: argparse.Namespace) -> None:
    runsPath: Path = args.runs_csv
    if not runsPath.is_file():
        logging.critical(f"'{runsPath}' does not exist.")
        raise SimulationError(f"missing file {runsPath}")
    written = emit_plots(summarize(read_runs_csv(runsPath)), args.output_dir or runsPath.parent)
    logging.info("Plot data written to " + ", ".join(str(p) for p in written))


def main(args: argparse.Namespace, logger: logging.Logger) -> int:
    try:
        match args.verb:
            case 'run':
                do_run(args, logger)
            case 'sweep':
                do_sweep(args, logger)
            case 'plot':
                do_plot(args)
    except SimulationError:
        # These errors have already been logged
        return 1
    except Exception as e:
        # These errors are unexpected and hint at programming errors. Thus, they should be re-raised
        # for debugging
        logging.critical("An exception occured and the simulation will be terminated.")
        logging.exception(e)
        raise
    return 0


def run(argv: Optional[Sequence[str]] = None) -> int:
    logger = setup_logger()
    args = build_parser().parse_args(sys.argv[1:] if argv is None else argv)
    return main(args, logger)
