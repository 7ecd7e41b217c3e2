"""
Main GrwSim command-line module.

This module builds the ``grwsim`` argument parser and dispatches the
``run``, ``list``, ``describe`` and ``plot`` commands. Exit codes:
0 success, 1 unexpected error, 2 non-convergence, 3 configuration error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from src import __version__
from src.core.errors import ConfigError, ContractViolation
from src.scenarios import PRESETS, get_scenario, list_scenarios, run_scenario
from src.utils.log import configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2
EXIT_CONFIG = 3


def create_parser() -> argparse.ArgumentParser:
    """
    Create the ``grwsim`` argument parser.

    Returns:
        Parser with the run, list, describe and plot subcommands.
    """
    parser = argparse.ArgumentParser(
        prog='grwsim',
        description='Global random walk solvers for Richards flow and reactive transport benchmarks',
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='warnings and errors only')
    commands = parser.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', help='run a benchmark scenario')
    run.add_argument('scenario', help="scenario name (see 'grwsim list')")
    run.add_argument('--config', help='YAML file with configuration overrides')
    run.add_argument('--preset', choices=PRESETS, default='desk', help='default set (default: desk)')
    run.add_argument('--seed', type=int, help='random seed')
    run.add_argument('--levels', type=int, help='number of refinement levels')
    run.add_argument('--jobs', type=int, help='worker processes for levels and realizations')
    run.add_argument('--out', help='run directory (default: runs/<scenario>)')
    run.add_argument('--l-param', dest='l_param', type=float, help='L-scheme parameter')
    run.add_argument('--case', help='scenario case (e.g. homogeneous, heterogeneous)')
    run.add_argument('--scheme', help='transport scheme (bgrw, ugrw or all)')
    run.add_argument('--dx', type=float, help='lattice spacing')
    run.add_argument('--set', dest='set_values', action='append', default=[], metavar='KEY=VALUE',
                     help='override any configuration key; may be repeated')

    commands.add_parser('list', help='list the registered scenarios')

    describe = commands.add_parser('describe', help='show the configuration keys of a scenario')
    describe.add_argument('scenario')

    plot = commands.add_parser('plot', help='render the series and fields of a run directory to HTML')
    plot.add_argument('run_dir')
    plot.add_argument('--out', help='output directory (default: <run_dir>/plots)')
    return parser


def _format_value(value) -> str:
    return 'null' if value is None else str(value)


def list_command() -> int:
    scenarios = list_scenarios()
    width = max(len(s.name) for s in scenarios)
    for scenario in scenarios:
        print(f"{scenario.name:<{width}}  {scenario.kind:<9}  {scenario.summary}")
    return EXIT_OK


def describe_command(name: str) -> int:
    info = get_scenario(name).describe()
    print(f"{info['name']} ({info['kind']})")
    print(f"  {info['summary']}")
    if info['reference']:
        print(f"  reference: {info['reference']}")
    keys = sorted(set(info['desk']) | set(info['paper']))
    width = max(len(k) for k in keys) if keys else 0
    print(f"  {'key':<{width}}  {'desk':<20}  paper")
    for key in keys:
        desk, paper = info['desk'].get(key), info['paper'].get(key)
        print(f"  {key:<{width}}  {_format_value(desk):<20}  {_format_value(paper)}")
    return EXIT_OK


def run_command(args: argparse.Namespace) -> int:
    flags = {'seed': args.seed, 'levels': args.levels, 'jobs': args.jobs, 'l_param': args.l_param,
             'case': args.case, 'scheme': args.scheme, 'dx': args.dx}
    out_dir = args.out or str(Path('runs') / args.scenario)
    summary = run_scenario(args.scenario, args.preset, args.config, flags, args.set_values, out_dir)
    if not summary['converged']:
        logger.error("%s did not converge; partial results written to %s", args.scenario, out_dir)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def plot_command(args: argparse.Namespace) -> int:
    from src.components.figures import write_figures

    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise ConfigError(f"run directory {run_dir} not found")
    written = write_figures(run_dir, Path(args.out) if args.out else None)
    if not written:
        logger.warning("no series or field tables found in %s", run_dir)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = create_parser().parse_args(argv)
    configure_logging(1 if args.verbose else -1 if args.quiet else 0)
    try:
        if args.command == 'list':
            return list_command()
        if args.command == 'describe':
            return describe_command(args.scenario)
        if args.command == 'plot':
            return plot_command(args)
        return run_command(args)
    except (ConfigError, ContractViolation) as e:
        logger.error("configuration error: %s", e)
        return EXIT_CONFIG
    except Exception:
        logger.exception("unexpected error")
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
