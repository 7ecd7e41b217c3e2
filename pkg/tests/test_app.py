"""
Tests for the grwsim command line.
"""

import json
import logging

import pytest

from src.app import EXIT_CONFIG, EXIT_OK, create_parser, main
from src.utils.log import configure_logging, verbosity_level


def test_parser_defaults():
    """Test the run subcommand defaults."""
    args = create_parser().parse_args(['run', 'numdiff'])

    assert args.command == 'run'
    assert args.scenario == 'numdiff'
    assert args.preset == 'desk'
    assert args.set_values == []
    assert args.seed is None and args.levels is None and args.out is None


def test_parser_flags():
    args = create_parser().parse_args(['-v', 'run', 'mms-flow-2d', '--l-param', '600', '--levels', '2',
                                       '--set', 'dt=0.01', '--set', 'eps_a=1e-7'])
    assert args.verbose
    assert args.l_param == 600.0
    assert args.levels == 2
    assert args.set_values == ['dt=0.01', 'eps_a=1e-7']


def test_parser_rejects_unknown_preset():
    with pytest.raises(SystemExit):
        create_parser().parse_args(['run', 'numdiff', '--preset', 'huge'])


def test_list_command(capsys):
    """Test that every registered scenario is listed."""
    assert main(['list']) == EXIT_OK
    out = capsys.readouterr().out
    for name in ('scenario1d', 'mms-flow-2d', 'mms-coupled-2d', 'trench-coupled', 'numdiff',
                 'regional-recharge', 'aquifer-dispersion', 'sander-flux'):
        assert name in out


def test_describe_command(capsys):
    assert main(['describe', 'mms-flow-2d']) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith('mms-flow-2d (flow)')
    assert 'l_param' in out
    assert 'levels' in out


def test_unknown_scenario_is_config_error():
    assert main(['run', 'no-such-scenario']) == EXIT_CONFIG
    assert main(['describe', 'no-such-scenario']) == EXIT_CONFIG


def test_unknown_key_is_config_error(tmp_path):
    """Test that configuration errors stop the run before anything is written."""
    out = tmp_path / 'run'
    assert main(['run', 'sander-flux', '--set', 'colour=red', '--out', str(out)]) == EXIT_CONFIG
    assert not out.exists()


def test_plot_missing_directory(tmp_path):
    assert main(['plot', str(tmp_path / 'absent')]) == EXIT_CONFIG


def test_verbosity_levels():
    assert verbosity_level(-1) == logging.WARNING
    assert verbosity_level(0) == logging.INFO
    assert verbosity_level(3) == logging.DEBUG


def test_configure_logging_replaces_handlers():
    root = configure_logging(0)
    configure_logging(1)
    assert len(root.handlers) == 1
    assert root.level == logging.DEBUG


@pytest.mark.slow
def test_run_and_plot(tmp_path):
    """Test a full run followed by rendering its figures."""
    out = tmp_path / 'sander'
    assert main(['-q', 'run', 'sander-flux', '--dx', '0.1', '--out', str(out)]) == EXIT_OK

    summary = json.loads((out / 'summary.json').read_text())
    assert summary['scenario'] == 'sander-flux'
    assert summary['config']['dx'] == 0.1
    assert (out / 'fields' / 'profile.csv').exists()
    assert (out / 'fields' / 'profile_theta.bin').exists()

    assert main(['-q', 'plot', str(out)]) == EXIT_OK
    assert list((out / 'plots').glob('*.html'))
