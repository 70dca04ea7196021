import json
from pathlib import Path

from MilliProxySim.basics import constants
from MilliProxySim.run_cli import build_parser, run
from MilliProxySim.sweep import read_runs_csv


TEST_CONFIG = Path(__file__).parent / "test-config.json"


def test_flags_for_scalar_keys():
    args = build_parser().parse_args(['run', '--d-rs-ms', '5', '--transport', 'udp'])
    assert args.d_rs_ms == '5'
    assert args.transport == 'udp'
    assert args.seed is None


def test_export_default(capsys):
    assert run(['run', '--export-default']) == 0
    assert json.loads(capsys.readouterr().out)['transport'] == 'newreno+milliproxy'
    assert run(['sweep', '--export-default']) == 0
    assert 'grid' in json.loads(capsys.readouterr().out)


def test_run_with_overrides(tmp_path: Path):
    assert run(['run', '--config', str(TEST_CONFIG), '--output', str(tmp_path), '--d-rs-ms', '5', '--seed', '9']) == 0
    (metrics,) = read_runs_csv(tmp_path / constants.RUNS_FILENAME)
    assert metrics.d_rs_ms == 5
    assert metrics.seed == 9
    assert metrics.transport == 'newreno'
    assert (tmp_path / constants.LOG_FILENAME).is_file()


def test_errors_return_one(tmp_path: Path):
    assert run(['run', '--config', str(tmp_path / 'missing.json')]) == 1
    assert run(['run', '--d-rs-ms', 'far']) == 1
    assert run(['sweep']) == 1
    assert run(['plot', str(tmp_path / 'runs.csv')]) == 1


def test_plot_from_runs_csv(tmp_path: Path):
    assert run(['run', '--config', str(TEST_CONFIG), '--output', str(tmp_path)]) == 0
    assert run(['plot', str(tmp_path / constants.RUNS_FILENAME)]) == 0
    lines = (tmp_path / constants.GOODPUT_PLOT_FILENAME).read_text(encoding='utf-8').splitlines()
    assert lines[0].split() == ['x', 'newreno_mean', 'newreno_ci']
    assert float(lines[1].split()[0]) == 11
