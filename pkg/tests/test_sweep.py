import json
from pathlib import Path
from typing import Any

import pytest
from scipy import stats

from MilliProxySim.basics import TRANSPORT, constants
from MilliProxySim.config_files import SweepConfig
from MilliProxySim.experiment import RunMetrics
from MilliProxySim.plots import emit_plots, goodput_table, latency_table
from MilliProxySim.sweep import (SweepSummary, expand_grid, mean_and_half_width, read_runs_csv, run_sweep, summarize,
                                 write_runs_csv)


def fakeMetrics(seed: int, transport: str, d_rs_ms: float, goodput: float, latency: float, **extra: Any) -> RunMetrics:
    values: dict[str, Any] = dict(
        config_id=f"{transport}-{d_rs_ms}", pair_id=f"pair-{d_rs_ms}", seed=seed, transport=transport, d_s1_ms=1.0,
        d_rs_ms=d_rs_ms, rlc_buffer_mb=10.0, d_info_ms=0.0, t_info_ms=10.0, policy='bdp', duration_s=11.0,
        delivered_bytes=int(goodput * 11 / 8), goodput_bps=goodput, capacity_bps=3.2e9, ran_latency_mean_us=latency,
        ran_latency_p50_us=latency, ran_latency_p95_us=2 * latency, latency_samples=1000, mean_rlc_occupancy=1234.5,
        rlc_dropped_segments=0, proxy_dropped_segments=0, retransmissions=0, rtos=0, fast_retransmits=0)
    values.update(extra)
    return RunMetrics(**values)


def fakeSweep() -> list[RunMetrics]:
    metrics = []
    for d_rs in (1.0, 5.0, 10.0, 20.0):
        for seed in (1, 2, 3):
            metrics.append(fakeMetrics(seed, TRANSPORT.NEWRENO.value, d_rs, 1e9 + seed * 1e7, 4000 + seed))
            metrics.append(fakeMetrics(seed, TRANSPORT.MILLIPROXY.value, d_rs, 2e9 + seed * 1e7, 1000 + seed))
    return metrics


def test_grid_cardinality():
    sweep = SweepConfig.fromDict({'grid': {'d_rs_ms': [1, 5], 'transport': ['newreno', 'newreno+milliproxy']},
                                  'seeds': 5, 'first_seed': 11})
    cells = expand_grid(sweep)
    assert len(cells) == 20
    assert sorted({cfg.seed for cfg in cells}) == list(range(11, 16))
    assert len({cfg.config_id() for cfg in cells}) == 4
    assert len({cfg.config_id(('seed', 'transport')) for cfg in cells}) == 2


def test_mean_and_half_width():
    assert mean_and_half_width([]) == (0.0, 0.0)
    assert mean_and_half_width([5.0]) == (5.0, 0.0)
    mean, half = mean_and_half_width([1.0, 2.0, 3.0, 4.0])
    assert mean == 2.5
    # sample standard deviation sqrt(5/3)
    assert half == pytest.approx(stats.t.ppf(0.975, 3) * (5 / 3) ** 0.5 / 2)


def test_summary():
    summary = summarize(fakeSweep())
    assert len(summary.rows) == 8
    proxyRows = summary.by_transport(TRANSPORT.MILLIPROXY.value)
    assert len(proxyRows) == 4
    for row in proxyRows:
        assert row.runs == 3
        assert row.goodput_mean_bps == pytest.approx(2.02e9)
        assert row.goodput_gain == pytest.approx(2.02e9 / 1.02e9)
        assert row.latency_reduction == pytest.approx(4002 / 1002)
    for row in summary.by_transport(TRANSPORT.NEWRENO.value):
        assert row.goodput_gain is None
        assert row.latency_reduction is None


def test_failed_runs_are_excluded():
    metrics = fakeSweep()
    metrics.append(fakeMetrics(4, TRANSPORT.MILLIPROXY.value, 1.0, 0.0, 0.0, error="RuntimeError('boom')"))
    row = next(r for r in summarize(metrics).rows if r.config_id == f"{TRANSPORT.MILLIPROXY.value}-1.0")
    assert row.runs == 3
    assert row.failed == 1
    assert row.goodput_mean_bps == pytest.approx(2.02e9)


def test_pairing_uses_common_seeds():
    metrics = fakeSweep()
    # the baseline of seed 4 is missing, so that run is not paired
    metrics.append(fakeMetrics(4, TRANSPORT.MILLIPROXY.value, 1.0, 9e9, 1.0))
    row = next(r for r in summarize(metrics).rows if r.config_id == f"{TRANSPORT.MILLIPROXY.value}-1.0")
    assert row.runs == 4
    assert row.goodput_gain == pytest.approx(2.02e9 / 1.02e9)


def test_runs_csv_round_trip(tmp_path: Path):
    metrics = fakeSweep()
    metrics[0] = fakeMetrics(1, TRANSPORT.NEWRENO.value, 1.0, 1.01e9, 4001.0, error="ValueError('x, y')")
    path = tmp_path / constants.RUNS_FILENAME
    write_runs_csv(path, metrics)
    assert read_runs_csv(path) == metrics
    # the summary can be recomputed from the CSV alone
    assert summarize(read_runs_csv(path)) == summarize(metrics)


def test_plot_tables():
    summary = summarize(fakeSweep())
    lines = goodput_table(summary).splitlines()
    assert lines[0] == "x newreno_mean newreno_ci newreno-milliproxy_mean newreno-milliproxy_ci"
    assert [float(line.split()[0]) for line in lines[1:]] == [2, 6, 11, 21]
    assert all(len(line.split()) == 5 for line in lines)
    assert float(lines[1].split()[1]) == pytest.approx(1020)
    latency = latency_table(summary).splitlines()
    assert float(latency[1].split()[3]) == pytest.approx(1.002)


def test_plot_series_per_buffer():
    metrics = fakeSweep() + [fakeMetrics(1, TRANSPORT.NEWRENO.value, 1.0, 1e9, 1.0, rlc_buffer_mb=20.0,
                                         config_id='big-buffer')]
    header = goodput_table(summarize(metrics)).splitlines()[0].split()
    assert len(header) == 1 + 2 * 3
    assert "newreno_B20MB_mean" in header
    # that series only has a value at x = 2
    rows = goodput_table(summarize(metrics)).splitlines()[1:]
    assert rows[1].split()[-2:] == ['nan', 'nan']


def test_empty_summary(tmp_path: Path):
    empty = SweepSummary(rows=[])
    assert goodput_table(empty) == "x\n"
    written = emit_plots(empty, tmp_path / "plots")
    assert [p.name for p in written] == [constants.GOODPUT_PLOT_FILENAME, constants.LATENCY_PLOT_FILENAME]
    assert written[1].read_text(encoding='utf-8') == "x\n"


def test_small_sweep(tmp_path: Path):
    sweep = SweepConfig.fromDict({'base': {'ue_end': [1, 0], 'drain_s': 0.05},
                                  'grid': {'transport': ['newreno', 'newreno+milliproxy']},
                                  'seeds': 2, 'output_dir': str(tmp_path)})
    summary = run_sweep(sweep)
    assert len(summary.rows) == 2
    proxyRow = summary.by_transport(TRANSPORT.MILLIPROXY.value)[0]
    assert proxyRow.runs == 2
    assert proxyRow.goodput_gain is not None
    assert len(read_runs_csv(tmp_path / constants.RUNS_FILENAME)) == 4
    assert (tmp_path / constants.SUMMARY_FILENAME).is_file()
    metadata = json.loads((tmp_path / constants.METADATA_FILENAME).read_text(encoding='utf-8'))
    assert metadata['successful']
    assert metadata['cells'] == 4
    assert metadata['finished'] is not None


@pytest.mark.slow
def test_parallel_sweep_matches_serial(tmp_path: Path):
    base = {'base': {'ue_end': [1, 0], 'drain_s': 0.05}, 'grid': {'d_rs_ms': [1, 10]}, 'seeds': 2}
    serial = run_sweep(SweepConfig.fromDict({**base, 'output_dir': str(tmp_path / 'serial')}))
    parallel = run_sweep(SweepConfig.fromDict({**base, 'workers': 2, 'output_dir': str(tmp_path / 'parallel')}))
    assert serial == parallel
    assert (read_runs_csv(tmp_path / 'serial' / constants.RUNS_FILENAME)
            == read_runs_csv(tmp_path / 'parallel' / constants.RUNS_FILENAME))
