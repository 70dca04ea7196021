"""Seed sweeps over a grid of configurations, and their summary.

Every (configuration, seed) cell is an independent run. A cell that raises is recorded with its error
message and the sweep continues. The summary reports, per configuration, the mean over seeds with a
95 % Student-t confidence half-width, and for proxy runs the goodput gain and latency reduction
against the NewReno runs with the same seeds.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
import csv
import itertools
import logging
import math
from pathlib import Path
import time
from typing import Iterable, Optional, Sequence

import numpy as np
from pydantic import BaseModel
from scipy import stats as scipy_stats

from .basics import TRANSPORT, constants
from .config_files import RunConfig, SweepConfig
from .experiment import RunMetrics, run_one


CONFIDENCE = 0.95


class SweepMetadata(BaseModel):
    successful: bool
    started: float      # seconds since the epoch; time.time()
    finished: Optional[float] = None
    cells: int
    failed_cells: int = 0
    sweep: SweepConfig


class SummaryRow(BaseModel):
    config_id: str
    pair_id: str
    transport: str
    d_s1_ms: float
    d_rs_ms: float
    rlc_buffer_mb: float
    d_info_ms: float
    t_info_ms: float
    policy: str
    runs: int
    failed: int
    goodput_mean_bps: float
    goodput_ci_bps: float
    latency_mean_us: float
    latency_ci_us: float
    # proxy rows only: paired against the NewReno runs of the same pair_id
    goodput_gain: Optional[float] = None
    latency_reduction: Optional[float] = None

    @property
    def one_way_delay_ms(self) -> float:
        return self.d_s1_ms + self.d_rs_ms

    def csv_row(self) -> dict[str, str]:
        return {name: '' if value is None else str(value) for name, value in self.dict().items()}


class SweepSummary(BaseModel):
    rows: list[SummaryRow]

    def by_transport(self, transport: str) -> list[SummaryRow]:
        return [row for row in self.rows if row.transport == transport]


def mean_and_half_width(values: Sequence[float], confidence: float = CONFIDENCE) -> tuple[float, float]:
    """Sample mean and Student-t confidence half-width. A single value has a half-width of 0."""
    if len(values) == 0:
        return 0.0, 0.0
    data = np.asarray(values, dtype=np.float64)
    mean = float(data.mean())
    if data.size < 2:
        return mean, 0.0
    quantile = float(scipy_stats.t.ppf((1 + confidence) / 2, data.size - 1))
    return mean, quantile * float(data.std(ddof=1)) / math.sqrt(data.size)


def _paired_ratios(proxy: list[RunMetrics], baseline: list[RunMetrics]) -> tuple[Optional[float], Optional[float]]:
    """Goodput gain and latency reduction over the seeds present in both lists, as ratios of means."""
    reference = {m.seed: m for m in baseline}
    pairs = [(m, reference[m.seed]) for m in proxy if m.seed in reference]
    if not pairs:
        return None, None
    proxy_goodput = sum(p.goodput_bps for p, _ in pairs)
    base_goodput = sum(b.goodput_bps for _, b in pairs)
    proxy_latency = sum(p.ran_latency_mean_us for p, _ in pairs)
    base_latency = sum(b.ran_latency_mean_us for _, b in pairs)
    gain = proxy_goodput / base_goodput if base_goodput > 0 else None
    reduction = base_latency / proxy_latency if proxy_latency > 0 else None
    return gain, reduction


def summarize(metrics: Iterable[RunMetrics]) -> SweepSummary:
    """Groups runs by configuration. Failed runs are counted but excluded from the statistics."""
    groups: dict[str, list[RunMetrics]] = {}
    for m in metrics:
        groups.setdefault(m.config_id, []).append(m)
    successful = {cid: [m for m in runs if m.error is None] for cid, runs in groups.items()}
    baselines: dict[str, list[RunMetrics]] = {}
    for cid, runs in successful.items():
        if runs and runs[0].transport == TRANSPORT.NEWRENO.value:
            baselines[runs[0].pair_id] = runs

    rows = []
    for cid, runs in groups.items():
        ok = successful[cid]
        first = runs[0]
        goodput_mean, goodput_ci = mean_and_half_width([m.goodput_bps for m in ok])
        latency_mean, latency_ci = mean_and_half_width([m.ran_latency_mean_us for m in ok])
        gain = reduction = None
        if first.transport == TRANSPORT.MILLIPROXY.value and first.pair_id in baselines:
            gain, reduction = _paired_ratios(ok, baselines[first.pair_id])
        rows.append(SummaryRow(config_id=cid, pair_id=first.pair_id, transport=first.transport, d_s1_ms=first.d_s1_ms,
                               d_rs_ms=first.d_rs_ms, rlc_buffer_mb=first.rlc_buffer_mb, d_info_ms=first.d_info_ms,
                               t_info_ms=first.t_info_ms, policy=first.policy, runs=len(ok), failed=len(runs) - len(ok),
                               goodput_mean_bps=goodput_mean, goodput_ci_bps=goodput_ci,
                               latency_mean_us=latency_mean, latency_ci_us=latency_ci,
                               goodput_gain=gain, latency_reduction=reduction))
    return SweepSummary(rows=rows)


# CSV files

def write_runs_csv(path: Path, metrics: Iterable[RunMetrics]) -> None:
    with path.open('w', newline='', encoding='utf-8') as outFile:
        writer = csv.DictWriter(outFile, fieldnames=RunMetrics.columns())
        writer.writeheader()
        for m in metrics:
            writer.writerow(m.csv_row())


def read_runs_csv(path: Path) -> list[RunMetrics]:
    with path.open(newline='', encoding='utf-8') as inFile:
        return [RunMetrics.from_csv_row(row) for row in csv.DictReader(inFile)]


def write_summary_csv(path: Path, summary: SweepSummary) -> None:
    with path.open('w', newline='', encoding='utf-8') as outFile:
        writer = csv.DictWriter(outFile, fieldnames=list(SummaryRow.__fields__))
        writer.writeheader()
        for row in summary.rows:
            writer.writerow(row.csv_row())


# running

def expand_grid(sweep: SweepConfig) -> list[RunConfig]:
    """All cells of the sweep: the cartesian product of the grid, each with every seed. Raises
    `ConfigurationError` if any cell is invalid, before anything is simulated."""
    keys = list(sweep.grid)
    cells = []
    for combination in itertools.product(*(sweep.grid[key] for key in keys)):
        values = {**sweep.base, **dict(zip(keys, combination))}
        for seed in range(sweep.first_seed, sweep.first_seed + sweep.seeds):
            cells.append(RunConfig.fromDict({**values, 'seed': seed}))
    return cells


def run_cell(cfg: RunConfig) -> RunMetrics:
    try:
        return run_one(cfg)
    except Exception as e:
        logging.error(f"Run {cfg.config_id()} with seed {cfg.seed} failed: {e!r}")
        return RunMetrics.failed(cfg, repr(e))


class SweepJob:
    def __init__(self, sweep: SweepConfig, logger: Optional[logging.Logger] = None) -> None:
        self.sweep = sweep
        self.outputDir = sweep.output_dir
        self.cells = expand_grid(sweep)
        self.outputDir.mkdir(parents=True, exist_ok=True)
        if logger is not None:
            # utf-8, otherwise logging raises UnicodeErrors for some characters
            fileHandler = logging.FileHandler(self.outputDir.joinpath(constants.LOG_FILENAME), encoding='utf-8')
            fileHandler.setFormatter(constants.LOGFORMAT)
            logger.addHandler(fileHandler)
            logging.info("Logfile initialised.")
        self.metadata = SweepMetadata(successful=False, started=time.time(), cells=len(self.cells), sweep=sweep)
        self.writeMetadata()

    def writeMetadata(self) -> None:
        with self.outputDir.joinpath(constants.METADATA_FILENAME).open("w", encoding="utf-8") as outFile:
            outFile.write(self.metadata.json(indent=4))

    def performRuns(self) -> list[RunMetrics]:
        workers = self.sweep.workers
        logging.info(f"Running {len(self.cells)} cells with {workers} worker{'' if workers == 1 else 's'}")
        if workers == 1:
            return [run_cell(cfg) for cfg in self.cells]
        with ProcessPoolExecutor(max_workers=workers) as executor:
            # map keeps the cell order, so the output does not depend on scheduling
            return list(executor.map(run_cell, self.cells))

    def run(self) -> SweepSummary:
        metrics = self.performRuns()
        write_runs_csv(self.outputDir.joinpath(constants.RUNS_FILENAME), metrics)
        summary = summarize(metrics)
        write_summary_csv(self.outputDir.joinpath(constants.SUMMARY_FILENAME), summary)

        failed = sum(1 for m in metrics if m.error is not None)
        self.metadata.failed_cells = failed
        self.metadata.finished = time.time()
        self.metadata.successful = failed == 0
        self.writeMetadata()
        if failed:
            logging.error(f"{failed} of {len(metrics)} runs failed, see the 'error' column of {constants.RUNS_FILENAME}")
        else:
            logging.info("Sweep finished successfully.")
        return summary


def run_sweep(sweep: SweepConfig, logger: Optional[logging.Logger] = None) -> SweepSummary:
    return SweepJob(sweep, logger).run()
