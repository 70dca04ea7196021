"""Plot data: whitespace separated tables with one row per one-way fixed-network delay
D_S1 + D_RS (ms) and a mean / CI half-width column pair per series, ready for pgfplots or gnuplot
with error bars. A series is everything that stays constant along the delay axis (transport, RLC
buffer, cross-layer timing, policy)."""
from __future__ import annotations

from pathlib import Path
from typing import Callable, NamedTuple

from .basics import constants
from .sweep import SummaryRow, SweepSummary


class SeriesKey(NamedTuple):
    transport: str
    rlc_buffer_mb: float
    d_info_ms: float
    t_info_ms: float
    policy: str


def series_key(row: SummaryRow) -> SeriesKey:
    return SeriesKey(row.transport, row.rlc_buffer_mb, row.d_info_ms, row.t_info_ms, row.policy)


def series_label(key: SeriesKey, varying: set[str]) -> str:
    """Short column label. Only the parts that differ between series are included."""
    parts = [key.transport]
    if 'rlc_buffer_mb' in varying:
        parts.append(f"B{key.rlc_buffer_mb:g}MB")
    if 'd_info_ms' in varying:
        parts.append(f"Dinfo{key.d_info_ms:g}ms")
    if 't_info_ms' in varying:
        parts.append(f"Tinfo{key.t_info_ms:g}ms")
    if 'policy' in varying:
        parts.append(key.policy)
    return '_'.join(parts).replace('+', '-')


def _table(summary: SweepSummary, value: Callable[[SummaryRow], tuple[float, float]]) -> str:
    keys: list[SeriesKey] = []
    cells: dict[tuple[SeriesKey, float], SummaryRow] = {}
    for row in summary.rows:
        key = series_key(row)
        if key not in keys:
            keys.append(key)
        cells[(key, row.one_way_delay_ms)] = row
    varying = {field for field in SeriesKey._fields if len({getattr(k, field) for k in keys}) > 1}
    header = ['x'] + [f"{series_label(k, varying)}{suffix}" for k in keys for suffix in ('_mean', '_ci')]
    lines = [' '.join(header)]
    for x in sorted({row.one_way_delay_ms for row in summary.rows}):
        columns = [f"{x:g}"]
        for key in keys:
            row = cells.get((key, x))
            if row is None:
                columns += ['nan', 'nan']
            else:
                mean, ci = value(row)
                columns += [f"{mean:.6g}", f"{ci:.6g}"]
        lines.append(' '.join(columns))
    return '\n'.join(lines) + '\n'


def goodput_table(summary: SweepSummary) -> str:
    # Mbit/s
    return _table(summary, lambda row: (row.goodput_mean_bps / 1e6, row.goodput_ci_bps / 1e6))


def latency_table(summary: SweepSummary) -> str:
    # ms
    return _table(summary, lambda row: (row.latency_mean_us / 1e3, row.latency_ci_us / 1e3))


def emit_plots(summary: SweepSummary, directory: Path) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for filename, content in ((constants.GOODPUT_PLOT_FILENAME, goodput_table(summary)),
                              (constants.LATENCY_PLOT_FILENAME, latency_table(summary))):
        path = directory.joinpath(filename)
        path.write_text(content, encoding='utf-8')
        written.append(path)
    return written
