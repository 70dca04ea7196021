"""CSV time series of a single run, written when `trace_dir` is configured."""
from __future__ import annotations

import csv
from pathlib import Path
from types import TracebackType
from typing import Any, Optional, Sequence, TextIO

from .crosslayer_bus import CrossLayerSample
from .milliproxy import ProxyInstance
from .scenario_channel import ChannelState
from .sim_engine import SimTime
from .tcp_stack import SenderState


LINK_COLUMNS = ('time_us', 'B_bytes', 'phy_rate_bps', 'state')
SENDER_COLUMNS = ('time_us', 'cwnd', 'awnd_seen', 'in_flight', 'phase')
PROXY_COLUMNS = ('time_us', 'fw_bytes', 'rtt_min_us', 'buffer_occupancy', 'forwarded_bytes', 'relayed_acks')
CROSSLAYER_COLUMNS = ('taken_at', 'delivered_at', 'B', 'R_e', 'outage')


class CsvTrace:
    def __init__(self, path: Path, columns: Sequence[str]) -> None:
        self.path = path
        self._file: TextIO = path.open('w', newline='', encoding='utf-8')
        self._writer = csv.writer(self._file)
        self._writer.writerow(columns)
        self.rows = 0

    def write(self, *values: Any) -> None:
        self._writer.writerow(values)
        self.rows += 1

    def close(self) -> None:
        self._file.close()


class RunTraces:
    """The four trace files of a run. Only the files of components that exist in the run's topology
    receive rows; the others keep their header."""

    def __init__(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        self.link = CsvTrace(directory / 'link.csv', LINK_COLUMNS)
        self.sender = CsvTrace(directory / 'sender.csv', SENDER_COLUMNS)
        self.proxy = CsvTrace(directory / 'proxy.csv', PROXY_COLUMNS)
        self.crosslayer = CsvTrace(directory / 'crosslayer.csv', CROSSLAYER_COLUMNS)

    def on_slot(self, now: SimTime, occupancy: int, state: ChannelState) -> None:
        self.link.write(now, occupancy, state.phy_rate, state.label)

    def on_sender(self, now: SimTime, st: SenderState) -> None:
        self.sender.write(now, st.cwnd, st.awnd_seen, st.in_flight, st.phase)

    def on_proxy(self, now: SimTime, proxy: ProxyInstance) -> None:
        rtt_min = '' if proxy.rtt.rtt_min is None else proxy.rtt.rtt_min
        self.proxy.write(now, proxy.fw, rtt_min, proxy.occupancy, proxy.forwarded, proxy.relayed)

    def on_sample(self, sample: CrossLayerSample) -> None:
        self.crosslayer.write(sample.taken_at, sample.delivered_at, sample.occupancy, sample.rate, int(sample.outage))

    def close(self) -> None:
        for trace in (self.link, self.sender, self.proxy, self.crosslayer):
            trace.close()

    def __enter__(self) -> RunTraces:
        return self

    def __exit__(self, exc_type: Optional[type[BaseException]], exc: Optional[BaseException],
                 tb: Optional[TracebackType]) -> None:
        self.close()
