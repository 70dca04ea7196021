"""Periodic export of gNB-side link state to the proxy.

Every T_info the bus samples the RLC occupancy B, the achievable rate R_e and the outage flag, and
delivers the sample D_info later. D_info = 0 models a proxy inside the gNB, D_info > 0 a proxy in the
edge or core network.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

from .basics import RATE_ESTIMATOR, ConfigurationError
from .ran_link import RanLink, slot_budget
from .sim_engine import Engine, SimTime


class CrossLayerSample(NamedTuple):
    taken_at: SimTime
    delivered_at: SimTime
    occupancy: int          # B, bytes
    rate: int               # R_e, bit/s
    outage: bool


class LinkInfo(NamedTuple):
    """The proxy-side view of the latest delivered sample."""
    occupancy: int
    rate: int
    outage: bool
    info_age: int           # us


def link_info(sample: Optional[CrossLayerSample], now: SimTime) -> Optional[LinkInfo]:
    if sample is None:
        return None
    return LinkInfo(occupancy=sample.occupancy, rate=sample.rate, outage=sample.outage, info_age=now - sample.taken_at)


@dataclass(frozen=True)
class BusConfig:
    d_info_us: int = 0
    t_info_us: int = 10_000
    estimator: RATE_ESTIMATOR = RATE_ESTIMATOR.FULL_BUFFER

    def __post_init__(self) -> None:
        if self.t_info_us <= 0:
            raise ConfigurationError(f"T_info must be positive, got {self.t_info_us} us")
        if self.d_info_us < 0:
            raise ConfigurationError(f"D_info must not be negative, got {self.d_info_us} us")


class CrossLayerBus:
    def __init__(self, engine: Engine, link: RanLink, config: BusConfig,
                 on_delivery: Optional[Callable[[CrossLayerSample], None]] = None,
                 trace: Optional[Callable[[CrossLayerSample], None]] = None) -> None:
        self.engine = engine
        self.link = link
        self.config = config
        self.on_delivery = on_delivery
        self.trace = trace
        self.latest: Optional[CrossLayerSample] = None
        self.in_transit: deque[CrossLayerSample] = deque()
        self._served_mark = (0, 0)     # (time, bytes served) at the previous sample

    def start(self) -> None:
        self.engine.schedule_in(0, self._tick, label='crosslayer-sample')

    def estimate_rate(self, now: SimTime) -> int:
        if self.config.estimator == RATE_ESTIMATOR.MEASURED:
            # throughput actually achieved since the previous sample
            last_time, last_served = self._served_mark
            self._served_mark = (now, self.link.bytes_served)
            elapsed = now - last_time
            return (self.link.bytes_served - last_served) * 8_000_000 // elapsed if elapsed > 0 else 0
        slot_us = self.link.slot_us
        return slot_budget(self.link.channel_state(now), slot_us) * 8_000_000 // slot_us

    def sample_and_deliver(self, now: SimTime) -> CrossLayerSample:
        """Takes a sample now and schedules its delivery to the proxy D_info later."""
        state = self.link.channel_state(now)
        sample = CrossLayerSample(taken_at=now, delivered_at=now + self.config.d_info_us,
                                  occupancy=self.link.occupancy_report(now),
                                  rate=self.estimate_rate(now), outage=state.outage)
        self.in_transit.append(sample)
        self.engine.schedule(sample.delivered_at, self._deliver, label='crosslayer-delivery')
        return sample

    def _tick(self) -> None:
        self.sample_and_deliver(self.engine.now)
        self.engine.schedule_in(self.config.t_info_us, self._tick, label='crosslayer-sample')

    def _deliver(self) -> None:
        # constant delay, so samples arrive in the order they were taken
        sample = self.in_transit.popleft()
        self.latest = sample
        if self.trace is not None:
            self.trace(sample)
        if self.on_delivery is not None:
            self.on_delivery(sample)

    def latest_info(self, now: SimTime) -> Optional[LinkInfo]:
        """The most recently delivered sample, or `None` before the first delivery."""
        return link_info(self.latest, now)
