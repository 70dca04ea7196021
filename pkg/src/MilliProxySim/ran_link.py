"""The downlink RAN hop: a drop-tail RLC buffer at the gNB served once per slot at the rate of the
current channel state, followed by a fixed propagation/processing delay to the UE.

The RAN latency of a segment is measured from its arrival in the RLC buffer to its delivery at the UE.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
import logging
from typing import Callable, Optional

from .scenario_channel import ChannelState, RateConfig, Scenario, channel_state_at
from .sim_engine import Engine, SimTime
from .statistics_module import RunStatistics
from .tcp_stack import Segment


Delivery = Callable[[list[tuple[Segment, int]]], None]


@dataclass
class RlcBuffer:
    capacity: int
    queue: deque[tuple[Segment, SimTime]] = field(default_factory=deque)
    occupancy: int = 0

    def enqueue(self, seg: Segment, now: SimTime) -> bool:
        """Appends `seg` if it fits as a whole, drops it otherwise (drop-tail)."""
        if seg.length > self.capacity - self.occupancy:
            return False
        self.queue.append((seg, now))
        self.occupancy += seg.length
        return True


def slot_budget(state: ChannelState, slot_us: int) -> int:
    """Bytes the scheduler could allocate in one slot under the full buffer assumption."""
    return state.phy_rate * slot_us // 8_000_000


class RanLink:
    def __init__(self, engine: Engine, stats: RunStatistics, scenario: Scenario, rates: RateConfig,
                 capacity: int, slot_us: int = 125, propagation_us: int = 0,
                 deliver: Optional[Delivery] = None,
                 trace: Optional[Callable[[SimTime, int, ChannelState], None]] = None) -> None:
        self.engine = engine
        self.stats = stats
        self.scenario = scenario
        self.rates = rates
        self.buffer = RlcBuffer(capacity)
        self.slot_us = slot_us
        self.propagation_us = propagation_us
        self.deliver = deliver
        self.trace = trace
        # bytes that may still be sent in the current busy period
        self.credit = 0
        self.bytes_offered = 0
        self.bytes_dropped = 0
        self.bytes_served = 0
        self.capacity_bits = 0      # sum of full-buffer slot budgets, for the time-averaged capacity
        self.slots = 0
        self.occupancy_sum = 0      # per-slot samples of B, for the time-averaged occupancy
        self.last_state: Optional[ChannelState] = None

    def start(self) -> None:
        self.engine.schedule_in(self.slot_us, self._on_slot, label='slot')

    def channel_state(self, now: SimTime) -> ChannelState:
        return channel_state_at(now, self.scenario, self.rates)

    def enqueue(self, seg: Segment, now: SimTime) -> bool:
        self.bytes_offered += seg.length
        accepted = self.buffer.enqueue(seg, now)
        if accepted:
            self.stats.rlc_accepted_segments += 1
            self.stats.rlc_accepted_bytes += seg.length
        else:
            self.bytes_dropped += seg.length
            self.stats.rlc_dropped_segments += 1
            self.stats.rlc_dropped_bytes += seg.length
        return accepted

    def enqueue_batch(self, batch: list[Segment]) -> None:
        now = self.engine.now
        for seg in batch:
            self.enqueue(seg, now)

    def serve_slot(self, now: SimTime) -> list[tuple[Segment, int]]:
        """Dequeues whole segments in FIFO order within the slot budget. Returns the served segments
        with their RAN latency (delivery time minus enqueue time)."""
        state = self.channel_state(now)
        if state != self.last_state:
            if self.last_state is not None:
                self.stats.channel_transitions += 1
                logging.debug(f"Channel {self.last_state.label} -> {state.label} at {now} us")
            self.last_state = state
        budget = slot_budget(state, self.slot_us)
        self.slots += 1
        self.capacity_bits += 8 * budget
        queue = self.buffer.queue
        if budget == 0 or not queue:
            if not queue:
                self.credit = 0
            return []
        self.credit += budget
        delivery_time = now + self.propagation_us
        served = []
        while queue and queue[0][0].length <= self.credit:
            seg, enqueued_at = queue.popleft()
            self.credit -= seg.length
            self.buffer.occupancy -= seg.length
            self.bytes_served += seg.length
            served.append((seg, delivery_time - enqueued_at))
        if not queue:
            self.credit = 0
        self.stats.rlc_delivered_bytes += sum(seg.length for seg, _ in served)
        return served

    def occupancy_report(self, now: SimTime) -> int:
        return self.buffer.occupancy

    def _on_slot(self) -> None:
        now = self.engine.now
        served = self.serve_slot(now)
        self.occupancy_sum += self.buffer.occupancy
        if served and self.deliver is not None:
            self.engine.schedule(now + self.propagation_us, self.deliver, served, label='ue-delivery')
        if self.trace is not None:
            assert self.last_state is not None
            self.trace(now, self.buffer.occupancy, self.last_state)
        self.engine.schedule_in(self.slot_us, self._on_slot, label='slot')
