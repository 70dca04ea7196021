"""Deterministic discrete-event core.

The clock counts integer microseconds since the start of a run. Events are ordered by
`(fire_at, insertion_id)`, so events scheduled for the same instant run in the order they were
scheduled. All randomness is drawn from named sub-streams of one run seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import hashlib
import heapq
import logging
from typing import Any, Callable, Optional

import numpy as np


SimTime = int


@dataclass(eq=False)
class Event:
    """A scheduled action. Instances double as the handle returned by `Engine.schedule`."""
    fire_at: SimTime
    insertion_id: int
    action: Callable[..., None]
    args: tuple[Any, ...] = ()
    label: str = ''
    cancelled: bool = False

    @property
    def key(self) -> tuple[SimTime, int]:
        return (self.fire_at, self.insertion_id)


@dataclass(frozen=True)
class RngStream:
    """A named sub-stream of a run seed. The same `(seed, label)` always yields the same draws,
    independently of which other streams exist or how often they were used."""
    seed: int
    label: str

    @property
    def spawn_key(self) -> int:
        # hash() is salted per process, so derive the key from a stable digest instead
        return int.from_bytes(hashlib.sha256(self.label.encode('utf-8')).digest()[:8], 'little')

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(entropy=self.seed & 0xFFFF_FFFF_FFFF_FFFF, spawn_key=(self.spawn_key,))
        return np.random.Generator(np.random.PCG64(sequence))


@dataclass
class Engine:
    seed: int = 0
    record_trace: bool = False
    now: SimTime = 0
    events_executed: int = 0
    _queue: list[tuple[SimTime, int, Event]] = field(default_factory=list)
    _next_id: int = 0
    _trace: Any = field(default_factory=hashlib.sha256)

    def schedule(self, fire_at: SimTime, action: Callable[..., None], *args: Any, label: str = '') -> Event:
        """Enqueues `action(*args)` at the absolute time `fire_at`. Scheduling in the past is a
        programming error."""
        if fire_at < self.now:
            raise ValueError(f"Cannot schedule an event at {fire_at} us, the clock is already at {self.now} us")
        event = Event(fire_at, self._next_id, action, args, label)
        self._next_id += 1
        heapq.heappush(self._queue, (fire_at, event.insertion_id, event))
        return event

    def schedule_in(self, delay: SimTime, action: Callable[..., None], *args: Any, label: str = '') -> Event:
        return self.schedule(self.now + delay, action, *args, label=label)

    def cancel(self, event: Optional[Event]) -> None:
        # cancelled events stay in the heap and are skipped when popped
        if event is not None:
            event.cancelled = True

    def pending(self) -> int:
        return sum(1 for _, _, event in self._queue if not event.cancelled)

    def run_until(self, t_end: SimTime) -> SimTime:
        """Executes all events with `fire_at <= t_end` in key order and returns the final clock value."""
        queue = self._queue
        while queue and queue[0][0] <= t_end:
            fire_at, insertion_id, event = heapq.heappop(queue)
            if event.cancelled:
                continue
            self.now = fire_at
            if self.record_trace:
                label = event.label or getattr(event.action, '__qualname__', repr(event.action))
                self._trace.update(f"{fire_at}:{insertion_id}:{label}\n".encode('utf-8'))
            event.action(*event.args)
            self.events_executed += 1
        if queue:
            # time has passed up to t_end even though nothing happened in between
            self.now = max(self.now, t_end)
        logging.debug(f"Engine stopped at {self.now} us after {self.events_executed} events")
        return self.now

    def trace_digest(self) -> str:
        return str(self._trace.hexdigest())

    def rng(self, label: str) -> np.random.Generator:
        return RngStream(self.seed, label).generator()
