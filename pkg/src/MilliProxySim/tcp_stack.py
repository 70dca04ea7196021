"""TCP NewReno end hosts and a constant bit rate UDP source.

The sender follows the standard NewReno description: per-ACK slow start, congestion avoidance by
mss*mss/cwnd, fast retransmit on the third duplicate ACK, partial ACKs retransmitting the next hole
and deflating cwnd, a full ACK leaving recovery with cwnd = ssthresh, and RTO with ssthresh halving
and exponential backoff. The sender never has more than min(cwnd, advertised window) bytes
outstanding when it transmits new data.

Segments carry sequence space only; real payload bytes are attached when end-to-end verification is
enabled (see `PayloadStream`).
"""
from __future__ import annotations

from dataclasses import dataclass
import enum
import hashlib
import heapq
import logging
from typing import Any, Callable, Optional

import numpy as np

from .basics import TCP_PHASE
from .sim_engine import Engine, Event, SimTime
from .statistics_module import RunStatistics


class FLAG(enum.IntFlag):
    SYN = 1
    ACK = 2
    FIN = 4
    DATA = 8


@dataclass(slots=True)
class Segment:
    seq: int = 0
    length: int = 0
    flags: FLAG = FLAG.DATA
    ack_no: int = 0
    adv_window: int = 0
    ts_val: SimTime = 0         # 0 means "no timestamp"
    ts_echo: SimTime = 0
    mss_class: str = ''         # which hop produced the segment: 'mss1', 'mss2' or 'udp'
    payload: Optional[bytes] = None

    @property
    def end(self) -> int:
        return self.seq + self.length

    @property
    def is_ack(self) -> bool:
        return bool(self.flags & FLAG.ACK)

    @property
    def is_data(self) -> bool:
        return bool(self.flags & FLAG.DATA)


Transmit = Callable[[list[Segment]], None]


class PayloadStream:
    """The application byte stream of a flow: byte `i` equals `pattern[i % len(pattern)]`, with a
    random pattern drawn from a seeded stream. Any range can be produced without storing the stream."""
    PATTERN_LENGTH = 65521      # prime, so segment boundaries never line up with the pattern

    def __init__(self, rng: np.random.Generator) -> None:
        self.pattern = rng.integers(0, 256, size=self.PATTERN_LENGTH, dtype=np.uint8).tobytes()

    def slice(self, start: int, length: int) -> bytes:
        offset = start % self.PATTERN_LENGTH
        repeats = (offset + length) // self.PATTERN_LENGTH + 1
        return (self.pattern * repeats)[offset:offset + length] if repeats > 1 else self.pattern[offset:offset + length]

    def digest(self, length: int, chunk: int = 1 << 20) -> str:
        """SHA-256 of the first `length` bytes of the stream."""
        h = hashlib.sha256()
        for start in range(0, length, chunk):
            h.update(self.slice(start, min(chunk, length - start)))
        return h.hexdigest()


@dataclass
class SenderState:
    mss1: int
    cwnd: int
    ssthresh: int
    awnd_seen: int
    rto: int                    # us
    snd_una: int = 0
    snd_nxt: int = 0
    snd_max: int = 0            # highest sequence number ever sent, differs from snd_nxt after an RTO
    dup_ack_count: int = 0
    srtt: Optional[int] = None  # us
    rttvar: int = 0             # us
    recover: int = 0
    phase: TCP_PHASE = TCP_PHASE.SLOW_START
    # set once the first partial ACK of the current recovery episode arrived
    partial_acked: bool = False

    @property
    def in_flight(self) -> int:
        return self.snd_nxt - self.snd_una

    @property
    def window(self) -> int:
        return min(self.cwnd, self.awnd_seen)


@dataclass
class SenderConfig:
    mss1: int = 1400
    initial_cwnd_segments: int = 10
    initial_rto_us: int = 1_000_000
    min_rto_us: int = 200_000
    max_rto_us: int = 60_000_000
    initial_awnd: int = 64 * 1024 * 1024
    total_bytes: Optional[int] = None       # None: bulk transfer that never runs out of data


class NewRenoSender:
    def __init__(self, engine: Engine, stats: RunStatistics, config: SenderConfig, output: Transmit,
                 payload: Optional[PayloadStream] = None,
                 trace: Optional[Callable[[SimTime, SenderState], None]] = None) -> None:
        self.engine = engine
        self.stats = stats
        self.config = config
        self.output = output
        self.payload = payload
        self.trace = trace
        mss1 = config.mss1
        self.state = SenderState(mss1=mss1, cwnd=config.initial_cwnd_segments * mss1, ssthresh=2**62,
                                 awnd_seen=config.initial_awnd, rto=config.initial_rto_us)
        self.ts_recent: SimTime = 0
        self.rto_timer: Optional[Event] = None
        self.persist_timer: Optional[Event] = None
        self.persist_interval = config.initial_rto_us
        # number of times new data was sent beyond min(cwnd, awnd); must stay zero
        self.window_violations = 0

    # helpers

    def _has_unsent(self) -> bool:
        total = self.config.total_bytes
        return total is None or self.state.snd_nxt < total

    def _next_length(self, seq: int) -> int:
        total = self.config.total_bytes
        return self.state.mss1 if total is None else min(self.state.mss1, total - seq)

    def _make_segment(self, seq: int, length: int) -> Segment:
        return Segment(seq=seq, length=length, flags=FLAG.DATA, ts_val=self.engine.now, ts_echo=self.ts_recent,
                       mss_class='mss1', payload=self.payload.slice(seq, length) if self.payload is not None else None)

    def _transmit_at_nxt(self, batch: list[Segment], probe: bool = False) -> None:
        st = self.state
        length = self._next_length(st.snd_nxt)
        if st.snd_nxt < st.snd_max:
            self.stats.sender_retransmissions += 1
        elif not probe and st.in_flight + length > st.window:
            # new data beyond min(cwnd, awnd); retransmissions and persist probes are exempt
            self.window_violations += 1
        batch.append(self._make_segment(st.snd_nxt, length))
        st.snd_nxt += length
        st.snd_max = max(st.snd_max, st.snd_nxt)
        self.stats.sender_segments += 1

    def _retransmit_una(self, batch: list[Segment]) -> None:
        st = self.state
        length = min(self._next_length(st.snd_una), st.snd_max - st.snd_una)
        batch.append(self._make_segment(st.snd_una, length))
        self.stats.sender_segments += 1
        self.stats.sender_retransmissions += 1

    def _send_new_data(self, batch: list[Segment]) -> None:
        st = self.state
        while self._has_unsent():
            length = self._next_length(st.snd_nxt)
            if length <= 0 or not self._window_allows(length):
                break
            self._transmit_at_nxt(batch)

    def _window_allows(self, length: int) -> bool:
        st = self.state
        return st.in_flight + length <= st.window

    def _update_rtt(self, sample: int) -> None:
        # RFC 6298 with alpha = 1/8, beta = 1/4 in integer microseconds
        st = self.state
        if st.srtt is None:
            st.srtt = sample
            st.rttvar = sample // 2
        else:
            st.rttvar = (3 * st.rttvar + abs(st.srtt - sample)) // 4
            st.srtt = (7 * st.srtt + sample) // 8
        st.rto = min(max(self.config.min_rto_us, st.srtt + 4 * st.rttvar), self.config.max_rto_us)

    def _zero_window(self) -> bool:
        st = self.state
        if st.awnd_seen == 0:
            return True
        return st.in_flight == 0 and self._has_unsent() and self._next_length(st.snd_nxt) > st.awnd_seen

    def _restart_rto(self) -> None:
        self.engine.cancel(self.rto_timer)
        self.rto_timer = self.engine.schedule_in(self.state.rto, self.on_rto, label='rto')

    def _update_timers(self, restart_rto: bool) -> None:
        st = self.state
        if self._zero_window() and (st.in_flight > 0 or self._has_unsent()):
            self.engine.cancel(self.rto_timer)
            self.rto_timer = None
            if self.persist_timer is None:
                self.persist_interval = st.rto
                self.persist_timer = self.engine.schedule_in(self.persist_interval, self.on_persist, label='persist')
            return
        self.engine.cancel(self.persist_timer)
        self.persist_timer = None
        if st.in_flight > 0 or st.snd_una < st.snd_max:
            if restart_rto or self.rto_timer is None:
                self._restart_rto()
        else:
            self.engine.cancel(self.rto_timer)
            self.rto_timer = None

    def _flush(self, batch: list[Segment]) -> None:
        if batch:
            self.output(batch)

    # operations

    def start(self) -> None:
        batch: list[Segment] = []
        self._send_new_data(batch)
        self._update_timers(restart_rto=True)
        self._flush(batch)

    def on_ack(self, ack: Segment) -> None:
        st = self.state
        mss1 = st.mss1
        if ack.ack_no > st.snd_max:
            # acknowledges data that was never sent
            self.stats.discarded_acks += 1
            return
        batch: list[Segment] = []
        restart_rto = False
        self.ts_recent = ack.ts_val
        # an ACK that opens a closed window is a window update, not a duplicate
        window_update = st.awnd_seen < mss1 <= ack.adv_window
        if ack.ack_no >= st.snd_una:
            # older ACKs carry stale windows
            st.awnd_seen = ack.adv_window
        if ack.ack_no > st.snd_una:
            newly_acked = ack.ack_no - st.snd_una
            st.snd_una = ack.ack_no
            st.snd_nxt = max(st.snd_nxt, st.snd_una)
            if ack.ts_echo > 0:
                self._update_rtt(self.engine.now - ack.ts_echo)
            if st.phase == TCP_PHASE.FAST_RECOVERY:
                # RFC 6582: only the first partial ACK of an episode restarts the timer
                restart_rto = st.snd_una >= st.recover or not st.partial_acked
                if st.snd_una >= st.recover:
                    # full ACK
                    st.cwnd = st.ssthresh
                    st.dup_ack_count = 0
                    st.phase = TCP_PHASE.SLOW_START if st.cwnd < st.ssthresh else TCP_PHASE.CONGESTION_AVOIDANCE
                else:
                    # partial ACK: retransmit the next hole, deflate by the amount acked
                    self._retransmit_una(batch)
                    st.cwnd = max(st.cwnd - newly_acked + mss1, mss1)
                    st.partial_acked = True
            else:
                restart_rto = True
                st.dup_ack_count = 0
                if st.cwnd < st.ssthresh:
                    st.cwnd += mss1
                else:
                    st.cwnd += max(1, mss1 * mss1 // st.cwnd)
                st.phase = TCP_PHASE.SLOW_START if st.cwnd < st.ssthresh else TCP_PHASE.CONGESTION_AVOIDANCE
        elif ack.ack_no == st.snd_una and ack.length == 0 and st.snd_max > st.snd_una and not window_update:
            st.dup_ack_count += 1
            if st.phase == TCP_PHASE.FAST_RECOVERY:
                st.cwnd += mss1
            elif st.dup_ack_count == 3 and st.snd_una >= st.recover:
                flight = st.in_flight
                st.ssthresh = max(flight // 2, 2 * mss1)
                st.recover = st.snd_max
                self._retransmit_una(batch)
                st.cwnd = st.ssthresh + 3 * mss1
                st.phase = TCP_PHASE.FAST_RECOVERY
                st.partial_acked = False
                restart_rto = True
                self.stats.fast_retransmits += 1
                logging.debug(f"Fast retransmit of {st.snd_una} at {self.engine.now} us, ssthresh={st.ssthresh}")
        self._send_new_data(batch)
        self._update_timers(restart_rto)
        if self.trace is not None:
            self.trace(self.engine.now, st)
        self._flush(batch)

    def on_rto(self) -> None:
        st = self.state
        self.rto_timer = None
        if st.snd_una >= st.snd_max:
            return
        flight = st.in_flight
        st.ssthresh = max(flight // 2, 2 * st.mss1)
        st.cwnd = st.mss1
        st.phase = TCP_PHASE.SLOW_START
        st.dup_ack_count = 0
        st.recover = st.snd_max
        # go back N: everything after snd_una is sent again
        st.snd_nxt = st.snd_una
        st.rto = min(st.rto * 2, self.config.max_rto_us)
        self.stats.rtos += 1
        logging.debug(f"RTO at {self.engine.now} us: ssthresh={st.ssthresh}, next rto={st.rto} us")
        batch: list[Segment] = []
        self._transmit_at_nxt(batch)
        self._restart_rto()
        if self.trace is not None:
            self.trace(self.engine.now, st)
        self._flush(batch)

    def on_persist(self) -> None:
        st = self.state
        self.persist_timer = None
        if not self._zero_window():
            self._update_timers(restart_rto=True)
            return
        batch: list[Segment] = []
        if st.in_flight > 0:
            self._retransmit_una(batch)
        elif self._has_unsent():
            self._transmit_at_nxt(batch, probe=True)
        self.stats.persist_probes += 1
        self.persist_interval = min(self.persist_interval * 2, self.config.max_rto_us)
        self.persist_timer = self.engine.schedule_in(self.persist_interval, self.on_persist, label='persist')
        self._flush(batch)


class TcpReceiver:
    """Cumulative-ACK receiver, one ACK per received data segment."""

    def __init__(self, engine: Engine, adv_window: int = 64 * 1024 * 1024, verify_payload: bool = False) -> None:
        self.engine = engine
        self.adv_window = adv_window
        self.rcv_nxt = 0
        self.last_ts_val: SimTime = 0
        self.delivered_bytes = 0
        self.verify_payload = verify_payload
        self._digest: Any = hashlib.sha256()
        # out-of-order store: heap of start offsets plus the segments themselves
        self._ooo_heap: list[int] = []
        self._ooo: dict[int, Segment] = {}

    @property
    def digest(self) -> str:
        return str(self._digest.hexdigest())

    def _deliver(self, seg: Segment) -> None:
        """Appends the part of `seg` beyond `rcv_nxt` to the in-order stream."""
        if seg.end <= self.rcv_nxt:
            return
        skip = self.rcv_nxt - seg.seq
        if self.verify_payload and seg.payload is not None:
            self._digest.update(seg.payload[skip:])
        self.delivered_bytes += seg.end - self.rcv_nxt
        self.rcv_nxt = seg.end

    def _store(self, seg: Segment) -> None:
        known = self._ooo.get(seg.seq)
        if known is None:
            heapq.heappush(self._ooo_heap, seg.seq)
            self._ooo[seg.seq] = seg
        elif seg.length > known.length:
            self._ooo[seg.seq] = seg

    def on_data(self, seg: Segment) -> Segment:
        self.last_ts_val = seg.ts_val
        if seg.seq <= self.rcv_nxt:
            self._deliver(seg)
            while self._ooo_heap and self._ooo_heap[0] <= self.rcv_nxt:
                self._deliver(self._ooo.pop(heapq.heappop(self._ooo_heap)))
        else:
            self._store(seg)
        return Segment(flags=FLAG.ACK, ack_no=self.rcv_nxt, adv_window=self.adv_window,
                       ts_val=self.engine.now, ts_echo=seg.ts_val)


class UdpSource:
    """Constant bit rate source: every tick, emits as many fixed-size datagrams as needed to keep
    the number of sent bytes at floor(rate * elapsed / 8)."""

    def __init__(self, engine: Engine, stats: RunStatistics, rate_bps: int, datagram_bytes: int,
                 tick_us: int, output: Transmit) -> None:
        if rate_bps <= 0:
            raise ValueError(f"The UDP rate must be positive, got {rate_bps}")
        self.engine = engine
        self.stats = stats
        self.rate_bps = rate_bps
        self.datagram_bytes = datagram_bytes
        self.tick_us = tick_us
        self.output = output
        self.sent_bytes = 0
        self._started_at: SimTime = 0

    def start(self) -> None:
        self._started_at = self.engine.now
        self.engine.schedule_in(self.tick_us, self.tick, label='udp')

    def tick(self) -> None:
        now = self.engine.now
        due = self.rate_bps * (now - self._started_at) // 8_000_000
        batch = []
        while self.sent_bytes + self.datagram_bytes <= due:
            batch.append(Segment(seq=self.sent_bytes, length=self.datagram_bytes, flags=FLAG.DATA,
                                 ts_val=now, mss_class='udp'))
            self.sent_bytes += self.datagram_bytes
        self.stats.udp_datagrams += len(batch)
        if batch:
            self.output(batch)
        self.engine.schedule_in(self.tick_us, self.tick, label='udp')


@dataclass
class UdpSink:
    delivered_bytes: int = 0
    delivered_datagrams: int = 0

    def on_data(self, seg: Segment) -> None:
        self.delivered_bytes += seg.length
        self.delivered_datagrams += 1
