"""Per-flow proxy instance.

The proxy sits on the path between the server and the UE and is transparent to both of them. It
stores the payload of server segments in its buffer, forwards it to the UE in segments of up to
mss2 bytes as long as the flow window allows, and turns every UE ACK into a train of ACKs towards
the server, one per mss1 bytes, whose advertised window enforces the flow window at the server.
No byte is ever acknowledged towards the server before the UE has acknowledged it.

Terminology (all offsets are in the end-to-end sequence space)
-----------
    acked           highest byte acknowledged by the UE; everything below is evicted
    forwarded       highest byte sent towards the UE
    in_order_end    end of the contiguous stored data
    relayed         highest ACK sent towards the server (== acked after every UE ACK)
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
import heapq
import logging
import math
from typing import Callable, Optional

from .basics import MB
from .crosslayer_bus import CrossLayerSample, link_info
from .fw_policy import FlowWindowInput, PolicyConfig, create_policy
from .sim_engine import Engine, Event, SimTime
from .statistics_module import RunStatistics
from .tcp_stack import FLAG, Segment, Transmit


@dataclass
class RttEstimator:
    """RTT estimation from the timestamp option, assuming both end hosts share one clock.

    Server data: TS_val is the send time at the server, TS_echo the send time of the UE ACK that
    triggered it, so their difference is the UE -> server latency. UE ACKs: TS_val is the UE send
    time, TS_echo the server send time of the acknowledged data, giving the server -> UE latency.
    """
    rtt_min: Optional[int] = None
    uplink: Optional[int] = None        # T_UE->server, us
    downlink: Optional[int] = None      # T_server->UE, us
    last_rtt: Optional[int] = None

    @property
    def available(self) -> bool:
        return self.rtt_min is not None

    @staticmethod
    def _latency(seg: Segment) -> Optional[int]:
        if seg.ts_val <= 0 or seg.ts_echo <= 0 or seg.ts_val < seg.ts_echo:
            return None
        return seg.ts_val - seg.ts_echo

    def _combine(self) -> None:
        if self.uplink is None or self.downlink is None:
            return
        self.last_rtt = self.uplink + self.downlink
        if self.rtt_min is None or self.last_rtt < self.rtt_min:
            self.rtt_min = self.last_rtt

    def on_server_data(self, seg: Segment) -> None:
        latency = self._latency(seg)
        if latency is not None:
            self.uplink = latency
            self._combine()

    def on_ue_ack(self, ack: Segment) -> None:
        latency = self._latency(ack)
        if latency is not None:
            self.downlink = latency
            self._combine()


@dataclass(frozen=True)
class ProxyConfig:
    mss1: int = 1400
    mss2: int = 20000
    buffer_capacity: int = 10 * MB
    aggregation_timeout_us: int = 1000
    policy: PolicyConfig = field(default_factory=PolicyConfig)


ProxyTrace = Callable[[SimTime, 'ProxyInstance'], None]


def _piece(seg: Segment, start: int, end: int) -> Segment:
    """The part `[start, end)` of a stored data segment."""
    if start == seg.seq and end == seg.end:
        return seg
    payload = seg.payload[start - seg.seq:end - seg.seq] if seg.payload is not None else None
    return Segment(seq=start, length=end - start, flags=FLAG.DATA, ts_val=seg.ts_val, ts_echo=seg.ts_echo,
                   mss_class=seg.mss_class, payload=payload)


class ProxyInstance:
    def __init__(self, engine: Engine, stats: RunStatistics, config: ProxyConfig,
                 to_ue: Optional[Transmit] = None, to_server: Optional[Transmit] = None,
                 trace: Optional[ProxyTrace] = None) -> None:
        self.engine = engine
        self.stats = stats
        self.config = config
        self.to_ue = to_ue
        self.to_server = to_server
        self.trace = trace
        self.policy = create_policy(config.policy)
        self.rtt = RttEstimator()
        self.link_sample: Optional[CrossLayerSample] = None
        self.fw = self.policy.compute_window(FlowWindowInput())
        # sequence space pointers
        self.acked = 0
        self.relayed = 0
        self.forwarded = 0
        self.in_order_end = 0
        # stored payload: forwarded but not acked, in order but not forwarded, out of order
        self.outstanding: deque[Segment] = deque()
        self.unforwarded: deque[Segment] = deque()
        self._ooo: dict[int, Segment] = {}
        self._ooo_heap: list[int] = []
        self.occupancy = 0
        self.flush_timer: Optional[Event] = None
        self.last_adv: Optional[int] = None
        self.last_ue_ts: SimTime = 0
        self.last_echo: SimTime = 0

    # buffer

    @property
    def free_space(self) -> int:
        return self.config.buffer_capacity - self.occupancy

    @property
    def advertised_window(self) -> int:
        return min(self.fw, self.free_space)

    @property
    def headroom(self) -> int:
        return max(self.fw - (self.forwarded - self.acked), 0)

    def _store(self, seg: Segment) -> None:
        self.occupancy += seg.length
        if seg.seq == self.in_order_end:
            self.unforwarded.append(seg)
            self.in_order_end = seg.end
            self._pull_out_of_order()
        else:
            heapq.heappush(self._ooo_heap, seg.seq)
            self._ooo[seg.seq] = seg

    def _pull_out_of_order(self) -> None:
        while self._ooo_heap and self._ooo_heap[0] <= self.in_order_end:
            chunk = self._ooo.pop(heapq.heappop(self._ooo_heap))
            if chunk.end <= self.in_order_end:
                self.occupancy -= chunk.length
                continue
            if chunk.seq < self.in_order_end:
                self.occupancy -= self.in_order_end - chunk.seq
                chunk = _piece(chunk, self.in_order_end, chunk.end)
            self.unforwarded.append(chunk)
            self.in_order_end = chunk.end

    def _evict(self, ack_no: int) -> list[tuple[int, SimTime]]:
        """Discards the stored bytes below `ack_no`. Returns `(end, ts_val)` of the evicted pieces."""
        evicted = []
        outstanding = self.outstanding
        while outstanding and outstanding[0].seq < ack_no:
            head = outstanding[0]
            if head.end <= ack_no:
                outstanding.popleft()
                self.occupancy -= head.length
                evicted.append((head.end, head.ts_val))
            else:
                outstanding[0] = _piece(head, ack_no, head.end)
                self.occupancy -= ack_no - head.seq
                evicted.append((ack_no, head.ts_val))
                break
        return evicted

    # emission

    def _emit_to_ue(self, batch: list[Segment]) -> None:
        if batch and self.to_ue is not None:
            self.to_ue(batch)

    def _emit_to_server(self, batch: list[Segment]) -> None:
        if batch:
            self.last_adv = batch[-1].adv_window
            if self.to_server is not None:
                self.to_server(batch)

    def _upstream_ack(self, ack_no: int, ts_val: SimTime, ts_echo: SimTime) -> Segment:
        return Segment(flags=FLAG.ACK, ack_no=ack_no, adv_window=self.advertised_window, ts_val=ts_val, ts_echo=ts_echo)

    # operations

    def estimate_rtt(self, seg: Segment, now: SimTime) -> RttEstimator:
        if seg.is_ack:
            self.rtt.on_ue_ack(seg)
        else:
            self.rtt.on_server_data(seg)
        return self.rtt

    def intercept_data(self, seg: Segment, now: SimTime) -> list[Segment]:
        """Handles a data segment from the server. Returns the segments sent towards the UE."""
        self.estimate_rtt(seg, now)
        out: list[Segment] = []
        start, end = seg.seq, seg.end
        if end <= self.acked:
            self.stats.proxy_duplicate_segments += 1
            return out
        # a retransmission of bytes the UE has not acknowledged yet is passed on right away
        lo, hi = max(start, self.acked), min(end, self.forwarded)
        if lo < hi:
            piece = _piece(seg, lo, hi)
            out.append(Segment(seq=lo, length=hi - lo, flags=FLAG.DATA, ts_val=piece.ts_val, ts_echo=piece.ts_echo,
                               mss_class='mss2', payload=piece.payload))
            self.stats.proxy_reforwarded_bytes += hi - lo
        start = max(start, self.in_order_end)
        if start >= end or start in self._ooo:
            self.stats.proxy_duplicate_segments += 1
        elif end - start > self.free_space:
            self.stats.proxy_dropped_segments += 1
            logging.debug(f"Proxy buffer full at {now} us: dropped [{seg.seq}, {seg.end}), {self.free_space} bytes free")
        else:
            self._store(_piece(seg, start, end))
        out.extend(self._forward_pending(now))
        self._emit_to_ue(out)
        return out

    def aggregate_and_forward(self, now: SimTime, flush: bool = False) -> Optional[Segment]:
        """Builds the next segment towards the UE, or returns `None` if nothing may be sent now.
        Outside of a flush only full segments, or flow-window limited segments of at least mss1
        bytes, are sent."""
        cfg = self.config
        available = self.in_order_end - self.forwarded
        headroom = self.headroom
        length = min(available, cfg.mss2, headroom)
        if length <= 0:
            return None
        fw_limited = headroom < min(available, cfg.mss2)
        if not (flush or length == cfg.mss2 or (fw_limited and length >= cfg.mss1)):
            return None
        taken: list[Segment] = []
        need = length
        while need > 0:
            head = self.unforwarded[0]
            if head.length <= need:
                self.unforwarded.popleft()
            else:
                self.unforwarded[0] = _piece(head, head.seq + need, head.end)
                head = _piece(head, head.seq, head.seq + need)
            taken.append(head)
            need -= head.length
        self.outstanding.extend(taken)
        payload = b''.join(p.payload for p in taken if p.payload is not None) if taken[0].payload is not None else None
        tail = taken[-1]
        seg = Segment(seq=self.forwarded, length=length, flags=FLAG.DATA, ts_val=tail.ts_val, ts_echo=tail.ts_echo,
                      mss_class='mss2', payload=payload)
        self.forwarded += length
        self.stats.proxy_forwarded_segments += 1
        return seg

    def _forward_pending(self, now: SimTime, flush: bool = False) -> list[Segment]:
        out = []
        while (seg := self.aggregate_and_forward(now, flush)) is not None:
            out.append(seg)
        pending = self.in_order_end > self.forwarded and self.headroom > 0
        if out or not pending:
            self.engine.cancel(self.flush_timer)
            self.flush_timer = None
        if pending and self.flush_timer is None:
            self.flush_timer = self.engine.schedule_in(self.config.aggregation_timeout_us, self._on_flush, label='proxy-flush')
        return out

    def _on_flush(self) -> None:
        self.flush_timer = None
        self._emit_to_ue(self._forward_pending(self.engine.now, flush=True))

    def on_ue_ack(self, ack: Segment, now: SimTime) -> list[Segment]:
        """Handles an ACK from the UE. Returns the ACKs sent towards the server."""
        self.estimate_rtt(ack, now)
        self.last_ue_ts = ack.ts_val
        ack_no = min(ack.ack_no, self.forwarded)
        upstream: list[Segment] = []
        if ack_no > self.acked:
            evicted = self._evict(ack_no)
            self.acked = ack_no
            self._recompute_window(now)
            mss1 = self.config.mss1
            previous = self.relayed
            count = math.ceil((ack_no - previous) / mss1)
            j = 0
            for k in range(1, count + 1):
                step = ack_no if k == count else previous + k * mss1
                # echo the server timestamp of the segment that carried the last acknowledged byte
                while j < len(evicted) - 1 and evicted[j][0] < step:
                    j += 1
                if evicted:
                    self.last_echo = evicted[j][1]
                upstream.append(self._upstream_ack(step, ack.ts_val, self.last_echo))
            self.relayed = ack_no
            self.stats.upstream_acks += count
        else:
            # duplicates are relayed one to one, so the server still sees three of them
            self._recompute_window(now)
            upstream.append(self._upstream_ack(self.relayed, ack.ts_val, self.last_echo))
            self.stats.upstream_acks += 1
            self.stats.upstream_dup_acks += 1
        self._emit_to_server(upstream)
        self._emit_to_ue(self._forward_pending(now))
        if self.trace is not None:
            self.trace(now, self)
        return upstream

    def _flow_input(self, now: SimTime) -> FlowWindowInput:
        info = link_info(self.link_sample, now)
        if info is None:
            return FlowWindowInput(rtt_min=self.rtt.rtt_min)
        return FlowWindowInput(rtt_min=self.rtt.rtt_min, rate=info.rate, buffer_occupancy=info.occupancy,
                               info_age=info.info_age, outage=info.outage)

    def _recompute_window(self, now: SimTime) -> int:
        self.fw = max(self.policy.compute_window(self._flow_input(now)), 0)
        return self.fw

    def refresh_flow_window(self, info: FlowWindowInput, now: Optional[SimTime] = None) -> int:
        """Applies the policy to `info`, then forwards whatever the new window allows. A window that
        opens again after having been advertised as closed is announced to the server right away."""
        now = self.engine.now if now is None else now
        self.fw = max(self.policy.compute_window(info), 0)
        self._emit_to_ue(self._forward_pending(now))
        if self.last_adv is not None and self.last_adv < self.config.mss1 <= self.advertised_window:
            self._emit_to_server([self._upstream_ack(self.relayed, self.last_ue_ts, self.last_echo)])
            self.stats.upstream_acks += 1
        return self.fw

    def on_crosslayer_sample(self, sample: CrossLayerSample) -> None:
        now = self.engine.now
        self.link_sample = sample
        self.refresh_flow_window(self._flow_input(now), now)
        if self.trace is not None:
            self.trace(now, self)
