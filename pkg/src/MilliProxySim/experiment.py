"""A single seeded run: builds the topology, runs the engine and computes the run metrics.

Topology (one flow, downlink bulk transfer)

    server --D_RS-- core --D_S1-- gNB [+ proxy] --RLC/slots/link delay-- UE
    server <-D_RS-- core <-D_S1-- gNB [+ proxy] <-------uplink delay----- UE

The fixed network never queues, so the two core hops are modeled as one delay of D_S1 + D_RS.
"""
from __future__ import annotations

from contextlib import ExitStack
import logging
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel

from .basics import TRANSPORT, ConfigurationError, ms_to_us, mb_to_bytes
from .config_files import RunConfig
from .crosslayer_bus import CrossLayerBus
from .milliproxy import ProxyInstance
from .ran_link import RanLink
from .scenario_channel import generate_obstacles
from .sim_engine import Engine, SimTime
from .statistics_module import RunStatistics, rate_fmt, sizeof_fmt
from .tcp_stack import NewRenoSender, PayloadStream, Segment, TcpReceiver, UdpSink, UdpSource
from .traces import RunTraces


PAIR_EXCLUDE = ('seed', 'transport')


class RunMetrics(BaseModel):
    config_id: str
    # equal for runs that differ only in seed and transport; used to pair proxy and baseline runs
    pair_id: str
    seed: int
    transport: str
    d_s1_ms: float
    d_rs_ms: float
    rlc_buffer_mb: float
    d_info_ms: float
    t_info_ms: float
    policy: str
    duration_s: float
    delivered_bytes: int
    goodput_bps: float
    capacity_bps: float
    ran_latency_mean_us: float
    ran_latency_p50_us: float
    ran_latency_p95_us: float
    latency_samples: int
    mean_rlc_occupancy: float
    rlc_dropped_segments: int
    proxy_dropped_segments: int
    retransmissions: int
    rtos: int
    fast_retransmits: int
    rtt_min_us: Optional[int] = None
    e2e_violations: int = 0
    window_violations: int = 0
    stream_digest: Optional[str] = None
    sent_digest: Optional[str] = None
    error: Optional[str] = None

    @classmethod
    def columns(cls) -> list[str]:
        return list(cls.__fields__)

    def csv_row(self) -> dict[str, str]:
        return {name: '' if value is None else str(value) for name, value in self.dict().items()}

    @classmethod
    def from_csv_row(cls, row: dict[str, str]) -> RunMetrics:
        values: dict[str, Any] = {}
        for name, field in cls.__fields__.items():
            raw = row[name]
            values[name] = None if raw == '' and field.allow_none else raw
        return cls.parse_obj(values)

    @classmethod
    def failed(cls, cfg: RunConfig, message: str) -> RunMetrics:
        """The row of a cell that raised instead of producing metrics."""
        return cls(config_id=cfg.config_id(), pair_id=cfg.config_id(PAIR_EXCLUDE), seed=cfg.seed,
                   transport=cfg.transport.value, d_s1_ms=cfg.d_s1_ms, d_rs_ms=cfg.d_rs_ms, rlc_buffer_mb=cfg.rlc_buffer_mb,
                   d_info_ms=cfg.d_info_ms, t_info_ms=cfg.t_info_ms, policy=cfg.policy, duration_s=0.0, delivered_bytes=0,
                   goodput_bps=0.0, capacity_bps=0.0, ran_latency_mean_us=0.0, ran_latency_p50_us=0.0, ran_latency_p95_us=0.0, latency_samples=0,
                   mean_rlc_occupancy=0.0, rlc_dropped_segments=0, proxy_dropped_segments=0, retransmissions=0, rtos=0,
                   fast_retransmits=0, error=message)


def minimum_rtt_us(cfg: RunConfig) -> int:
    """The RTT of a segment that never waits in a queue."""
    return 2 * ms_to_us(cfg.d_s1_ms + cfg.d_rs_ms) + cfg.uplink_delay_us + cfg.link_delay_us


class Topology:
    """All nodes of one run, wired through engine events. Nothing is shared with other runs."""

    def __init__(self, cfg: RunConfig, traces: Optional[RunTraces] = None, record_trace: bool = False) -> None:
        self.cfg = cfg
        self.engine = Engine(seed=cfg.seed, record_trace=record_trace)
        self.stats = RunStatistics()
        engine = self.engine
        obstacles = generate_obstacles(cfg.obstacle_count, cfg.obstacle_width_m, cfg.obstacle_height_m,
                                       cfg.obstacle_rectangle, engine.rng('obstacles'))
        self.scenario = cfg.scenario(tuple(obstacles))
        self.duration_us = cfg.duration_us()
        self.core_delay_us = ms_to_us(cfg.d_s1_ms + cfg.d_rs_ms)
        self.latencies: list[int] = []
        self.ue_highest_ack = 0
        self.e2e_violations = 0

        self.link = RanLink(engine, self.stats, self.scenario, cfg.rate_config(), mb_to_bytes(cfg.rlc_buffer_mb),
                            slot_us=cfg.slot_us, propagation_us=cfg.link_delay_us, deliver=self._at_ue,
                            trace=traces.on_slot if traces is not None else None)
        self.payload: Optional[PayloadStream] = None
        self.sender: Optional[NewRenoSender] = None
        self.receiver: Optional[TcpReceiver] = None
        self.proxy: Optional[ProxyInstance] = None
        self.bus: Optional[CrossLayerBus] = None
        self.udp_source: Optional[UdpSource] = None
        self.udp_sink: Optional[UdpSink] = None

        if cfg.transport == TRANSPORT.UDP:
            self.udp_source = UdpSource(engine, self.stats, cfg.udp_rate_bps or cfg.max_phy_rate_bps,
                                        cfg.udp_datagram_bytes, cfg.slot_us, self._from_server)
            self.udp_sink = UdpSink()
            return
        if cfg.verify_payload:
            self.payload = PayloadStream(engine.rng('payload'))
        self.sender = NewRenoSender(engine, self.stats, cfg.sender_config(), self._from_server, self.payload,
                                    trace=traces.on_sender if traces is not None else None)
        self.receiver = TcpReceiver(engine, mb_to_bytes(cfg.receiver_window_mb), verify_payload=cfg.verify_payload)
        if cfg.transport == TRANSPORT.MILLIPROXY:
            self.proxy = ProxyInstance(engine, self.stats, cfg.proxy_config(), to_ue=self.link.enqueue_batch,
                                       to_server=self._to_server, trace=traces.on_proxy if traces is not None else None)
            self.bus = CrossLayerBus(engine, self.link, cfg.bus_config(), on_delivery=self.proxy.on_crosslayer_sample,
                                     trace=traces.on_sample if traces is not None else None)

    # packet path

    def _from_server(self, batch: list[Segment]) -> None:
        self.engine.schedule_in(self.core_delay_us, self._at_gnb_data, batch, label='core-downlink')

    def _at_gnb_data(self, batch: list[Segment]) -> None:
        if self.proxy is None:
            self.link.enqueue_batch(batch)
            return
        now = self.engine.now
        for seg in batch:
            self.proxy.intercept_data(seg, now)

    def _at_ue(self, served: list[tuple[Segment, int]]) -> None:
        self.latencies.extend(latency for _, latency in served)
        if self.udp_sink is not None:
            for seg, _ in served:
                self.udp_sink.on_data(seg)
            return
        assert self.receiver is not None
        acks = [self.receiver.on_data(seg) for seg, _ in served]
        self.ue_highest_ack = self.receiver.rcv_nxt
        self.engine.schedule_in(self.cfg.uplink_delay_us, self._at_gnb_ack, acks, label='uplink')

    def _at_gnb_ack(self, acks: list[Segment]) -> None:
        if self.proxy is None:
            self._to_server(acks)
            return
        now = self.engine.now
        for ack in acks:
            self.proxy.on_ue_ack(ack, now)

    def _to_server(self, acks: list[Segment]) -> None:
        for ack in acks:
            if ack.ack_no > self.ue_highest_ack:
                self.e2e_violations += 1
        self.engine.schedule_in(self.core_delay_us, self._at_server, acks, label='core-uplink')

    def _at_server(self, acks: list[Segment]) -> None:
        assert self.sender is not None
        for ack in acks:
            self.sender.on_ack(ack)

    # run

    def start(self) -> None:
        self.link.start()
        if self.bus is not None:
            self.bus.start()
        if self.udp_source is not None:
            self.udp_source.start()
        if self.sender is not None:
            self.engine.schedule(0, self.sender.start, label='flow-start')

    def run(self) -> RunMetrics:
        cfg = self.cfg
        logging.info(f"Starting run {cfg.config_id()} ({cfg.transport}, D_RS = {cfg.d_rs_ms} ms, "
                     f"B_RLC = {cfg.rlc_buffer_mb} MB) with seed {cfg.seed}")
        self.start()
        self.engine.run_until(self.duration_us)
        metrics = self.metrics()
        logging.info(f"Run {metrics.config_id} seed {metrics.seed} finished: goodput {rate_fmt(metrics.goodput_bps)}, "
                     f"mean RAN latency {metrics.ran_latency_mean_us / 1000:.3f} ms")
        if metrics.rlc_dropped_segments or metrics.proxy_dropped_segments:
            logging.warning(f"Run {metrics.config_id} seed {metrics.seed} dropped {metrics.rlc_dropped_segments} segments "
                            f"at the RLC buffer and {metrics.proxy_dropped_segments} at the proxy")
        logging.info("Statistics:\n" + self.stats.full_protocol(withProxy=self.proxy is not None))
        return metrics

    def delivered_bytes(self) -> int:
        if self.udp_sink is not None:
            return self.udp_sink.delivered_bytes
        assert self.receiver is not None
        return self.receiver.delivered_bytes

    def metrics(self) -> RunMetrics:
        cfg = self.cfg
        elapsed: SimTime = self.duration_us
        delivered = self.delivered_bytes()
        latencies = np.asarray(self.latencies, dtype=np.int64)
        mean = p50 = p95 = 0.0
        if latencies.size:
            mean = float(latencies.mean())
            p50, p95 = (float(q) for q in np.percentile(latencies, [50, 95]))
        link = self.link
        stream_digest = sent_digest = None
        if self.receiver is not None and self.payload is not None:
            stream_digest = self.receiver.digest
            sent_digest = self.payload.digest(self.receiver.delivered_bytes)
        return RunMetrics(
            config_id=cfg.config_id(), pair_id=cfg.config_id(PAIR_EXCLUDE), seed=cfg.seed, transport=cfg.transport.value,
            d_s1_ms=cfg.d_s1_ms, d_rs_ms=cfg.d_rs_ms,
            rlc_buffer_mb=cfg.rlc_buffer_mb, d_info_ms=cfg.d_info_ms, t_info_ms=cfg.t_info_ms, policy=cfg.policy,
            duration_s=elapsed / 1e6, delivered_bytes=delivered, goodput_bps=delivered * 8e6 / elapsed if elapsed else 0.0,
            capacity_bps=link.capacity_bits * 1e6 / (link.slots * link.slot_us) if link.slots else 0.0,
            ran_latency_mean_us=mean, ran_latency_p50_us=p50, ran_latency_p95_us=p95, latency_samples=int(latencies.size),
            mean_rlc_occupancy=link.occupancy_sum / link.slots if link.slots else 0.0,
            rlc_dropped_segments=self.stats.rlc_dropped_segments, proxy_dropped_segments=self.stats.proxy_dropped_segments,
            retransmissions=self.stats.sender_retransmissions, rtos=self.stats.rtos,
            fast_retransmits=self.stats.fast_retransmits,
            rtt_min_us=self.proxy.rtt.rtt_min if self.proxy is not None else None,
            e2e_violations=self.e2e_violations,
            window_violations=self.sender.window_violations if self.sender is not None else 0,
            stream_digest=stream_digest, sent_digest=sent_digest)


def run_one(cfg: RunConfig) -> RunMetrics:
    """Runs `cfg` to completion. The result depends on nothing but `cfg`."""
    with ExitStack() as stack:
        traces = None
        if cfg.trace_dir is not None:
            traces = stack.enter_context(RunTraces(cfg.trace_dir / f"{cfg.config_id()}-seed{cfg.seed}"))
            logging.debug(f"Writing traces to {traces.link.path.parent}")
        try:
            topology = Topology(cfg, traces)
        except ConfigurationError as e:
            logging.critical(f"Invalid scenario: {e}")
            raise
        return topology.run()


def describe(metrics: RunMetrics) -> str:
    return RunStatistics.rows([("Goodput", rate_fmt(metrics.goodput_bps)),
                               ("Capacity", rate_fmt(metrics.capacity_bps)),
                               ("Delivered", sizeof_fmt(metrics.delivered_bytes)),
                               ("RAN latency mean", f"{metrics.ran_latency_mean_us / 1000:.3f} ms"),
                               ("RAN latency p95", f"{metrics.ran_latency_p95_us / 1000:.3f} ms"),
                               ("Mean RLC occupancy", sizeof_fmt(metrics.mean_rlc_occupancy)),
                               (None if metrics.rtt_min_us is None else ("Proxy RTT_min", f"{metrics.rtt_min_us / 1000:.3f} ms"))])
