import pytest

from MilliProxySim.basics import MB, RATE_ESTIMATOR, ConfigurationError
from MilliProxySim.crosslayer_bus import BusConfig, CrossLayerBus, CrossLayerSample
from MilliProxySim.ran_link import RanLink
from MilliProxySim.scenario_channel import RateConfig, Rectangle, Scenario
from MilliProxySim.sim_engine import Engine
from MilliProxySim.statistics_module import RunStatistics
from MilliProxySim.tcp_stack import Segment


WALL = Scenario(obstacles=(Rectangle(-5, 40, 60, 50),))


def _bus(scenario: Scenario = Scenario(), **kwargs) -> CrossLayerBus:
    engine = Engine()
    link = RanLink(engine, RunStatistics(), scenario, RateConfig(), 10 * MB)
    return CrossLayerBus(engine, link, BusConfig(**kwargs))


def test_full_buffer_rate():
    assert _bus().estimate_rate(0) == 3_200_000_000
    assert _bus(WALL).estimate_rate(0) == 200_000_000
    assert _bus(Scenario(outage_intervals=((0, 1000),))).estimate_rate(0) == 0


def test_rate_does_not_depend_on_the_load():
    idle = _bus()
    saturated = _bus()
    saturated.link.enqueue_batch([Segment(seq=i * 20_000, length=20_000) for i in range(500)])
    assert saturated.link.buffer.occupancy == 10_000_000
    assert idle.estimate_rate(0) == saturated.estimate_rate(0)


def test_measured_rate():
    bus = _bus(estimator=RATE_ESTIMATOR.MEASURED)
    link = bus.link
    link.start()
    link.enqueue_batch([Segment(seq=i * 20_000, length=20_000) for i in range(100)])
    bus.engine.run_until(1_000)
    # eight LOS slots, 50000 bytes each
    assert link.bytes_served == 400_000
    assert bus.estimate_rate(1_000) == 400_000 * 8_000_000 // 1_000
    # nothing more was served since
    assert bus.estimate_rate(1_000) == 0


def test_sample_contents():
    bus = _bus()
    bus.link.enqueue(Segment(length=1400), 0)
    sample = bus.sample_and_deliver(0)
    assert sample == CrossLayerSample(taken_at=0, delivered_at=0, occupancy=1400, rate=3_200_000_000, outage=False)


def test_delivery_delay():
    delivered: list[CrossLayerSample] = []
    bus = _bus(d_info_us=3_000, t_info_us=10_000)
    bus.on_delivery = delivered.append
    bus.start()
    bus.engine.run_until(2_999)
    assert bus.latest_info(2_999) is None
    bus.engine.run_until(102_999)
    assert bus.latest is not None and bus.latest.taken_at == 90_000
    bus.engine.run_until(103_000)
    assert bus.latest.taken_at == 100_000
    assert bus.latest.delivered_at == 103_000
    assert [s.taken_at for s in delivered] == list(range(0, 100_001, 10_000))


def test_info_age_bound():
    bus = _bus(d_info_us=3_000, t_info_us=10_000)
    bus.start()
    for now in range(3_000, 500_000, 777):
        bus.engine.run_until(now)
        info = bus.latest_info(now)
        assert info is not None
        assert 3_000 <= info.info_age <= 13_000


def test_zero_delay_is_immediate():
    bus = _bus(d_info_us=0)
    bus.start()
    bus.engine.run_until(0)
    info = bus.latest_info(0)
    assert info is not None
    assert info.info_age == 0
    assert info.rate == 3_200_000_000


@pytest.mark.parametrize('kwargs', [dict(t_info_us=0), dict(d_info_us=-1)])
def test_invalid_bus_config(kwargs):
    with pytest.raises(ConfigurationError):
        BusConfig(**kwargs)
