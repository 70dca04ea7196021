from enum import Enum
from pathlib import Path
from typing import Optional
import logging

from pydantic import ValidationError

from MilliProxySim import strip_comments_json
from MilliProxySim.basics import MB, TRANSPORT, ConfigurationError
from MilliProxySim.config_files import RunConfig, SweepConfig, scalar_fields

import pytest


class Err(Enum):
    extraEntry = 1
    wrongType = 2
    invalidEnum = 3
    negativeDelay = 4
    unknownPolicy = 5
    smallMss2 = 6
    shortDuration = 7


def generateConfig(err: Optional[Err] = None) -> str:
    return f"""
{{
    // a proxy in the edge cloud
    "transport": {'"tcp-cubic"' if err == Err.invalidEnum else '"newreno+milliproxy"'},
    "seed": 7,
    "d_s1_ms": 5,
    "d_rs_ms": {'-1' if err == Err.negativeDelay else '10'},
    {'"spurious_entry": 1,' if err == Err.extraEntry else ''}
    "rlc_buffer_mb": {'"large"' if err == Err.wrongType else '20'},
    "policy": {'"bbr"' if err == Err.unknownPolicy else '"conservative_bdp"'},
    "mss2": {'1000' if err == Err.smallMss2 else '20000'},
    /* the UE needs ten seconds for its path */
    "duration_s": {'5' if err == Err.shortDuration else '12'},
    "outage_intervals_ms": [[1000, 1500]]
}}
"""


def test_correctConfig():
    configJSON = strip_comments_json.loads(generateConfig())
    cfg = RunConfig.parse_obj(configJSON)
    assert cfg.transport == TRANSPORT.MILLIPROXY
    assert cfg.policy_config().kind == 'conservative_bdp'
    assert cfg.duration_us() == 12_000_000
    assert cfg.scenario().outage_intervals == ((1_000_000, 1_500_000),)


@pytest.mark.parametrize('err', tuple(Err))
def test_invalidConfig(err: Err):
    configJSON = strip_comments_json.loads(generateConfig(err))
    with pytest.raises(ValidationError):
        RunConfig.parse_obj(configJSON)


@pytest.fixture
def capture_critical_logs(monkeypatch):
    log_entries: list[str] = []

    def fake_log_critical(msg: str):
        log_entries.append(msg)

    monkeypatch.setattr(logging, 'critical', fake_log_critical)
    return log_entries


def test_invalidConfigIsLogged(capture_critical_logs):
    with pytest.raises(ConfigurationError):
        RunConfig.loadJson(generateConfig(Err.negativeDelay))
    assert len(capture_critical_logs) == 1
    assert capture_critical_logs[0].startswith("1 error in the configuration file:\nd_rs_ms\n")


def test_invalidJson(capture_critical_logs):
    with pytest.raises(ConfigurationError):
        RunConfig.loadJson('{"seed": 1,}')
    assert capture_critical_logs[0].startswith("The configuration file is not a valid JSON file")
    with pytest.raises(ConfigurationError):
        RunConfig.loadJson('[1, 2]')


def test_missingFile(tmp_path: Path, capture_critical_logs):
    with pytest.raises(ConfigurationError):
        RunConfig.loadUserConfigFile(tmp_path / "missing.json")
    assert "does not exist" in capture_critical_logs[0]


def test_testConfigFile():
    cfg = RunConfig.loadUserConfigFile(Path(__file__).parent / "test-config.json")
    assert cfg.transport == TRANSPORT.NEWRENO
    assert cfg.rlc_buffer_mb == 20
    assert cfg.verify_payload


def test_defaults():
    cfg = RunConfig()
    assert cfg.duration_us() == 11_000_000
    assert cfg.proxy_config().buffer_capacity == 10 * MB
    assert cfg.proxy_config().policy.init_window == 400 * MB
    assert cfg.sender_config().initial_awnd == 64 * MB
    assert cfg.bus_config().t_info_us == 10_000
    assert cfg.rate_config().los_rate_bps == 3_200_000_000
    # the exported defaults load again
    assert RunConfig.loadJson(RunConfig.export_default()) == cfg


def test_overrides():
    cfg = RunConfig.loadJson(generateConfig(), {'seed': '3', 'd_info_ms': '2.5'})
    assert cfg.seed == 3
    assert cfg.d_info_ms == 2.5
    assert cfg.bus_config().d_info_us == 2500


def test_configId():
    a = RunConfig(seed=1)
    assert a.config_id() == RunConfig(seed=2).config_id()
    assert a.config_id() == RunConfig(seed=1, log_level='DEBUG', trace_dir='traces').config_id()
    assert a.config_id() != RunConfig(seed=1, d_rs_ms=5).config_id()
    assert len(a.config_id()) == 12
    pairKey = ('seed', 'transport')
    assert a.config_id(pairKey) == RunConfig(seed=3, transport='newreno').config_id(pairKey)


def test_scalarFields():
    fields = scalar_fields()
    assert 'd_rs_ms' in fields
    assert 'transport' in fields
    assert 'gnb_position' not in fields
    assert 'outage_intervals_ms' not in fields


def test_sweepConfig():
    sweep = SweepConfig.loadJson("""
    {
        "base": {"duration_s": 12},  // shared by all cells
        "grid": {"d_rs_ms": [1, 5], "transport": ["newreno", "newreno+milliproxy"]},
        "seeds": 3
    }
    """)
    assert sweep.seeds == 3
    assert sweep.workers == 1
    assert SweepConfig.loadJson(SweepConfig.export_default()).grid['d_rs_ms'] == [1, 5, 10, 20]


@pytest.mark.parametrize('sweepJson', [
    '{"grid": {"seed": [1, 2]}}',
    '{"grid": {"no_such_key": [1, 2]}}',
    '{"grid": {"d_rs_ms": []}}',
    '{"seeds": 0}',
    '{"base": {"d_rs_ms": -5}}',
    '{"unknown": true}',
])
def test_invalidSweepConfig(sweepJson: str):
    with pytest.raises(ConfigurationError):
        SweepConfig.loadJson(sweepJson)
