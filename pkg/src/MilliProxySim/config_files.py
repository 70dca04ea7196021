from __future__ import annotations

import hashlib
from json import JSONDecodeError
from pathlib import Path
from typing import Any, Optional, Union
import logging

from pydantic import BaseModel, Field, ValidationError, Extra, validator, root_validator
from pydantic.error_wrappers import _display_error_loc
from pydantic.fields import SHAPE_SINGLETON, ModelField

from . import strip_comments_json
from .basics import (LOG_LEVEL, RATE_ESTIMATOR, TRANSPORT, ConfigurationError,
                     mb_to_bytes, ms_to_us, s_to_us)
from .crosslayer_bus import BusConfig
from .fw_policy import PolicyConfig, registered_kinds
from .milliproxy import ProxyConfig
from .scenario_channel import Point, RateConfig, Rectangle, Scenario
from .tcp_stack import SenderConfig


def _validationErrorToStr(e: ValidationError, what: str) -> str:
    """
    A slightly decluttered version of ValidationError.__str__
    """
    errors = e.errors()
    return (f"{len(errors)} error{'' if len(errors)==1 else 's'} in the {what}:\n" +
            "\n".join(f"{_display_error_loc(e)}\n  {e['msg']}" for e in errors))


def _loadJsonObject(jsonStr: str) -> Any:
    try:
        return strip_comments_json.loads(jsonStr)
    except JSONDecodeError as e:
        logging.critical(f"The configuration file is not a valid JSON file:\n{e}")
        raise ConfigurationError(e)


def _readFile(path: Union[str, Path]) -> str:
    try:
        with Path(path).open(encoding="utf-8") as configFile:
            return configFile.read()
    except FileNotFoundError as e:
        logging.critical(f"Configuration file '{path}' does not exist.")
        raise ConfigurationError(e)


class RunConfig(BaseModel, extra=Extra.forbid):
    """One simulation run. Every key has a default, so an empty JSON object is a valid configuration.
    Megabytes are binary (2**20 bytes)."""
    seed: int = 1
    transport: TRANSPORT = TRANSPORT.MILLIPROXY
    # None: the time the UE needs for its path, plus drain_s
    duration_s: Optional[float] = None
    drain_s: float = 1.0

    # scenario
    gnb_position: tuple[float, float] = (25.0, 100.0)
    ue_start: tuple[float, float] = (0.0, 0.0)
    ue_end: tuple[float, float] = (50.0, 0.0)
    ue_speed_mps: float = 5.0
    obstacle_count: int = 3
    obstacle_width_m: tuple[float, float] = (2.0, 8.0)
    obstacle_height_m: tuple[float, float] = (5.0, 20.0)
    # x_min, y_min, x_max, y_max of the area obstacles are placed in
    obstacle_region: tuple[float, float, float, float] = (5.0, 20.0, 45.0, 80.0)
    outage_intervals_ms: list[tuple[float, float]] = Field(default_factory=list)

    # RAN
    max_phy_rate_bps: int = 3_200_000_000
    nlos_rate_bps: int = 200_000_000
    slot_us: int = 125
    link_delay_us: int = 0
    uplink_delay_us: int = 125
    rlc_buffer_mb: float = 10

    # fixed network, one-way
    d_s1_ms: float = 1
    d_rs_ms: float = 1

    # TCP
    mss1: int = 1400
    mss2: int = 20000
    initial_cwnd_segments: int = 10
    initial_rto_ms: float = 1000
    min_rto_ms: float = 200
    max_rto_ms: float = 60_000
    receiver_window_mb: float = 64
    # None: bulk transfer for the whole run
    flow_bytes: Optional[int] = None

    # proxy
    proxy_buffer_mb: float = 10
    aggregation_timeout_us: int = 1000
    policy: str = 'bdp'
    init_window_mb: float = 400
    buffer_threshold_mb: float = 2
    fixed_window_bytes: int = 0
    policy_hysteresis_mb: Optional[float] = None

    # cross-layer information
    d_info_ms: float = 0
    t_info_ms: float = 10
    rate_estimator: RATE_ESTIMATOR = RATE_ESTIMATOR.FULL_BUFFER

    # UDP baseline; None sends at the LOS rate
    udp_rate_bps: Optional[int] = None
    udp_datagram_bytes: int = 1400

    verify_payload: bool = False
    trace_dir: Optional[Path] = None
    log_level: LOG_LEVEL = LOG_LEVEL.INFO

    # recorded with the results, no influence on the simulation
    carrier_frequency_ghz: float = 28
    bandwidth_ghz: float = 1
    rlc_reordering_timer_ms: float = 1
    rlc_status_timer_ms: float = 2

    @validator('drain_s', 'link_delay_us', 'uplink_delay_us', 'd_s1_ms', 'd_rs_ms', 'd_info_ms', 'fixed_window_bytes',
               'init_window_mb', 'buffer_threshold_mb', 'obstacle_count')
    def not_negative(cls, value: float) -> float:
        if value < 0:
            raise ValueError("must not be negative")
        return value

    @validator('ue_speed_mps', 'slot_us', 't_info_ms', 'max_phy_rate_bps', 'nlos_rate_bps', 'rlc_buffer_mb',
               'proxy_buffer_mb', 'mss1', 'mss2', 'aggregation_timeout_us', 'udp_datagram_bytes', 'initial_cwnd_segments',
               'initial_rto_ms', 'min_rto_ms', 'max_rto_ms', 'receiver_window_mb')
    def positive(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("must be positive")
        return value

    @validator('obstacle_width_m', 'obstacle_height_m')
    def valid_bounds(cls, value: tuple[float, float]) -> tuple[float, float]:
        if not 0 < value[0] <= value[1]:
            raise ValueError("bounds must be positive with min <= max")
        return value

    @validator('obstacle_region')
    def valid_region(cls, value: tuple[float, float, float, float]) -> tuple[float, float, float, float]:
        if not (value[0] < value[2] and value[1] < value[3]):
            raise ValueError("the region must have a positive width and height")
        return value

    @validator('outage_intervals_ms')
    def valid_outages(cls, value: list[tuple[float, float]]) -> list[tuple[float, float]]:
        for start, end in value:
            if not 0 <= start < end:
                raise ValueError(f"invalid outage interval [{start}, {end})")
        return value

    @validator('policy')
    def known_policy(cls, value: str) -> str:
        if value not in registered_kinds():
            raise ValueError(f"unknown flow window policy '{value}', available: {', '.join(registered_kinds())}")
        return value

    @validator('mss2')
    def mss2_not_below_mss1(cls, value: int, values: dict[str, object]) -> int:
        mss1 = values.get('mss1')
        if isinstance(mss1, int) and value < mss1:
            raise ValueError("must not be smaller than mss1")
        return value

    @root_validator(skip_on_failure=True)
    def consistent(cls, values: dict[str, Any]) -> dict[str, Any]:
        if values['ue_start'] == values['ue_end']:
            raise ValueError("ue_start and ue_end must differ")
        if not values['min_rto_ms'] <= values['max_rto_ms']:
            raise ValueError("min_rto_ms must not exceed max_rto_ms")
        if values['max_phy_rate_bps'] <= values['nlos_rate_bps']:
            raise ValueError("max_phy_rate_bps must exceed nlos_rate_bps")
        x_min, y_min, x_max, y_max = values['obstacle_region']
        if values['obstacle_width_m'][1] > x_max - x_min or values['obstacle_height_m'][1] > y_max - y_min:
            raise ValueError("the obstacle region is too small for the largest obstacle")
        duration = values['duration_s']
        if duration is not None:
            start, end = values['ue_start'], values['ue_end']
            traverse = ((end[0] - start[0]) ** 2 + (end[1] - start[1]) ** 2) ** 0.5 / values['ue_speed_mps']
            if duration < traverse:
                raise ValueError(f"duration_s = {duration} does not cover the UE path ({traverse:.3f} s)")
        return values

    # derived parts

    @property
    def obstacle_rectangle(self) -> Rectangle:
        return Rectangle(*self.obstacle_region)

    def scenario(self, obstacles: tuple[Rectangle, ...] = ()) -> Scenario:
        return Scenario(gnb_position=Point(*self.gnb_position), ue_start=Point(*self.ue_start), ue_end=Point(*self.ue_end),
                        ue_speed=self.ue_speed_mps, obstacles=obstacles,
                        outage_intervals=tuple((ms_to_us(a), ms_to_us(b)) for a, b in self.outage_intervals_ms))

    def rate_config(self) -> RateConfig:
        return RateConfig(los_rate_bps=self.max_phy_rate_bps, nlos_rate_bps=self.nlos_rate_bps)

    def duration_us(self) -> int:
        if self.duration_s is not None:
            return s_to_us(self.duration_s)
        return self.scenario().traverse_time_us + s_to_us(self.drain_s)

    def policy_config(self) -> PolicyConfig:
        return PolicyConfig(kind=self.policy, init_window=mb_to_bytes(self.init_window_mb),
                            buffer_threshold=mb_to_bytes(self.buffer_threshold_mb), fixed_value=self.fixed_window_bytes,
                            hysteresis_low=None if self.policy_hysteresis_mb is None else mb_to_bytes(self.policy_hysteresis_mb))

    def bus_config(self) -> BusConfig:
        return BusConfig(d_info_us=ms_to_us(self.d_info_ms), t_info_us=ms_to_us(self.t_info_ms), estimator=self.rate_estimator)

    def proxy_config(self) -> ProxyConfig:
        return ProxyConfig(mss1=self.mss1, mss2=self.mss2, buffer_capacity=mb_to_bytes(self.proxy_buffer_mb),
                           aggregation_timeout_us=self.aggregation_timeout_us, policy=self.policy_config())

    def sender_config(self) -> SenderConfig:
        return SenderConfig(mss1=self.mss1, initial_cwnd_segments=self.initial_cwnd_segments,
                            initial_rto_us=ms_to_us(self.initial_rto_ms), min_rto_us=ms_to_us(self.min_rto_ms),
                            max_rto_us=ms_to_us(self.max_rto_ms), initial_awnd=mb_to_bytes(self.receiver_window_mb),
                            total_bytes=self.flow_bytes)

    def config_id(self, exclude: tuple[str, ...] = ('seed',)) -> str:
        """A short, stable identifier of everything that is not in `exclude`."""
        payload = self.json(exclude=set(exclude) | {'trace_dir', 'log_level'}, sort_keys=True)
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()[:12]

    @classmethod
    def loadUserConfigFile(cls, userConfigPath: Union[str, Path], overrides: Optional[dict[str, Any]] = None) -> RunConfig:
        return cls.loadJson(_readFile(userConfigPath), overrides)

    @classmethod
    def loadJson(cls, jsonStr: str, overrides: Optional[dict[str, Any]] = None) -> RunConfig:
        jsonObject = _loadJsonObject(jsonStr)
        if not isinstance(jsonObject, dict):
            logging.critical("The configuration file must contain a JSON object.")
            raise ConfigurationError("not a JSON object")
        return cls.fromDict({**jsonObject, **(overrides or {})})

    @classmethod
    def fromDict(cls, values: dict[str, Any]) -> RunConfig:
        try:
            return cls.parse_obj(values)
        except ValidationError as e:
            logging.critical(_validationErrorToStr(e, "configuration file"))
            raise ConfigurationError(e)

    @classmethod
    def export_default(cls) -> str:
        return cls().json(indent=4)


class SweepConfig(BaseModel, extra=Extra.forbid):
    # partial RunConfig, merged over the defaults
    base: dict[str, Any] = Field(default_factory=dict)
    # RunConfig key -> values; the sweep runs the cartesian product
    grid: dict[str, list[Any]] = Field(default_factory=dict)
    seeds: int = 50
    first_seed: int = 1
    workers: int = 1
    output_dir: Path = Path("results")

    @validator('seeds', 'workers')
    def positive(cls, value: int) -> int:
        if value <= 0:
            raise ValueError("must be positive")
        return value

    @validator('grid')
    def known_keys(cls, value: dict[str, list[Any]]) -> dict[str, list[Any]]:
        for key, values in value.items():
            if key not in RunConfig.__fields__ or key == 'seed':
                raise ValueError(f"'{key}' is not a configuration key that can be swept")
            if len(values) == 0:
                raise ValueError(f"the grid for '{key}' is empty")
        return value

    @classmethod
    def loadUserConfigFile(cls, userConfigPath: Union[str, Path]) -> SweepConfig:
        return cls.loadJson(_readFile(userConfigPath))

    @classmethod
    def loadJson(cls, jsonStr: str) -> SweepConfig:
        return cls.fromDict(_loadJsonObject(jsonStr))

    @classmethod
    def fromDict(cls, values: Any) -> SweepConfig:
        try:
            sweep = cls.parse_obj(values)
        except ValidationError as e:
            logging.critical(_validationErrorToStr(e, "sweep file"))
            raise ConfigurationError(e)
        # fail before any simulation if the base does not validate
        RunConfig.fromDict(sweep.base)
        return sweep

    @classmethod
    def export_default(cls) -> str:
        defaultFile = cls(grid={'d_rs_ms': [1, 5, 10, 20], 'rlc_buffer_mb': [10, 20],
                                'transport': [TRANSPORT.NEWRENO.value, TRANSPORT.MILLIPROXY.value]})
        return defaultFile.json(indent=4)


def scalar_fields() -> dict[str, ModelField]:
    """The RunConfig keys that take a single value and can be set from the command line."""
    return {name: field for name, field in RunConfig.__fields__.items() if field.shape == SHAPE_SINGLETON}
