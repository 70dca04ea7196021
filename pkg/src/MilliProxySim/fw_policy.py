"""Flow window policies.

A policy turns the cross-layer view of the link (minimum RTT, achievable rate, RLC occupancy) into the
number of bytes a proxy instance may have in flight towards the UE. Policies are not hard-coded into
the proxy: each one registers itself under a name, and the configuration selects it by that name.

Units: rtt_min in microseconds, R_e in bit/s, windows and occupancy in bytes, so that
    w = floor(rtt_min * R_e / (8 * 10**6)).
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
import math
from typing import Any, Callable, ClassVar, Optional, Union

from .basics import MB, ConfigurationError


Rate = Union[int, float, Fraction]


@dataclass(frozen=True)
class FlowWindowInput:
    rtt_min: Optional[int] = None       # us, None while no RTT sample exists
    rate: Optional[Rate] = None         # R_e in bit/s, None while no cross-layer sample was delivered
    buffer_occupancy: int = 0           # B in bytes
    info_age: int = 0                   # us since the cross-layer sample was taken
    outage: bool = False

    def __post_init__(self) -> None:
        if self.rate is not None and self.rate < 0:
            raise ValueError(f"R_e must not be negative, got {self.rate}")
        if self.buffer_occupancy < 0:
            raise ValueError(f"B must not be negative, got {self.buffer_occupancy}")

    @property
    def available(self) -> bool:
        return self.rtt_min is not None and self.rate is not None


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = 'bdp'
    init_window: int = 400 * MB
    buffer_threshold: int = 2 * MB
    fixed_value: int = 0
    # lower mark for the conservative policy; None disables hysteresis
    hysteresis_low: Optional[int] = None

    def __post_init__(self) -> None:
        for name in ('init_window', 'buffer_threshold', 'fixed_value'):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"Policy parameter '{name}' must not be negative")
        if self.hysteresis_low is not None and not 0 <= self.hysteresis_low <= self.buffer_threshold:
            raise ConfigurationError("The hysteresis mark must lie between 0 and the buffer threshold")


def bdp_bytes(rtt_min_us: int, rate: Rate) -> int:
    if isinstance(rate, int):
        return rtt_min_us * rate // 8_000_000
    return math.floor(Fraction(rtt_min_us) * Fraction(rate) / 8_000_000)


PolicyFactory = Callable[[PolicyConfig], 'FlowWindowPolicy']
_registry: dict[str, PolicyFactory] = {}


def register_policy(kind: str, factory: PolicyFactory) -> None:
    if kind in _registry:
        raise ConfigurationError(f"A flow window policy named '{kind}' is already registered")
    _registry[kind] = factory


def registered_kinds() -> list[str]:
    return sorted(_registry)


def create_policy(config: PolicyConfig) -> FlowWindowPolicy:
    try:
        factory = _registry[config.kind]
    except KeyError:
        raise ConfigurationError(f"Unknown flow window policy '{config.kind}', "
                                 f"available: {', '.join(registered_kinds())}") from None
    return factory(config)


class FlowWindowPolicy(ABC):
    """Base class of all policies. Subclasses passing `kind=...` in the class statement are
    registered under that name."""
    kind: ClassVar[str] = ''

    def __init_subclass__(cls, kind: Optional[str] = None, **kwargs: Any) -> None:
        super().__init_subclass__(**kwargs)
        if kind is not None:
            cls.kind = kind
            register_policy(kind, cls)

    def __init__(self, config: PolicyConfig) -> None:
        self.config = config

    @abstractmethod
    def compute_window(self, info: FlowWindowInput) -> int: ...


class BdpPolicy(FlowWindowPolicy, kind='bdp'):
    def compute_window(self, info: FlowWindowInput) -> int:
        if info.rtt_min is None or info.rate is None:
            return self.config.init_window
        return bdp_bytes(info.rtt_min, info.rate)


class ConservativeBdpPolicy(FlowWindowPolicy, kind='conservative_bdp'):
    """BDP, reduced by twice the RLC occupancy while the occupancy exceeds the threshold."""

    def __init__(self, config: PolicyConfig) -> None:
        super().__init__(config)
        self.triggered = False

    def _conservative(self, occupancy: int) -> bool:
        cfg = self.config
        if cfg.hysteresis_low is None:
            return occupancy > cfg.buffer_threshold
        if occupancy > cfg.buffer_threshold:
            self.triggered = True
        elif occupancy < cfg.hysteresis_low:
            self.triggered = False
        return self.triggered

    def compute_window(self, info: FlowWindowInput) -> int:
        if info.rtt_min is None or info.rate is None:
            return self.config.init_window
        window = bdp_bytes(info.rtt_min, info.rate)
        if self._conservative(info.buffer_occupancy):
            return max(window - 2 * info.buffer_occupancy, 0)
        return window


class FixedPolicy(FlowWindowPolicy, kind='fixed'):
    def compute_window(self, info: FlowWindowInput) -> int:
        return self.config.fixed_value


def compute_window(cfg: PolicyConfig, info: FlowWindowInput) -> int:
    """One-shot evaluation of the policy selected by `cfg` on `info`."""
    return create_policy(cfg).compute_window(info)
