"""Geometric LOS/NLOS channel.

A gNB at a fixed position, a UE moving on a straight line at constant speed and a set of
axis-aligned rectangular obstacles. The link is NLOS whenever the sightline gNB -> UE crosses an
obstacle, LOS otherwise; scripted outage intervals override both. Each label maps to a PHY rate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import NamedTuple, Optional

import numpy as np

from .basics import CHANNEL_LABEL, ConfigurationError, US_PER_S
from .sim_engine import SimTime


class Point(NamedTuple):
    x: float
    y: float


class Rectangle(NamedTuple):
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def contains(self, p: Point) -> bool:
        return self.x_min <= p.x <= self.x_max and self.y_min <= p.y <= self.y_max

    def contains_rectangle(self, other: Rectangle) -> bool:
        return (self.x_min <= other.x_min and other.x_max <= self.x_max
                and self.y_min <= other.y_min and other.y_max <= self.y_max)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min


class ChannelState(NamedTuple):
    label: CHANNEL_LABEL
    phy_rate: int           # bit/s
    outage: bool


@dataclass(frozen=True)
class RateConfig:
    los_rate_bps: int = 3_200_000_000
    nlos_rate_bps: int = 200_000_000

    def __post_init__(self) -> None:
        if not self.los_rate_bps > self.nlos_rate_bps > 0:
            raise ConfigurationError(f"Rates must satisfy LOS > NLOS > 0, got LOS={self.los_rate_bps}, NLOS={self.nlos_rate_bps}")

    def rate_for(self, label: CHANNEL_LABEL) -> int:
        match label:
            case CHANNEL_LABEL.LOS:
                return self.los_rate_bps
            case CHANNEL_LABEL.NLOS:
                return self.nlos_rate_bps
            case _:
                return 0


def segment_clip(p0: Point, p1: Point, rect: Rectangle) -> Optional[tuple[float, float]]:
    """
    Liang-Barsky clipping of the segment `p0 -> p1` against the closed rectangle `rect`.
    Returns the parameter interval `(t0, t1)`, `0 <= t0 <= t1 <= 1`, of the part of the segment
    inside the rectangle, or `None` if they do not intersect.
    """
    dx = p1.x - p0.x
    dy = p1.y - p0.y
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, p0.x - rect.x_min), (dx, rect.x_max - p0.x),
                 (-dy, p0.y - rect.y_min), (dy, rect.y_max - p0.y)):
        if p == 0:
            # parallel to this edge: outside if on the wrong side of it
            if q < 0:
                return None
            continue
        r = q / p
        if p < 0:
            if r > t1:
                return None
            t0 = max(t0, r)
        else:
            if r < t0:
                return None
            t1 = min(t1, r)
    return t0, t1


def segment_intersects(p0: Point, p1: Point, rect: Rectangle) -> bool:
    return segment_clip(p0, p1, rect) is not None


@dataclass(frozen=True)
class Scenario:
    gnb_position: Point = Point(25.0, 100.0)
    ue_start: Point = Point(0.0, 0.0)
    ue_end: Point = Point(50.0, 0.0)
    ue_speed: float = 5.0                   # m/s
    obstacles: tuple[Rectangle, ...] = ()
    # scripted [start, end) outage intervals in microseconds
    outage_intervals: tuple[tuple[SimTime, SimTime], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.ue_speed <= 0:
            raise ConfigurationError(f"The UE speed must be positive, got {self.ue_speed} m/s")
        if self.ue_start == self.ue_end:
            raise ConfigurationError("The start and the end of the UE path must differ")
        for rect in self.obstacles:
            if rect.contains(self.gnb_position):
                raise ConfigurationError(f"Obstacle {rect} contains the gNB")
            if segment_intersects(self.ue_start, self.ue_end, rect):
                raise ConfigurationError(f"Obstacle {rect} overlaps the UE path")

    @property
    def path_length(self) -> float:
        return math.dist(self.ue_start, self.ue_end)

    @property
    def traverse_time_us(self) -> SimTime:
        return int(math.ceil(self.path_length / self.ue_speed * US_PER_S))

    def in_outage(self, t: SimTime) -> bool:
        return any(start <= t < end for start, end in self.outage_intervals)


def generate_obstacles(count: int,
                       width_bounds: tuple[float, float],
                       height_bounds: tuple[float, float],
                       region: Rectangle,
                       rng: np.random.Generator) -> list[Rectangle]:
    """
    Samples `count` rectangles with uniformly distributed sizes, placed uniformly so that each one
    lies fully inside `region`. Only `rng` is consumed, so the result is a function of its seed.
    """
    if count < 0:
        raise ConfigurationError(f"The number of obstacles must not be negative, got {count}")
    (w_min, w_max), (h_min, h_max) = width_bounds, height_bounds
    if not (0 < w_min <= w_max and 0 < h_min <= h_max):
        raise ConfigurationError(f"Invalid obstacle size bounds: width {width_bounds}, height {height_bounds}")
    if w_max > region.width or h_max > region.height:
        raise ConfigurationError(f"The obstacle region {region} is too small for obstacles of up to {w_max} x {h_max} m")
    obstacles = []
    for _ in range(count):
        width = float(rng.uniform(w_min, w_max))
        height = float(rng.uniform(h_min, h_max))
        x = float(rng.uniform(region.x_min, region.x_max - width))
        y = float(rng.uniform(region.y_min, region.y_max - height))
        obstacles.append(Rectangle(x, y, x + width, y + height))
    return obstacles


def ue_position(t: SimTime, sc: Scenario) -> Point:
    """Linear interpolation from `ue_start` to `ue_end` at the UE speed, clamped at `ue_end`."""
    travelled = sc.ue_speed * t / US_PER_S
    frac = min(travelled / sc.path_length, 1.0)
    return Point(sc.ue_start.x + frac * (sc.ue_end.x - sc.ue_start.x),
                 sc.ue_start.y + frac * (sc.ue_end.y - sc.ue_start.y))


def channel_state_at(t: SimTime, sc: Scenario, rates: RateConfig) -> ChannelState:
    if sc.in_outage(t):
        return ChannelState(CHANNEL_LABEL.OUTAGE, 0, True)
    ue = ue_position(t, sc)
    blocked = any(segment_intersects(sc.gnb_position, ue, rect) for rect in sc.obstacles)
    label = CHANNEL_LABEL.NLOS if blocked else CHANNEL_LABEL.LOS
    return ChannelState(label, rates.rate_for(label), False)
