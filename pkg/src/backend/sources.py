"""
Reading streams for the detector.

A live source polls a text file holding one decimal illuminance value (the
usual sysfs layout, e.g. .../iio:device0/in_illuminance_input) at poll_hz.
The poller defines the stream rate f; repeated sensor values are legitimate
readings. A replay source plays a recorded trace, optionally paced at a
multiple of real time.

next_reading() returns a Reading, a StreamGap marker (live only, when polls
fell more than 2/f apart, e.g. after a system suspend) or None at the end of
the stream.
"""

import logging
import math
import os
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterator, NamedTuple, Optional, Union

from ..config.constants import DEFAULT_POLL_HZ, GAP_FACTOR, READ_RETRY_TICKS
from .corpus import Trace, read_trace
from .detector import Reading
from .errors import InvalidSourceConfig, IoFailure, ParseError, ReadFailure, SourceUnavailable

logger = logging.getLogger(__name__)


class SourceKind(str, Enum):
    LIVE = "live"
    REPLAY = "replay"


@dataclass(frozen=True)
class SourceConfig:
    kind: SourceKind
    path: str
    poll_hz: float = DEFAULT_POLL_HZ
    speed: float = 0.0
    scale: float = 1.0


class StreamGap(NamedTuple):
    """Polls stopped for gap_s seconds before `at`; the window is stale."""
    at: float
    gap_s: float


StreamItem = Union[Reading, StreamGap]


def validate_source_config(config: SourceConfig) -> SourceConfig:
    try:
        kind = SourceKind(config.kind)
    except ValueError:
        raise InvalidSourceConfig(f"source kind must be 'live' or 'replay', got {config.kind!r}") from None
    if not config.path:
        raise InvalidSourceConfig("source path must not be empty")
    if kind is SourceKind.LIVE and not (config.poll_hz > 0 and math.isfinite(config.poll_hz)):
        raise InvalidSourceConfig(f"poll_hz must be > 0 for a live source, got {config.poll_hz}")
    if not (config.speed >= 0 and math.isfinite(config.speed)):
        raise InvalidSourceConfig(f"replay speed must be >= 0, got {config.speed}")
    if not (config.scale > 0 and math.isfinite(config.scale)):
        raise InvalidSourceConfig(f"scale must be > 0, got {config.scale}")
    return config


class LiveSource:
    """Poll a numeric device file once per tick."""

    # polling cannot wait for a slow consumer
    is_live = True

    def __init__(self, config: SourceConfig, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.period = 1.0 / config.poll_hz
        self._clock = clock
        self._sleep = sleep
        self._origin = None
        self._next_tick = None
        self._last_t = None
        self._pending = None
        self.is_open = False

    @property
    def frequency(self) -> float:
        if not self.is_open:
            raise SourceUnavailable("live source is not open")
        return float(self.config.poll_hz)

    def open(self) -> "LiveSource":
        path = self.config.path
        if not os.path.isfile(path) or not os.access(path, os.R_OK):
            raise SourceUnavailable(f"illuminance device file not readable: {path}")
        self._origin = self._clock()
        self._next_tick = self._origin
        self.is_open = True
        logger.info("polling %s at %s Hz", path, self.config.poll_hz)
        return self

    def close(self):
        self.is_open = False

    def _read_once(self):
        with open(self.config.path, "r", encoding="ascii", errors="replace") as handle:
            text = handle.read()
        try:
            value = float(text.strip())
        except ValueError:
            raise ParseError(f"device value is not a number: {text.strip()!r}",
                             source=self.config.path) from None
        if not (math.isfinite(value) and value >= 0):
            raise ParseError(f"device value must be a non-negative number, got {value!r}",
                             source=self.config.path)
        return value * self.config.scale

    def _read_with_retry(self):
        failures = 0
        while True:
            try:
                return self._read_once()
            except OSError as exc:
                failures += 1
                if failures > READ_RETRY_TICKS:
                    raise ReadFailure(
                        f"{self.config.path} unreadable for {failures} consecutive ticks: {exc}"
                    ) from exc
                logger.warning("read of %s failed (%s), retrying next tick", self.config.path, exc)
                self._sleep(self.period)

    def next_reading(self) -> Optional[StreamItem]:
        if not self.is_open:
            raise SourceUnavailable("live source is not open")
        if self._pending is not None:
            reading, self._pending = self._pending, None
            return reading

        now = self._clock()
        if now < self._next_tick:
            self._sleep(self._next_tick - now)
            now = self._clock()
        t = now - self._origin
        previous = self._last_t
        if previous is not None and t <= previous:
            t = math.nextafter(previous, math.inf)
        lux = self._read_with_retry()
        self._last_t = t
        self._next_tick += self.period
        if self._next_tick <= now:
            # missed ticks are not made up
            self._next_tick = now + self.period

        if previous is not None and t - previous > GAP_FACTOR * self.period:
            self._pending = Reading(t, lux)
            return StreamGap(at=t, gap_s=t - previous)
        return Reading(t, lux)

    def __iter__(self) -> Iterator[StreamItem]:
        while True:
            item = self.next_reading()
            if item is None:
                return
            yield item


class ReplaySource:
    """Play a recorded trace; speed 0 replays as fast as possible."""

    is_live = False

    def __init__(self, config: SourceConfig, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self._clock = clock
        self._sleep = sleep
        self.trace: Optional[Trace] = None
        self._index = 0
        self._wall_start = None
        self.is_open = False

    @property
    def frequency(self) -> float:
        if not self.is_open:
            raise SourceUnavailable("replay source is not open")
        return float(self.trace.meta.f)

    def open(self) -> "ReplaySource":
        try:
            self.trace = read_trace(self.config.path)
        except IoFailure as exc:
            raise SourceUnavailable(str(exc)) from exc
        self._index = 0
        self._wall_start = None
        self.is_open = True
        return self

    def close(self):
        self.is_open = False

    def next_reading(self) -> Optional[Reading]:
        if not self.is_open:
            raise SourceUnavailable("replay source is not open")
        readings = self.trace.readings
        if self._index >= len(readings):
            return None
        reading = readings[self._index]
        if self.config.speed > 0:
            if self._wall_start is None:
                self._wall_start = self._clock()
            due = self._wall_start + (reading.t - readings[0].t) / self.config.speed
            delay = due - self._clock()
            if delay > 0:
                self._sleep(delay)
        self._index += 1
        return reading

    def __iter__(self) -> Iterator[Reading]:
        while True:
            item = self.next_reading()
            if item is None:
                return
            yield item


Source = Union[LiveSource, ReplaySource]


def open_source(config: SourceConfig, clock: Callable[[], float] = time.monotonic,
                sleep: Callable[[float], None] = time.sleep) -> Source:
    validate_source_config(config)
    if SourceKind(config.kind) is SourceKind.LIVE:
        source = LiveSource(config, clock, sleep)
    else:
        source = ReplaySource(config, clock, sleep)
    return source.open()


def probe_frequency(source: Source) -> float:
    """Stream rate in Hz: the poll rate for live sources, the trace's f for replays."""
    return source.frequency


def next_reading(source: Source) -> Optional[StreamItem]:
    return source.next_reading()
