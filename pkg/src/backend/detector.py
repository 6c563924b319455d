"""
Streaming departure detector for ambient light sensor readings.

Each reading R is compared with the mean of a sliding window:

    |mean(window) - R| > mean(window) * delta / 100

A reading that passes the test is an outlier. The window only takes in
non-outliers, so it stays frozen for as long as a run of outliers lasts.
The first outlier opens a wave; when eta' consecutive outliers are seen
within ell seconds of the wave's first outlier the user is de-authenticated.
A wave older than ell seconds is abandoned: the run counter is cleared and the
window is re-seeded from the most recent omega' raw readings, outliers included.

The first omega' readings of a session only fill the window (warm-up).
After a de-authentication the detector ignores input until rearm() is called.
"""

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, NamedTuple, Optional, Sequence

import numpy as np

from ..config.constants import (
    DEFAULT_CV_MAX,
    DEFAULT_DELTA,
    DEFAULT_ELL_S,
    DEFAULT_ETA_S,
    DEFAULT_FLOOR_LUX,
    DEFAULT_OMEGA_S,
)
from .errors import (
    EtaExceedsEll,
    FrequencyTooLow,
    InvalidReading,
    NonPositiveParam,
    NotDeauthed,
    OutOfOrderReading,
    UnknownPolicy,
)


class Phase(str, Enum):
    WARMING = "warming"
    ARMED = "armed"
    DEAUTHED = "deauthed"


class EventKind(str, Enum):
    NONE = "none"
    OUTLIER = "outlier"
    WAVE_RESET = "wave_reset"
    DEAUTHENTICATE = "deauthenticate"
    ADAPTED = "adapted"
    WARMING = "warming"


class AdaptPolicy(str, Enum):
    NONE = "none"
    STEP_RESEED = "step-reseed"


class StepClass(str, Enum):
    DEPARTURE_LIKE = "departure-like"
    STEP_LIKE = "step-like"


class Reading(NamedTuple):
    """One illuminance sample: seconds since session start and lux."""
    t: float
    lux: float


class DetectorEvent(NamedTuple):
    kind: EventKind
    at: float
    detail: Optional[float] = None


@dataclass(frozen=True)
class DetectorConfig:
    delta: int = DEFAULT_DELTA
    omega_s: float = DEFAULT_OMEGA_S
    eta_s: float = DEFAULT_ETA_S
    ell_s: float = DEFAULT_ELL_S
    adapt_policy: AdaptPolicy = AdaptPolicy.NONE
    cv_max: float = DEFAULT_CV_MAX
    floor_lux: float = DEFAULT_FLOOR_LUX


@dataclass(frozen=True)
class AlignedParams:
    f: float
    omega_n: int
    eta_n: int


@dataclass
class DetectorState:
    window: deque
    recent: deque
    run: deque
    run_len: int = 0
    wave_start: Optional[float] = None
    phase: Phase = Phase.WARMING
    last_t: Optional[float] = None
    # cached mean of `window`, refreshed whenever the window changes
    mean: float = 0.0


def validate_config(cfg: DetectorConfig) -> DetectorConfig:
    """Return cfg unchanged if every detector parameter is usable."""
    if isinstance(cfg.delta, bool) or not float(cfg.delta).is_integer():
        raise NonPositiveParam(f"delta must be a natural number, got {cfg.delta!r}")
    if cfg.delta < 1:
        raise NonPositiveParam(f"delta must be >= 1, got {cfg.delta}")
    for name in ("omega_s", "eta_s", "ell_s"):
        value = getattr(cfg, name)
        if not value > 0:
            raise NonPositiveParam(f"{name} must be > 0, got {value}")
    if not cfg.cv_max > 0:
        raise NonPositiveParam(f"cv_max must be > 0, got {cfg.cv_max}")
    if not cfg.floor_lux >= 0:
        raise NonPositiveParam(f"floor_lux must be >= 0, got {cfg.floor_lux}")
    try:
        AdaptPolicy(cfg.adapt_policy)
    except ValueError:
        raise UnknownPolicy(f"unknown adapt policy {cfg.adapt_policy!r}") from None
    if cfg.eta_s > cfg.ell_s:
        raise EtaExceedsEll(f"eta_s ({cfg.eta_s}) must not exceed ell_s ({cfg.ell_s})")
    return cfg


def _samples(seconds, f):
    # rounding first keeps 2.3 * 10 from truncating to 22
    return int(round(seconds * f, 9))


def align_to_frequency(cfg: DetectorConfig, f: float) -> AlignedParams:
    """Convert the window and run durations to sample counts at f Hz."""
    if not f > 0:
        raise FrequencyTooLow(f"sampling frequency must be > 0 Hz, got {f}")
    omega_n = _samples(cfg.omega_s, f)
    eta_n = _samples(cfg.eta_s, f)
    if omega_n < 1 or eta_n < 1:
        raise FrequencyTooLow(
            f"at {f} Hz omega'={omega_n} and eta'={eta_n}; both need at least one sample"
        )
    return AlignedParams(f=float(f), omega_n=omega_n, eta_n=eta_n)


def is_outlier(mean: float, r: float, delta: float, floor_lux: float = 0.0) -> bool:
    threshold = mean * delta / 100
    if threshold < floor_lux:
        threshold = floor_lux
    return abs(mean - r) > threshold


def classify_step(run: Sequence[float], window_mean: float,
                  cv_max: float = DEFAULT_CV_MAX) -> StepClass:
    """
    Tell a lighting step (lights switched on or off) from a departure.

    A step is flat and one-sided: the run's coefficient of variation is below
    cv_max and every sample lies on the same side of the window mean.
    """
    if len(run) == 0:
        return StepClass.DEPARTURE_LIKE
    values = np.asarray(run, dtype=float)
    if not (np.all(values > window_mean) or np.all(values < window_mean)):
        return StepClass.DEPARTURE_LIKE
    std = float(values.std())
    mean = float(values.mean())
    if std == 0.0:
        cv = 0.0
    elif mean > 0:
        cv = std / mean
    else:
        cv = math.inf
    return StepClass.STEP_LIKE if cv < cv_max else StepClass.DEPARTURE_LIKE


def initial_state(params: AlignedParams) -> DetectorState:
    return DetectorState(
        window=deque(maxlen=params.omega_n),
        recent=deque(maxlen=params.omega_n),
        run=deque(maxlen=params.eta_n),
    )


def _refresh_mean(state):
    state.mean = math.fsum(state.window) / len(state.window)


def reset_wave(state: DetectorState, recent: Sequence[float]) -> DetectorState:
    """Abandon the current wave and rebuild the window from the latest raw readings."""
    capacity = state.window.maxlen
    values = list(recent)[-capacity:]
    state.window.clear()
    state.window.extend(values)
    state.run_len = 0
    state.run.clear()
    state.wave_start = None
    if state.window:
        _refresh_mean(state)
    return state


def _reseed_from_run(state):
    run = list(state.run)
    capacity = state.window.maxlen
    if len(run) < capacity:
        pad = math.fsum(run) / len(run)
        run = [pad] * (capacity - len(run)) + run
    state.window.clear()
    state.window.extend(run[-capacity:])
    state.run_len = 0
    state.run.clear()
    state.wave_start = None
    _refresh_mean(state)


def rearm(state: DetectorState) -> DetectorState:
    """Start a fresh session after the user has authenticated again."""
    if state.phase is not Phase.DEAUTHED:
        raise NotDeauthed(f"rearm requires a de-authenticated detector, phase is {state.phase.value}")
    return rewarm(state)


def rewarm(state: DetectorState) -> DetectorState:
    """Drop the window and warm up again, whatever the current phase."""
    state.window.clear()
    state.recent.clear()
    state.run.clear()
    state.run_len = 0
    state.wave_start = None
    state.mean = 0.0
    state.phase = Phase.WARMING
    return state


def process_reading(state: DetectorState, params: AlignedParams, cfg: DetectorConfig,
                    r: Reading):
    """
    Consume one reading and return (state, event).

    The state is updated in place and returned for convenience.
    """
    t, lux = r
    if not (t >= 0 and math.isfinite(t)):
        raise InvalidReading(f"reading time must be a finite number >= 0, got {t!r}")
    if state.last_t is not None and not t > state.last_t:
        raise OutOfOrderReading(f"reading at t={t} does not follow t={state.last_t}")
    if not lux >= 0:
        raise InvalidReading(f"illuminance must be a non-negative number, got {lux!r} at t={t}")
    state.last_t = t

    if state.phase is Phase.DEAUTHED:
        return state, DetectorEvent(EventKind.NONE, t)

    state.recent.append(lux)

    if state.phase is Phase.WARMING:
        state.window.append(lux)
        if len(state.window) >= params.omega_n:
            state.phase = Phase.ARMED
            _refresh_mean(state)
        return state, DetectorEvent(EventKind.WARMING, t)

    if is_outlier(state.mean, lux, cfg.delta, cfg.floor_lux):
        state.run_len += 1
        state.run.append(lux)
        if state.wave_start is None:
            state.wave_start = t
        event = DetectorEvent(EventKind.OUTLIER, t)
    else:
        # the wave (wave_start) survives a broken run until ell expires
        state.run_len = 0
        state.run.clear()
        state.window.append(lux)
        _refresh_mean(state)
        event = DetectorEvent(EventKind.NONE, t)

    if state.wave_start is None:
        return state, event

    elapsed = t - state.wave_start
    step_reseed = cfg.adapt_policy == AdaptPolicy.STEP_RESEED
    if state.run_len >= params.eta_n and elapsed <= cfg.ell_s:
        if step_reseed and classify_step(state.run, state.mean, cfg.cv_max) is StepClass.STEP_LIKE:
            _reseed_from_run(state)
            event = DetectorEvent(EventKind.ADAPTED, t, state.mean)
        else:
            state.phase = Phase.DEAUTHED
            event = DetectorEvent(EventKind.DEAUTHENTICATE, t)
    elif elapsed > cfg.ell_s:
        reset_wave(state, state.recent)
        if step_reseed:
            event = DetectorEvent(EventKind.ADAPTED, t, state.mean)
        else:
            event = DetectorEvent(EventKind.WAVE_RESET, t)
    return state, event


class Detector:
    """A detector instance bound to one configuration and sampling frequency."""

    def __init__(self, config: DetectorConfig, f: float):
        self.config = validate_config(config)
        self.params = align_to_frequency(config, f)
        self.state = initial_state(self.params)

    @property
    def phase(self) -> Phase:
        return self.state.phase

    @property
    def window_mean(self) -> Optional[float]:
        if self.state.phase is Phase.ARMED:
            return self.state.mean
        return None

    def feed(self, reading: Reading) -> DetectorEvent:
        _, event = process_reading(self.state, self.params, self.config, reading)
        return event

    def run(self, readings: Iterable[Reading]) -> Iterator[DetectorEvent]:
        for reading in readings:
            yield self.feed(reading)

    def rearm(self):
        rearm(self.state)

    def rewarm(self):
        rewarm(self.state)
