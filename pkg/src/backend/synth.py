"""
Seeded synthetic sessions that stand in for recorded sensor data.

A session is a sitting period at a constant lighting level followed by a
departure. The light level is

    level(t) = baseline * (1 + drift_per_s * t) * envelope(t) * disturbances(t)

plus independent Gaussian noise, clamped at 0 lux. The departure envelope is
piecewise linear in tau = t - onset over the movement duration D, with
relative magnitude m:

    rise            (P4)  1 -> 1+m over D, plateau 1+m
    drop-below      (P3)  1 -> 1-m over D, plateau 1-m
    rise-after-dip  (P1)  1 -> 1-m/2 at D/2 -> 1+m at D, plateau 1+m
    dip-and-return  (P2)  1 -> 1-m at D/3, held until 2D/3, back to 1 at D

Disturbances multiply the level:

    passerby-near      dip-and-return shape of `magnitude` over duration_s
    passerby-far       +/- magnitude alternating per sample for duration_s
    light-toggle       step to 1+magnitude from at_s to the end of the trace
    posture-change     ramp to 1+magnitude over duration_s, then persistent
    beam-compensation  from at_s on the departure envelope is replaced by 1+magnitude

Per-trace seeds of a corpus come from a splitmix64 stream started at the
corpus seed, so every session can be regenerated on its own.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..config.constants import (
    DEFAULT_NOISE_FRACTION,
    DEFAULT_SAMPLE_HZ,
    DEFAULT_TAIL_S,
    ETA_FLOOR_S,
    HEIGHT_CLASSES,
    PASSERBY_FAR_DURATION_S,
    PASSERBY_FAR_MAGNITUDE,
    PASSERBY_NEAR_DURATION_S,
    POSITION_BASELINES,
    POSITION_SHAPES,
    POSITIONS,
)
from .corpus import Trace, TraceMeta
from .detector import Reading
from .errors import InvalidSpec

MASK64 = (1 << 64) - 1


class DepartureShape(str, Enum):
    RISE_AFTER_DIP = "rise-after-dip"
    DIP_AND_RETURN = "dip-and-return"
    DROP_BELOW = "drop-below"
    RISE = "rise"


class DisturbanceKind(str, Enum):
    PASSERBY_NEAR = "passerby-near"
    PASSERBY_FAR = "passerby-far"
    LIGHT_TOGGLE = "light-toggle"
    POSTURE_CHANGE = "posture-change"
    BEAM_COMPENSATION = "beam-compensation"


@dataclass(frozen=True)
class DepartureProfile:
    shape: DepartureShape
    relative_magnitude: float
    movement_duration_s: float = 3.0
    # None: the departure starts when the sitting period ends
    onset_s: Optional[float] = None


@dataclass(frozen=True)
class DisturbanceEvent:
    kind: DisturbanceKind
    at_s: float
    magnitude: float
    duration_s: Optional[float] = None

    @property
    def effective_duration_s(self) -> Optional[float]:
        if self.duration_s is not None:
            return self.duration_s
        if self.kind == DisturbanceKind.PASSERBY_NEAR:
            return PASSERBY_NEAR_DURATION_S
        if self.kind == DisturbanceKind.PASSERBY_FAR:
            return PASSERBY_FAR_DURATION_S
        if self.kind == DisturbanceKind.POSTURE_CHANGE:
            return 1.0
        return None


@dataclass(frozen=True)
class SyntheticSpec:
    baseline_lux: float
    noise_std: float
    f: float = DEFAULT_SAMPLE_HZ
    sit_duration_s: float = 20.0
    departure: Optional[DepartureProfile] = None
    events: Tuple[DisturbanceEvent, ...] = ()
    seed: int = 0
    tail_s: float = DEFAULT_TAIL_S
    drift_per_s: float = 0.0
    session_id: str = "synthetic"
    position: str = "other"
    tags: Mapping[str, str] = field(default_factory=dict)

    @property
    def duration_s(self) -> float:
        movement = self.departure.movement_duration_s if self.departure else 0.0
        return self.sit_duration_s + movement + self.tail_s

    @property
    def onset_s(self) -> Optional[float]:
        if self.departure is None:
            return None
        if self.departure.onset_s is not None:
            return self.departure.onset_s
        return self.sit_duration_s


@dataclass(frozen=True)
class CorpusRanges:
    """Ranges that gen_corpus draws per-session parameters from (uniformly)."""
    magnitude: Tuple[float, float] = (0.25, 0.60)
    movement_s: Tuple[float, float] = (2.0, 4.0)
    sit_duration_s: Tuple[float, float] = (15.0, 25.0)
    noise_fraction: float = DEFAULT_NOISE_FRACTION
    # None keeps the departure shape of each position
    shape: Optional[DepartureShape] = None


CORPUS_PRESETS = {
    # every departure is at least three times the default delta of 5 %
    "clean": CorpusRanges(),
    # fast single-step departures with magnitudes across the whole delta grid (5..20 %);
    # a wave reset re-seeds the window at the new level, so hits never drop as ell grows
    "trend": CorpusRanges(magnitude=(0.02, 0.40), movement_s=(0.5, 1.0), shape=DepartureShape.RISE),
}


def splitmix64(seed: int):
    """Yield the splitmix64 sequence started at seed."""
    state = seed & MASK64
    while True:
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        yield z ^ (z >> 31)


def validate_spec(spec: SyntheticSpec) -> SyntheticSpec:
    if not spec.baseline_lux >= 0:
        raise InvalidSpec(f"baseline_lux must be >= 0, got {spec.baseline_lux}")
    if not spec.noise_std >= 0:
        raise InvalidSpec(f"noise_std must be >= 0, got {spec.noise_std}")
    if not spec.f > 0:
        raise InvalidSpec(f"f must be > 0, got {spec.f}")
    if not spec.sit_duration_s > 0:
        raise InvalidSpec(f"sit_duration_s must be > 0, got {spec.sit_duration_s}")
    if not spec.tail_s >= 0:
        raise InvalidSpec(f"tail_s must be >= 0, got {spec.tail_s}")
    if not 0 <= spec.seed <= MASK64:
        raise InvalidSpec(f"seed must fit in 64 bits, got {spec.seed}")
    if spec.position not in POSITIONS:
        raise InvalidSpec(f"position must be one of {', '.join(POSITIONS)}, got {spec.position!r}")
    departure = spec.departure
    if departure is not None:
        try:
            DepartureShape(departure.shape)
        except ValueError:
            raise InvalidSpec(f"unknown departure shape {departure.shape!r}") from None
        if not 0.5 <= departure.movement_duration_s <= 10:
            raise InvalidSpec(
                f"movement_duration_s must lie in [0.5, 10], got {departure.movement_duration_s}"
            )
        if not departure.relative_magnitude > 0:
            raise InvalidSpec(f"relative_magnitude must be > 0, got {departure.relative_magnitude}")
        onset = spec.onset_s
        last_t = (int(round(spec.duration_s * spec.f, 9)) - 1) / spec.f
        if not 0 <= onset <= last_t:
            raise InvalidSpec(f"departure onset {onset} lies outside the trace (0..{last_t})")
    for event in spec.events:
        try:
            kind = DisturbanceKind(event.kind)
        except ValueError:
            raise InvalidSpec(f"unknown disturbance kind {event.kind!r}") from None
        if not event.at_s >= 0:
            raise InvalidSpec(f"{kind.value}: at_s must be >= 0, got {event.at_s}")
        if not event.magnitude > -1:
            raise InvalidSpec(f"{kind.value}: magnitude must be > -1, got {event.magnitude}")
        duration = event.effective_duration_s
        if duration is not None and not duration > 0:
            raise InvalidSpec(f"{kind.value}: duration_s must be > 0, got {duration}")
        if kind == DisturbanceKind.PASSERBY_FAR and duration >= ETA_FLOOR_S:
            raise InvalidSpec(
                f"passerby-far events must be shorter than {ETA_FLOOR_S} s, got {duration}"
            )
    return spec


def _departure_knots(shape, magnitude, duration):
    shape = DepartureShape(shape)
    m, d = magnitude, duration
    if shape == DepartureShape.RISE:
        return [0.0, d], [1.0, 1.0 + m]
    if shape == DepartureShape.DROP_BELOW:
        return [0.0, d], [1.0, 1.0 - m]
    if shape == DepartureShape.RISE_AFTER_DIP:
        return [0.0, d / 2, d], [1.0, 1.0 - m / 2, 1.0 + m]
    return [0.0, d / 3, 2 * d / 3, d], [1.0, 1.0 - m, 1.0 - m, 1.0]


def _envelope(times, start, shape, magnitude, duration):
    xp, fp = _departure_knots(shape, magnitude, duration)
    return np.interp(times - start, xp, fp, left=1.0, right=fp[-1])


def _disturbance_factor(times, event):
    kind = DisturbanceKind(event.kind)
    duration = event.effective_duration_s
    if kind == DisturbanceKind.PASSERBY_NEAR:
        return _envelope(times, event.at_s, DepartureShape.DIP_AND_RETURN, event.magnitude, duration)
    if kind == DisturbanceKind.PASSERBY_FAR:
        factor = np.ones_like(times)
        active = np.flatnonzero((times >= event.at_s) & (times < event.at_s + duration))
        signs = np.where(np.arange(active.size) % 2 == 0, 1.0, -1.0)
        factor[active] = 1.0 + event.magnitude * signs
        return factor
    if kind == DisturbanceKind.LIGHT_TOGGLE:
        return np.where(times >= event.at_s, 1.0 + event.magnitude, 1.0)
    if kind == DisturbanceKind.POSTURE_CHANGE:
        return _envelope(times, event.at_s, DepartureShape.RISE, event.magnitude, duration)
    return np.ones_like(times)


def gen_trace(spec: SyntheticSpec) -> Trace:
    """Generate one labeled session; identical specs give identical traces."""
    validate_spec(spec)
    n = int(round(spec.duration_s * spec.f, 9))
    times = [k / spec.f for k in range(n)]
    t = np.asarray(times, dtype=float)

    envelope = np.ones_like(t)
    if spec.departure is not None:
        envelope = _envelope(t, spec.onset_s, spec.departure.shape,
                             spec.departure.relative_magnitude, spec.departure.movement_duration_s)
    factor = np.ones_like(t)
    toggle_times = []
    for event in spec.events:
        if event.kind == DisturbanceKind.BEAM_COMPENSATION:
            envelope = np.where(t >= event.at_s, 1.0 + event.magnitude, envelope)
            continue
        if event.kind == DisturbanceKind.LIGHT_TOGGLE:
            toggle_times.append(event.at_s)
        factor = factor * _disturbance_factor(t, event)

    level = spec.baseline_lux * (1.0 + spec.drift_per_s * t) * envelope * factor
    if spec.noise_std > 0:
        rng = np.random.default_rng(spec.seed)
        level = level + rng.normal(0.0, spec.noise_std, size=n)
    lux = np.maximum(level, 0.0)

    tags = dict(spec.tags)
    if toggle_times:
        tags["light_toggle_t"] = repr(float(min(toggle_times)))
    if spec.events:
        tags["disturbances"] = ";".join(
            f"{DisturbanceKind(e.kind).value}@{float(e.at_s)!r}" for e in spec.events
        )
    meta = TraceMeta(
        session_id=spec.session_id,
        position=spec.position,
        f=float(spec.f),
        departure_t=None if spec.onset_s is None else float(spec.onset_s),
        tags=dict(sorted(tags.items())),
    )
    readings = tuple(Reading(time, value) for time, value in zip(times, lux.tolist()))
    return Trace(meta=meta, readings=readings)


def default_base_specs(f: float = DEFAULT_SAMPLE_HZ,
                       noise_fraction: float = DEFAULT_NOISE_FRACTION) -> Dict[str, SyntheticSpec]:
    specs = {}
    for position, baseline in POSITION_BASELINES.items():
        specs[position] = SyntheticSpec(
            baseline_lux=baseline,
            noise_std=baseline * noise_fraction,
            f=f,
            departure=DepartureProfile(shape=DepartureShape(POSITION_SHAPES[position]),
                                       relative_magnitude=0.5),
            position=position,
        )
    return specs


def gen_corpus(n_per_position: int,
               base_specs: Optional[Mapping[str, SyntheticSpec]] = None,
               seed: int = 0,
               ranges: CorpusRanges = CorpusRanges()) -> List[Trace]:
    """
    Generate n_per_position sessions for every position in base_specs.

    Each session draws its sitting duration, movement duration, magnitude and
    height class from `ranges` with a generator seeded by its own splitmix64
    seed; the height class scales the magnitude. Noise is
    ranges.noise_fraction of the position's baseline.
    """
    if isinstance(n_per_position, bool) or not isinstance(n_per_position, int) or n_per_position < 1:
        raise InvalidSpec(f"n_per_position must be an integer >= 1, got {n_per_position!r}")
    for name in ("magnitude", "movement_s", "sit_duration_s"):
        low, high = getattr(ranges, name)
        if not 0 < low <= high:
            raise InvalidSpec(f"{name} range must satisfy 0 < low <= high, got ({low}, {high})")
    if not ranges.noise_fraction >= 0:
        raise InvalidSpec(f"noise_fraction must be >= 0, got {ranges.noise_fraction}")
    if ranges.shape is not None:
        try:
            DepartureShape(ranges.shape)
        except ValueError:
            raise InvalidSpec(f"unknown departure shape {ranges.shape!r}") from None
    if base_specs is None:
        base_specs = default_base_specs(noise_fraction=ranges.noise_fraction)
    seeds = splitmix64(seed)
    height_names = sorted(HEIGHT_CLASSES)
    traces = []
    for position in sorted(base_specs):
        base = base_specs[position]
        if ranges.shape is not None:
            shape = DepartureShape(ranges.shape)
        elif base.departure is not None:
            shape = base.departure.shape
        else:
            shape = DepartureShape(POSITION_SHAPES.get(position, "rise"))
        for index in range(n_per_position):
            trace_seed = next(seeds)
            # jitter draws use a stream separate from the noise of the session itself
            rng = np.random.default_rng((trace_seed, 1))
            sit = float(rng.uniform(*ranges.sit_duration_s))
            movement = float(rng.uniform(*ranges.movement_s))
            magnitude = float(rng.uniform(*ranges.magnitude))
            height = height_names[int(rng.integers(len(height_names)))]
            spec = replace(
                base,
                noise_std=base.baseline_lux * ranges.noise_fraction,
                sit_duration_s=sit,
                departure=DepartureProfile(
                    shape=shape,
                    relative_magnitude=magnitude * HEIGHT_CLASSES[height],
                    movement_duration_s=movement,
                ),
                seed=trace_seed,
                session_id=f"{position}-{index + 1:04d}",
                position=position,
                tags={**base.tags, "height_class": height},
            )
            traces.append(gen_trace(spec))
    return traces


def positions_of(traces: Sequence[Trace]) -> Dict[str, int]:
    counts = {}
    for trace in traces:
        counts[trace.meta.position] = counts.get(trace.meta.position, 0) + 1
    return counts


def passerby_near(at_s: float, magnitude: float = 0.4,
                  duration_s: float = PASSERBY_NEAR_DURATION_S) -> DisturbanceEvent:
    return DisturbanceEvent(DisturbanceKind.PASSERBY_NEAR, at_s, magnitude, duration_s)


def passerby_far(at_s: float, magnitude: float = PASSERBY_FAR_MAGNITUDE,
                 duration_s: float = PASSERBY_FAR_DURATION_S) -> DisturbanceEvent:
    return DisturbanceEvent(DisturbanceKind.PASSERBY_FAR, at_s, magnitude, duration_s)


def light_toggle(at_s: float, magnitude: float) -> DisturbanceEvent:
    return DisturbanceEvent(DisturbanceKind.LIGHT_TOGGLE, at_s, magnitude)
