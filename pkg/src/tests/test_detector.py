import time

import numpy as np
import pytest

from src.backend.detector import (
    AdaptPolicy,
    Detector,
    DetectorConfig,
    EventKind,
    Phase,
    Reading,
    StepClass,
    align_to_frequency,
    classify_step,
    is_outlier,
    validate_config,
)
from src.backend.errors import (
    ConfigError,
    EtaExceedsEll,
    FrequencyTooLow,
    InvalidReading,
    NonPositiveParam,
    NotDeauthed,
    OutOfOrderReading,
    UnknownPolicy,
)
from src.backend.synth import DepartureProfile, SyntheticSpec, gen_trace, light_toggle, passerby_near


def feed_all(detector, values, f=10.0, start=0):
    return [detector.feed(Reading((start + k) / f, float(v))) for k, v in enumerate(values)]


def kinds(events):
    return [event.kind for event in events]


# --- Configuration ---

@pytest.mark.parametrize("cfg, error", [
    (DetectorConfig(delta=0), NonPositiveParam),
    (DetectorConfig(delta=-5), NonPositiveParam),
    (DetectorConfig(delta=5.5), NonPositiveParam),
    (DetectorConfig(omega_s=0), NonPositiveParam),
    (DetectorConfig(eta_s=-1.0), NonPositiveParam),
    (DetectorConfig(cv_max=0), NonPositiveParam),
    (DetectorConfig(floor_lux=-1.0), NonPositiveParam),
    (DetectorConfig(adapt_policy="magic"), UnknownPolicy),
    (DetectorConfig(eta_s=5.0, ell_s=2.0), EtaExceedsEll),
])
def test_validate_config_rejects(cfg, error):
    with pytest.raises(error):
        validate_config(cfg)


def test_validate_config_names_the_eta_rule():
    with pytest.raises(ConfigError, match=r"eta_s \(5.0\) must not exceed ell_s \(2.0\)"):
        validate_config(DetectorConfig(eta_s=5.0, ell_s=2.0))


def test_validate_config_accepts_eta_equal_ell():
    cfg = DetectorConfig(eta_s=2.0, ell_s=2.0)
    assert validate_config(cfg) is cfg


@pytest.mark.parametrize("omega_s, eta_s, f, expected", [
    (3.0, 1.5, 10.0, (30, 15)),
    (3.0, 1.5, 8.0, (24, 12)),
    (2.3, 1.0, 10.0, (23, 10)),
    (3.0, 1.55, 10.0, (30, 15)),
])
def test_align_to_frequency(omega_s, eta_s, f, expected):
    params = align_to_frequency(DetectorConfig(omega_s=omega_s, eta_s=eta_s, ell_s=4.0), f)
    assert (params.omega_n, params.eta_n) == expected


@pytest.mark.parametrize("f", [0.0, -1.0, 0.5])
def test_align_to_frequency_too_low(f):
    with pytest.raises(FrequencyTooLow):
        align_to_frequency(DetectorConfig(omega_s=3.0, eta_s=1.5), f)


# --- Outlier test and step classification ---

@pytest.mark.parametrize("mean, r, delta, floor_lux, expected", [
    (100.0, 106.0, 5, 0.0, True),
    (100.0, 105.0, 5, 0.0, False),
    (100.0, 94.0, 5, 0.0, True),
    (100.0, 100.0, 5, 0.0, False),
    (0.0, 0.1, 5, 0.0, True),
    (0.0, 0.1, 5, 0.5, False),
    (2.0, 2.4, 5, 0.5, False),
])
def test_is_outlier(mean, r, delta, floor_lux, expected):
    assert is_outlier(mean, r, delta, floor_lux) is expected


def test_classify_step_flat_run_is_step_like():
    assert classify_step([150.0] * 15, 100.0) is StepClass.STEP_LIKE


def test_classify_step_two_sided_run_is_departure_like():
    assert classify_step([150.0] * 7 + [50.0] * 8, 100.0) is StepClass.DEPARTURE_LIKE


def test_classify_step_ramp_is_departure_like():
    ramp = [110.0 + 10.0 * k for k in range(15)]
    assert classify_step(ramp, 100.0) is StepClass.DEPARTURE_LIKE


def test_classify_step_empty_run():
    assert classify_step([], 100.0) is StepClass.DEPARTURE_LIKE


# --- Streaming behaviour ---

def test_warm_up_fills_window_before_testing(default_config):
    detector = Detector(default_config, 10.0)
    events = feed_all(detector, [100.0] * 29)
    assert set(kinds(events)) == {EventKind.WARMING}
    assert detector.phase is Phase.WARMING
    assert detector.window_mean is None
    detector.feed(Reading(2.9, 100.0))
    assert detector.phase is Phase.ARMED
    assert detector.window_mean == 100.0


def test_clean_step_deauthenticates_after_eta(default_config):
    detector = Detector(default_config, 10.0)
    events = feed_all(detector, [100.0] * 30 + [150.0] * 30)
    deauths = [e for e in events if e.kind is EventKind.DEAUTHENTICATE]
    assert len(deauths) == 1
    assert deauths[0].at == pytest.approx(4.4)
    assert deauths[0].at - 3.0 == pytest.approx(1.4)
    assert detector.phase is Phase.DEAUTHED
    # ignored until re-armed
    assert set(kinds(events[45:])) == {EventKind.NONE}


def test_window_is_frozen_during_outlier_run(default_config):
    detector = Detector(default_config, 10.0)
    feed_all(detector, [100.0] * 30 + [150.0] * 10)
    assert detector.window_mean == 100.0
    assert list(detector.state.window) == [100.0] * 30
    assert detector.state.run_len == 10


def test_short_burst_does_not_deauthenticate(default_config):
    detector = Detector(default_config, 10.0)
    events = feed_all(detector, [100.0] * 30 + [150.0] * 14 + [100.0] * 60)
    assert EventKind.DEAUTHENTICATE not in kinds(events)
    assert kinds(events).count(EventKind.OUTLIER) == 14


def test_broken_run_keeps_wave_until_ell_then_resets():
    cfg = DetectorConfig(delta=5, omega_s=3.0, eta_s=1.5, ell_s=3.35)
    detector = Detector(cfg, 10.0)
    events = feed_all(detector, [100.0] * 30 + [140.0] * 10 + [100.0] * 25)
    resets = [e for e in events if e.kind is EventKind.WAVE_RESET]
    assert [e.at for e in resets] == [pytest.approx(6.4)]
    # the window is re-seeded from the last 30 raw readings, outliers included
    window = list(detector.state.window)
    assert window == [140.0] * 5 + [100.0] * 25
    assert detector.window_mean == pytest.approx((5 * 140 + 25 * 100) / 30)
    assert detector.state.wave_start is None
    assert detector.state.run_len == 0


def test_wave_start_survives_non_outlier(default_config):
    detector = Detector(default_config, 10.0)
    feed_all(detector, [100.0] * 30 + [150.0] * 3 + [100.0] * 2)
    assert detector.state.wave_start == pytest.approx(3.0)
    assert detector.state.run_len == 0


def _boundary_values():
    # 8 Hz: t = k/8 is exact, so elapsed time hits ell exactly
    return [100.0] * 24 + [150.0] + [100.0] + [150.0] * 8


def test_deauth_allowed_when_elapsed_equals_ell():
    cfg = DetectorConfig(delta=5, omega_s=3.0, eta_s=1.0, ell_s=1.125)
    detector = Detector(cfg, 8.0)
    events = feed_all(detector, _boundary_values(), f=8.0)
    assert events[-1].kind is EventKind.DEAUTHENTICATE
    assert events[-1].at == 4.125


def test_wave_reset_when_elapsed_exceeds_ell():
    cfg = DetectorConfig(delta=5, omega_s=3.0, eta_s=1.0, ell_s=1.0)
    detector = Detector(cfg, 8.0)
    events = feed_all(detector, _boundary_values(), f=8.0)
    assert EventKind.DEAUTHENTICATE not in kinds(events)
    assert events[-1].kind is EventKind.WAVE_RESET


def test_out_of_order_reading_rejected(default_config):
    detector = Detector(default_config, 10.0)
    detector.feed(Reading(1.0, 100.0))
    with pytest.raises(OutOfOrderReading):
        detector.feed(Reading(1.0, 100.0))
    with pytest.raises(OutOfOrderReading):
        detector.feed(Reading(0.5, 100.0))


@pytest.mark.parametrize("t", [float("nan"), float("inf"), -0.1])
def test_first_reading_time_must_be_finite_and_non_negative(default_config, t):
    detector = Detector(default_config, 10.0)
    with pytest.raises(InvalidReading):
        detector.feed(Reading(t, 100.0))
    # a valid reading is still accepted afterwards
    detector.feed(Reading(0.0, 100.0))


@pytest.mark.parametrize("lux", [-1.0, float("nan")])
def test_invalid_reading_rejected(default_config, lux):
    detector = Detector(default_config, 10.0)
    with pytest.raises(InvalidReading):
        detector.feed(Reading(0.0, lux))


def test_rearm_requires_deauthed_detector(default_config):
    detector = Detector(default_config, 10.0)
    feed_all(detector, [100.0] * 30)
    with pytest.raises(NotDeauthed):
        detector.rearm()


def test_rearm_restarts_warm_up(default_config):
    detector = Detector(default_config, 10.0)
    feed_all(detector, [100.0] * 30 + [150.0] * 15)
    assert detector.phase is Phase.DEAUTHED
    detector.rearm()
    assert detector.phase is Phase.WARMING
    events = feed_all(detector, [150.0] * 30, start=45)
    assert set(kinds(events)) == {EventKind.WARMING}
    assert detector.window_mean == 150.0


def test_rewarm_from_any_phase(default_config):
    detector = Detector(default_config, 10.0)
    feed_all(detector, [100.0] * 35)
    detector.rewarm()
    assert detector.phase is Phase.WARMING
    assert len(detector.state.window) == 0


# --- Step re-seeding ---

def test_step_reseed_adapts_to_flat_step():
    cfg = DetectorConfig(adapt_policy=AdaptPolicy.STEP_RESEED)
    detector = Detector(cfg, 10.0)
    events = feed_all(detector, [100.0] * 30 + [150.0] * 40)
    adapted = [e for e in events if e.kind is EventKind.ADAPTED]
    assert EventKind.DEAUTHENTICATE not in kinds(events)
    assert len(adapted) == 1
    assert adapted[0].at == pytest.approx(4.4)
    assert adapted[0].detail == 150.0
    assert detector.window_mean == 150.0
    assert len(detector.state.window) == 30


def test_step_reseed_wave_reset_reports_adapted():
    cfg = DetectorConfig(ell_s=3.35, adapt_policy=AdaptPolicy.STEP_RESEED)
    detector = Detector(cfg, 10.0)
    events = feed_all(detector, [100.0] * 30 + [140.0] * 10 + [100.0] * 25)
    adapted = [e for e in events if e.kind is EventKind.ADAPTED]
    assert EventKind.WAVE_RESET not in kinds(events)
    assert [e.at for e in adapted] == [pytest.approx(6.4)]
    assert adapted[0].detail == pytest.approx((5 * 140 + 25 * 100) / 30)


def _run_trace(cfg, trace):
    detector = Detector(cfg, trace.meta.f)
    return list(detector.run(trace.readings))


def test_light_toggle_deauthenticates_without_adaptation(default_config):
    trace = gen_trace(SyntheticSpec(baseline_lux=100.0, noise_std=0.0, sit_duration_s=30.0,
                                    events=(light_toggle(10.0, 0.3),)))
    events = _run_trace(default_config, trace)
    deauths = [e for e in events if e.kind is EventKind.DEAUTHENTICATE]
    assert deauths
    assert 10.0 < deauths[0].at <= 10.0 + default_config.eta_s + 1e-9


def test_light_toggle_adapts_and_departure_still_detected():
    cfg = DetectorConfig(adapt_policy=AdaptPolicy.STEP_RESEED)
    trace = gen_trace(SyntheticSpec(
        baseline_lux=100.0, noise_std=0.0, sit_duration_s=20.0,
        departure=DepartureProfile(shape="rise", relative_magnitude=0.6, movement_duration_s=2.0),
        events=(light_toggle(10.0, 0.3),),
    ))
    events = _run_trace(cfg, trace)
    adapted = [e for e in events if e.kind is EventKind.ADAPTED]
    deauths = [e for e in events if e.kind is EventKind.DEAUTHENTICATE]
    assert len(adapted) == 1
    assert adapted[0].detail == pytest.approx(130.0)
    assert len(deauths) == 1
    assert deauths[0].at > 20.0


# --- Robustness properties ---

def test_sub_eta_bursts_never_deauthenticate(default_config):
    rng = np.random.default_rng(2024)
    for seed in range(100):
        starts = np.cumsum(rng.uniform(6.0, 10.0, size=6))
        events = tuple(
            passerby_near(float(at), magnitude=float(rng.uniform(0.3, 0.6)),
                          duration_s=float(rng.uniform(0.3, 1.2)))
            for at in starts
        )
        trace = gen_trace(SyntheticSpec(baseline_lux=float(rng.uniform(50, 400)), noise_std=0.0,
                                        sit_duration_s=70.0, tail_s=0.0, events=events, seed=seed))
        assert EventKind.DEAUTHENTICATE not in kinds(_run_trace(default_config, trace)), seed


def test_slow_drift_produces_no_outliers(default_config):
    trace = gen_trace(SyntheticSpec(baseline_lux=100.0, noise_std=0.0, sit_duration_s=600.0,
                                    tail_s=0.0, drift_per_s=0.01))
    assert len(trace.readings) == 6000
    events = _run_trace(default_config, trace)
    assert EventKind.OUTLIER not in kinds(events)
    assert EventKind.DEAUTHENTICATE not in kinds(events)


def test_offline_throughput(default_config):
    rng = np.random.default_rng(7)
    values = (100.0 + rng.normal(0.0, 1.0, size=300_000)).tolist()
    readings = [Reading(k / 10.0, v) for k, v in enumerate(values)]
    detector = Detector(default_config, 10.0)
    feed = detector.feed
    started = time.perf_counter()
    for reading in readings:
        feed(reading)
    elapsed = time.perf_counter() - started
    assert len(readings) / elapsed >= 100_000
