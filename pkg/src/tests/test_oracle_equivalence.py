import pytest

from src.backend.detector import Detector, DetectorConfig, EventKind
from src.backend.synth import CorpusRanges, gen_corpus
from src.tests.batch_oracle import batch_deauth_times

CONFIGS = [
    DetectorConfig(delta=5, omega_s=3.0, eta_s=1.5, ell_s=4.0),
    DetectorConfig(delta=10, omega_s=3.0, eta_s=1.0, ell_s=2.0),
    DetectorConfig(delta=15, omega_s=2.0, eta_s=2.0, ell_s=3.0),
    DetectorConfig(delta=20, omega_s=3.0, eta_s=1.0, ell_s=4.0),
]


@pytest.fixture(scope="module")
def corpus():
    # every position keeps its own departure shape
    return gen_corpus(250, seed=99, ranges=CorpusRanges(magnitude=(0.02, 0.40)))


def streaming_deauth_times(trace, cfg):
    detector = Detector(cfg, trace.meta.f)
    fires = []
    for event in detector.run(trace.readings):
        if event.kind is EventKind.DEAUTHENTICATE:
            fires.append(event.at)
            detector.rearm()
    return fires


@pytest.mark.parametrize("cfg", CONFIGS, ids=lambda cfg: f"d{cfg.delta}-e{cfg.eta_s}-l{cfg.ell_s}")
def test_streaming_matches_batch_rule(corpus, cfg):
    assert len(corpus) == 1000
    mismatches = []
    for trace in corpus:
        times = [reading.t for reading in trace.readings]
        lux = [reading.lux for reading in trace.readings]
        expected = batch_deauth_times(times, lux, trace.meta.f, cfg.delta,
                                      cfg.omega_s, cfg.eta_s, cfg.ell_s, cfg.floor_lux)
        if streaming_deauth_times(trace, cfg) != expected:
            mismatches.append(trace.meta.session_id)
    assert mismatches == []
