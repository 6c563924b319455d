import random
from itertools import product

import pytest

from src.backend.detector import DetectorConfig
from src.backend.errors import EtaExceedsEll, MissingLabel, MissingMetaKey
from src.backend.evaluation import (
    EvalResult,
    Outcome,
    SweepGrid,
    group_by,
    group_by_deltas,
    judge_session,
    meta_value,
    score_corpus,
    sweep,
    unlabeled_sessions,
)
from src.backend.synth import (
    CORPUS_PRESETS,
    DepartureProfile,
    DepartureShape,
    SyntheticSpec,
    gen_corpus,
    gen_trace,
    light_toggle,
    passerby_far,
    passerby_near,
)
from src.config.constants import SWEEP_DELTA, SWEEP_ELL_S, SWEEP_ETA_S
from src.tests.conftest import make_trace

DEFAULT_GRID = SweepGrid(SWEEP_ETA_S, SWEEP_ELL_S, SWEEP_DELTA)


@pytest.fixture(scope="module")
def small_corpus():
    return gen_corpus(2, seed=17)


# --- Per-session judgment ---

def test_clean_step_is_a_hit(clean_step_trace, default_config):
    judgment = judge_session(clean_step_trace, default_config)
    assert judgment.outcome is Outcome.TP
    assert judgment.fp_count == 0
    assert judgment.deauth_latency_s == pytest.approx(1.4)


def test_constant_trace_is_a_miss(constant_trace, default_config):
    judgment = judge_session(constant_trace, default_config)
    assert judgment.outcome is Outcome.FN
    assert judgment.fp_count == 0
    assert judgment.deauth_latency_s is None


def test_late_deauth_beyond_horizon_is_a_miss(clean_step_trace, default_config):
    assert judge_session(clean_step_trace, default_config, horizon_s=1.0).outcome is Outcome.FN


def test_light_toggle_counts_as_false_positive(default_config):
    trace = gen_trace(SyntheticSpec(
        baseline_lux=100.0, noise_std=0.0, sit_duration_s=30.0,
        departure=DepartureProfile(DepartureShape.RISE, 0.5, movement_duration_s=2.0),
        events=(light_toggle(10.0, 0.3),), session_id="toggle-0001",
    ))
    judgment = judge_session(trace, default_config)
    assert judgment.fp_count >= 1
    # re-armed after the false alarm, so the departure is still caught
    assert judgment.outcome is Outcome.TP


def _session_with(event):
    return gen_trace(SyntheticSpec(
        baseline_lux=100.0, noise_std=0.0, sit_duration_s=25.0,
        departure=DepartureProfile(DepartureShape.RISE, 0.6),
        events=(event,), session_id="passerby-0001",
    ))


def test_near_passerby_of_default_length_is_a_false_alarm(default_config):
    # a 2 s dip of 40 % holds 19 outliers, more than eta' = 15
    judgment = judge_session(_session_with(passerby_near(8.0)), default_config)
    assert judgment.fp_count == 1
    assert judgment.outcome is Outcome.TP


@pytest.mark.parametrize("magnitude", [0.02, 0.3, 0.6])
def test_far_passerby_never_deauthenticates(default_config, magnitude):
    judgment = judge_session(_session_with(passerby_far(8.0, magnitude=magnitude)), default_config)
    assert judgment.fp_count == 0
    assert judgment.outcome is Outcome.TP


def test_judge_session_requires_label(default_config):
    with pytest.raises(MissingLabel):
        judge_session(make_trace([100.0] * 40), default_config)


# --- Corpus scoring ---

def test_score_single_hit(clean_step_trace, default_config):
    result = score_corpus([clean_step_trace], default_config)
    assert (result.tp, result.fn, result.fp, result.tn) == (1, 0, 0, 1)
    assert result.hit_rate == 1.0
    assert result.fall_out == 0.0
    assert result.mean_latency_s == pytest.approx(1.4)


def test_score_single_miss(constant_trace, default_config):
    result = score_corpus([constant_trace], default_config)
    assert result.hit_rate == 0.0
    assert result.miss_rate == 1.0
    assert result.fall_out == 0.0
    assert result.mean_latency_s is None


def test_score_mixed_corpus(clean_step_trace, constant_trace, default_config):
    result = score_corpus([clean_step_trace, constant_trace], default_config)
    assert result.hit_rate == 0.5
    assert result.sessions == 2


def test_score_empty_corpus_is_undefined(default_config):
    result = score_corpus([], default_config)
    assert result == EvalResult()
    assert result.hit_rate is None
    assert result.fall_out is None
    assert result.mean_latency_s is None
    assert not result.defined


def test_score_is_independent_of_trace_order(small_corpus, default_config):
    shuffled = list(small_corpus)
    random.Random(4).shuffle(shuffled)
    assert score_corpus(shuffled, default_config) == score_corpus(small_corpus, default_config)


def test_eval_results_add_up():
    total = EvalResult(tp=1, fn=2, fp=3, tn=4, latency_sum_s=1.5) + EvalResult(tp=1, tn=1, latency_sum_s=0.5)
    assert total == EvalResult(tp=2, fn=2, fp=3, tn=5, latency_sum_s=2.0)
    assert total.mean_latency_s == 1.0


def test_score_corpus_validates_config(clean_step_trace):
    with pytest.raises(EtaExceedsEll):
        score_corpus([clean_step_trace], DetectorConfig(eta_s=5.0, ell_s=2.0))


# --- Sweeps ---

def test_sweep_covers_the_default_grid_in_order(small_corpus):
    result = sweep(small_corpus, DEFAULT_GRID, omega_s=3.0)
    assert len(result.cells) == 36
    assert result.skipped == []
    points = [(cell.eta_s, cell.ell_s, cell.delta) for cell in result.cells]
    assert points == list(product(SWEEP_ETA_S, SWEEP_ELL_S, SWEEP_DELTA))
    for cell in result.cells:
        assert cell.result.sessions == len(small_corpus)


def test_sweep_skips_eta_above_ell(small_corpus):
    result = sweep(small_corpus, SweepGrid((5.0,), (2.0, 6.0), (5,)), omega_s=3.0)
    assert [(cell.eta_s, cell.ell_s) for cell in result.cells] == [(5.0, 6.0)]
    assert len(result.skipped) == 1
    skipped = result.skipped[0]
    assert (skipped.eta_s, skipped.ell_s, skipped.delta) == (5.0, 2.0, 5)
    assert "eta_s" in skipped.reason


def test_sweep_cells_match_score_corpus(small_corpus):
    result = sweep(small_corpus, SweepGrid((1.5,), (4.0,), (10,)), omega_s=3.0)
    expected = score_corpus(small_corpus, DetectorConfig(delta=10, omega_s=3.0, eta_s=1.5, ell_s=4.0))
    assert result.cells[0].result == expected


def test_sweep_with_workers_matches_serial(small_corpus):
    grid = SweepGrid((1.0, 2.0), (3.0,), (5, 15))
    serial = sweep(small_corpus, grid, omega_s=3.0)
    parallel = sweep(small_corpus, grid, omega_s=3.0, workers=2)
    assert parallel.cells == serial.cells


def test_sweep_over_empty_corpus(caplog):
    result = sweep([], SweepGrid((1.0,), (2.0,), (5,)), omega_s=3.0)
    assert len(result.cells) == 1
    assert not result.cells[0].result.defined
    assert "undefined rates" in caplog.text


# --- Grouping ---

def test_group_by_position(small_corpus, default_config):
    table = group_by(small_corpus, default_config, "position")
    assert list(table) == ["P1", "P2", "P3", "P4"]
    overall = score_corpus(small_corpus, default_config)
    assert sum(result.tp for result in table.values()) == overall.tp
    assert sum(result.fn for result in table.values()) == overall.fn
    assert sum(result.fp for result in table.values()) == overall.fp


def test_group_by_tag(small_corpus, default_config):
    table = group_by(small_corpus, default_config, "height_class")
    assert set(table) <= {"short", "average", "tall"}
    assert sum(result.sessions for result in table.values()) == len(small_corpus)


def test_group_by_missing_key(small_corpus, default_config):
    with pytest.raises(MissingMetaKey) as excinfo:
        group_by(small_corpus, default_config, "room")
    assert excinfo.value.key == "room"
    assert len(excinfo.value.session_ids) == len(small_corpus)


def test_group_by_deltas(small_corpus, default_config):
    table = group_by_deltas(small_corpus, default_config, "position", [15, 5, 5])
    assert list(table) == ["P1", "P2", "P3", "P4"]
    for row in table.values():
        assert list(row) == [5, 15]


def test_meta_value_and_unlabeled_sessions():
    labeled = make_trace([1.0], session_id="a", departure_t=0.0, tags={"room": "lab"})
    unlabeled = make_trace([1.0], session_id="b")
    assert meta_value(labeled, "position") == "P4"
    assert meta_value(labeled, "room") == "lab"
    assert meta_value(unlabeled, "room") is None
    assert unlabeled_sessions([labeled, unlabeled]) == ["b"]


# --- Whole-corpus behaviour ---

def test_clean_corpus_separates_at_default_operating_point(default_config):
    corpus = gen_corpus(10, seed=0, ranges=CORPUS_PRESETS["clean"])
    result = score_corpus(corpus, default_config)
    assert result.sessions == 40
    assert result.hit_rate == 1.0
    assert result.fall_out == 0.0


@pytest.fixture(scope="module")
def trend_sweep():
    corpus = gen_corpus(50, seed=2, ranges=CORPUS_PRESETS["trend"])
    return sweep(corpus, DEFAULT_GRID, omega_s=3.0)


def test_hit_rate_falls_as_delta_grows(trend_sweep):
    by_point = {}
    for cell in trend_sweep.cells:
        by_point.setdefault((cell.eta_s, cell.ell_s), []).append(cell.result.hit_rate)
    for rates in by_point.values():
        for smaller, larger in zip(rates, rates[1:]):
            assert larger <= smaller + 0.02
        assert rates[-1] < rates[0]


def test_hit_rate_does_not_fall_as_ell_grows(trend_sweep):
    by_point = {}
    for cell in trend_sweep.cells:
        by_point.setdefault((cell.eta_s, cell.delta), []).append(cell.result.hit_rate)
    assert len(by_point) == 12
    for (eta_s, delta), rates in by_point.items():
        assert len(rates) == 3
        for shorter, longer in zip(rates, rates[1:]):
            assert longer >= shorter - 0.02, (eta_s, delta, rates)
