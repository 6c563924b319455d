import matplotlib
matplotlib.use('Agg')

import pytest

from src.backend.corpus import Trace, TraceMeta
from src.backend.detector import DetectorConfig, Reading


def make_trace(values, f=10.0, session_id="s-0001", position="P4", departure_t=None, tags=None):
    """Trace with readings at k/f carrying the given lux values."""
    readings = tuple(Reading(k / f, float(v)) for k, v in enumerate(values))
    meta = TraceMeta(session_id=session_id, position=position, f=float(f),
                     departure_t=departure_t, tags=dict(tags or {}))
    return Trace(meta=meta, readings=readings)


def step_values(before=100.0, after=150.0, step_at=30, total=100):
    return [before] * step_at + [after] * (total - step_at)


@pytest.fixture
def default_config():
    return DetectorConfig(delta=5, omega_s=3.0, eta_s=1.5, ell_s=4.0)


@pytest.fixture
def clean_step_trace():
    """100 lux for 3 s, then 150 lux: departure labeled at the step (t=3.0)."""
    return make_trace(step_values(), departure_t=3.0, session_id="step-0001")


@pytest.fixture
def constant_trace():
    return make_trace([100.0] * 100, departure_t=5.0, session_id="flat-0001")
