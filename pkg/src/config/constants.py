"""
Constants used throughout the toolkit.
"""

# Detector operating point (delta in percent, times in seconds)
DEFAULT_DELTA = 5
DEFAULT_OMEGA_S = 3.0
DEFAULT_ETA_S = 1.5
DEFAULT_ELL_S = 4.0
DEFAULT_CV_MAX = 0.05
DEFAULT_FLOOR_LUX = 0.0

ADAPT_POLICIES = ("none", "step-reseed")

# Evaluation
DEFAULT_HORIZON_S = 10.0

# Parameter grid of the published hit-rate table
SWEEP_ETA_S = (1.0, 1.5, 2.0)
SWEEP_ELL_S = (2.0, 3.0, 4.0)
SWEEP_DELTA = (5, 10, 15, 20)

RESULTS_CSV_HEADER = (
    "eta_s", "ell_s", "delta", "tp", "fn", "fp", "tn",
    "hit_rate", "fall_out", "mean_latency_s",
)

# Trace files
TRACE_FORMAT = "deal-trace-1"
TRACE_SUFFIX = ".trace"
POSITIONS = ("P1", "P2", "P3", "P4", "other")
SPACING_TOLERANCE = 0.10

# Synthetic sitting levels in lux. Only the ordering matters:
# P3 (copious light) > P2 ~ P4 (normal) > P1 (dim, user blocks the light)
POSITION_BASELINES = {
    "P1": 40.0,
    "P2": 120.0,
    "P3": 400.0,
    "P4": 120.0,
}

POSITION_SHAPES = {
    "P1": "rise-after-dip",
    "P2": "dip-and-return",
    "P3": "drop-below",
    "P4": "rise",
}

HEIGHT_CLASSES = {
    "short": 0.85,
    "average": 1.0,
    "tall": 1.15,
}

DEFAULT_NOISE_FRACTION = 0.01
DEFAULT_SAMPLE_HZ = 10.0
DEFAULT_TAIL_S = 12.0

# Shortest eta in the sweep grid; far passersby must stay below it
ETA_FLOOR_S = 1.0

PASSERBY_NEAR_DURATION_S = 2.0
PASSERBY_FAR_DURATION_S = 0.3
PASSERBY_FAR_MAGNITUDE = 0.02

# Live sources
DEFAULT_POLL_HZ = 10.0
READ_RETRY_TICKS = 3
GAP_FACTOR = 2.0
DEFAULT_QUEUE_SIZE = 256

# Exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

# Audit log event names
EVENT_NAMES = {
    "outlier": "OUTLIER",
    "wave_reset": "WAVE_RESET",
    "deauthenticate": "DEAUTH",
    "adapted": "ADAPTED",
}
