"""
Backend package.
Contains the detector, trace corpus handling, synthetic generation, evaluation,
sensor sources, monitoring and report generation.
"""

from .detector import Detector, DetectorConfig, Reading
from .corpus import read_trace, write_trace, load_corpus
from .evaluation import score_corpus, sweep
