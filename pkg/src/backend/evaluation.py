"""
Scoring detector output against labeled sessions.

Every session contributes one positive instance (the departure) and one
negative instance (the sitting period before departure_t):

- TP: the first de-authentication at or after departure_t fires no later than
  departure_t + horizon_s; otherwise FN.
- FP: every de-authentication strictly before departure_t. The detector is
  re-armed right away so the departure can still be judged.
- TN: a session without any FP.

hit_rate = tp / (tp + fn), fall_out = fp / (fp + tn). A rate whose
denominator is zero is None (undefined).
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

from ..config.constants import DEFAULT_HORIZON_S
from .corpus import Trace
from .detector import Detector, DetectorConfig, EventKind, validate_config
from .errors import EtaExceedsEll, MissingLabel, MissingMetaKey

logger = logging.getLogger(__name__)


class Outcome(str, Enum):
    TP = "TP"
    FN = "FN"


@dataclass(frozen=True)
class SessionJudgment:
    session_id: str
    outcome: Outcome
    fp_count: int = 0
    deauth_latency_s: Optional[float] = None


@dataclass(frozen=True)
class EvalResult:
    tp: int = 0
    fn: int = 0
    fp: int = 0
    tn: int = 0
    latency_sum_s: float = 0.0

    @property
    def sessions(self) -> int:
        return self.tp + self.fn

    @property
    def hit_rate(self) -> Optional[float]:
        if self.tp + self.fn == 0:
            return None
        return self.tp / (self.tp + self.fn)

    @property
    def miss_rate(self) -> Optional[float]:
        if self.tp + self.fn == 0:
            return None
        return self.fn / (self.tp + self.fn)

    @property
    def fall_out(self) -> Optional[float]:
        if self.fp + self.tn == 0:
            return None
        return self.fp / (self.fp + self.tn)

    @property
    def mean_latency_s(self) -> Optional[float]:
        if self.tp == 0:
            return None
        return self.latency_sum_s / self.tp

    @property
    def defined(self) -> bool:
        return self.hit_rate is not None and self.fall_out is not None

    def __add__(self, other: "EvalResult") -> "EvalResult":
        return EvalResult(
            tp=self.tp + other.tp,
            fn=self.fn + other.fn,
            fp=self.fp + other.fp,
            tn=self.tn + other.tn,
            latency_sum_s=self.latency_sum_s + other.latency_sum_s,
        )


@dataclass(frozen=True)
class SweepGrid:
    eta_s: Tuple[float, ...]
    ell_s: Tuple[float, ...]
    delta: Tuple[int, ...]


@dataclass(frozen=True)
class SweepCell:
    eta_s: float
    ell_s: float
    delta: int
    result: EvalResult


class SkippedCell(NamedTuple):
    eta_s: float
    ell_s: float
    delta: int
    reason: str


@dataclass
class SweepResult:
    cells: List[SweepCell] = field(default_factory=list)
    skipped: List[SkippedCell] = field(default_factory=list)


def judge_session(trace: Trace, cfg: DetectorConfig,
                  horizon_s: float = DEFAULT_HORIZON_S) -> SessionJudgment:
    meta = trace.meta
    if meta.departure_t is None:
        raise MissingLabel(f"session {meta.session_id} has no departure_t label")
    departure_t = meta.departure_t
    detector = Detector(cfg, meta.f)
    fp_count = 0
    for reading in trace.readings:
        event = detector.feed(reading)
        if event.kind is not EventKind.DEAUTHENTICATE:
            continue
        if event.at < departure_t:
            fp_count += 1
            detector.rearm()
            continue
        latency = event.at - departure_t
        if latency <= horizon_s:
            return SessionJudgment(meta.session_id, Outcome.TP, fp_count, latency)
        break
    return SessionJudgment(meta.session_id, Outcome.FN, fp_count, None)


def _result_of(judgment: SessionJudgment) -> EvalResult:
    hit = judgment.outcome is Outcome.TP
    return EvalResult(
        tp=1 if hit else 0,
        fn=0 if hit else 1,
        fp=judgment.fp_count,
        tn=1 if judgment.fp_count == 0 else 0,
        latency_sum_s=judgment.deauth_latency_s if hit else 0.0,
    )


def score_corpus(corpus: Iterable[Trace], cfg: DetectorConfig,
                 horizon_s: float = DEFAULT_HORIZON_S) -> EvalResult:
    """Sum the per-session confusion counts of a corpus."""
    validate_config(cfg)
    judgments = [judge_session(trace, cfg, horizon_s) for trace in corpus]
    # sort before summing so the float latency total is independent of trace order
    judgments.sort(key=lambda judgment: judgment.session_id)
    total = EvalResult()
    for judgment in judgments:
        total = total + _result_of(judgment)
    return total


def _score_cell(args):
    corpus, cfg, horizon_s = args
    return score_corpus(corpus, cfg, horizon_s)


def sweep(corpus: Sequence[Trace], grid: SweepGrid, omega_s: float,
          horizon_s: float = DEFAULT_HORIZON_S, base: Optional[DetectorConfig] = None,
          workers: int = 1) -> SweepResult:
    """
    Score the corpus at every (eta, ell, delta) point of the grid.

    Points with eta > ell are skipped, not scored. Cells come back ordered by
    eta, then ell, then delta regardless of how many workers were used.
    """
    base = base or DetectorConfig()
    corpus = list(corpus)
    result = SweepResult()
    configs = []
    for eta_s, ell_s, delta in product(sorted(set(grid.eta_s)), sorted(set(grid.ell_s)),
                                       sorted(set(grid.delta))):
        cfg = DetectorConfig(
            delta=delta, omega_s=omega_s, eta_s=eta_s, ell_s=ell_s,
            adapt_policy=base.adapt_policy, cv_max=base.cv_max, floor_lux=base.floor_lux,
        )
        try:
            validate_config(cfg)
        except EtaExceedsEll as exc:
            logger.info("skipping cell eta=%s ell=%s delta=%s: %s", eta_s, ell_s, delta, exc)
            result.skipped.append(SkippedCell(eta_s, ell_s, delta, f"eta_s <= ell_s violated: {exc}"))
            continue
        configs.append(cfg)

    jobs = [(corpus, cfg, horizon_s) for cfg in configs]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(_score_cell, jobs))
    else:
        scores = [_score_cell(job) for job in jobs]

    for cfg, score in zip(configs, scores):
        if not score.defined:
            logger.warning("cell eta=%s ell=%s delta=%s has undefined rates (empty corpus?)",
                           cfg.eta_s, cfg.ell_s, cfg.delta)
        result.cells.append(SweepCell(cfg.eta_s, cfg.ell_s, cfg.delta, score))
    return result


def meta_value(trace: Trace, key: str) -> Optional[str]:
    """Look a grouping key up in the trace header, then in its tags."""
    meta = trace.meta
    if key in ("position", "session_id"):
        return getattr(meta, key)
    value = meta.tags.get(key)
    return None if value is None else str(value)


def _partition(corpus, meta_key):
    groups: Dict[str, List[Trace]] = {}
    missing = []
    for trace in corpus:
        label = meta_value(trace, meta_key)
        if label is None:
            missing.append(trace.meta.session_id)
            continue
        groups.setdefault(label, []).append(trace)
    if missing:
        raise MissingMetaKey(meta_key, sorted(missing))
    return {label: groups[label] for label in sorted(groups)}


def group_by(corpus: Iterable[Trace], cfg: DetectorConfig, meta_key: str,
             horizon_s: float = DEFAULT_HORIZON_S) -> Dict[str, EvalResult]:
    groups = _partition(corpus, meta_key)
    return {label: score_corpus(traces, cfg, horizon_s) for label, traces in groups.items()}


def group_by_deltas(corpus: Iterable[Trace], cfg: DetectorConfig, meta_key: str,
                    deltas: Sequence[int],
                    horizon_s: float = DEFAULT_HORIZON_S) -> Dict[str, Dict[int, EvalResult]]:
    """Per-label results for several thresholds (label rows, delta columns)."""
    groups = _partition(corpus, meta_key)
    table = {}
    for label, traces in groups.items():
        row = {}
        for delta in sorted(set(deltas)):
            cell_cfg = DetectorConfig(
                delta=delta, omega_s=cfg.omega_s, eta_s=cfg.eta_s, ell_s=cfg.ell_s,
                adapt_policy=cfg.adapt_policy, cv_max=cfg.cv_max, floor_lux=cfg.floor_lux,
            )
            row[delta] = score_corpus(traces, cell_cfg, horizon_s)
        table[label] = row
    return table


def unlabeled_sessions(corpus: Iterable[Trace]) -> List[str]:
    return [trace.meta.session_id for trace in corpus if trace.meta.departure_t is None]
