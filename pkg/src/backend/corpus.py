"""
Labeled trace files (format "deal-trace-1").

A trace file is plain text: header lines of the form "# key=value" followed
by one "t,lux" line per reading. Required headers are session_id, position
and f; departure_t and tag.<key> headers are optional. Numbers are written
with repr() so a read/write cycle reproduces the file byte for byte.

    # format=deal-trace-1
    # session_id=P1-0001
    # position=P1
    # f=10.0
    # departure_t=20.0
    # tag.height_class=tall
    0.0,40.31
    0.1,39.87
"""

import io
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

from ..config.constants import POSITIONS, SPACING_TOLERANCE, TRACE_FORMAT, TRACE_SUFFIX
from .detector import Reading
from .errors import (
    DealError,
    InvalidTrace,
    IoFailure,
    MissingFrequency,
    NonMonotonicTimestamps,
    ParseError,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


@dataclass(frozen=True)
class TraceMeta:
    session_id: str
    position: str
    f: float
    departure_t: Optional[float] = None
    tags: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Trace:
    meta: TraceMeta
    readings: Tuple[Reading, ...]

    @property
    def duration(self) -> float:
        if not self.readings:
            return 0.0
        return self.readings[-1].t - self.readings[0].t


class CorpusFileError(NamedTuple):
    path: str
    error: DealError


class CorpusLoad(NamedTuple):
    traces: List[Trace]
    errors: List[CorpusFileError]


def _check_header_text(name, value):
    if "\n" in value or "\r" in value:
        raise InvalidTrace(f"{name} must not contain line breaks")
    if value != value.strip():
        raise InvalidTrace(f"{name} must not start or end with whitespace")


def validate_trace(trace: Trace) -> Trace:
    """Check the Trace and TraceMeta invariants; return the trace unchanged."""
    meta = trace.meta
    if not meta.session_id:
        raise InvalidTrace("session_id must not be empty")
    _check_header_text("session_id", meta.session_id)
    if meta.session_id in (".", "..") or any(sep in meta.session_id for sep in ("/", "\\")):
        raise InvalidTrace(f"session_id must be usable as a file name, got {meta.session_id!r}")
    if meta.position not in POSITIONS:
        raise InvalidTrace(f"position must be one of {', '.join(POSITIONS)}, got {meta.position!r}")
    if not (isinstance(meta.f, (int, float)) and meta.f > 0 and math.isfinite(meta.f)):
        raise InvalidTrace(f"f must be a positive frequency, got {meta.f!r}")
    for key, value in meta.tags.items():
        if not key or "=" in key or any(c.isspace() for c in key):
            raise InvalidTrace(f"invalid tag key {key!r}")
        if not isinstance(value, str):
            raise InvalidTrace(f"tag {key} must be a string, got {value!r}")
        _check_header_text(f"tag {key}", value)
    if not trace.readings:
        raise InvalidTrace(f"trace {meta.session_id} has no readings")
    previous = None
    for index, (t, lux) in enumerate(trace.readings):
        if not (math.isfinite(t) and t >= 0):
            raise InvalidTrace(f"reading {index}: t must be a non-negative number, got {t!r}")
        if not (math.isfinite(lux) and lux >= 0):
            raise InvalidTrace(f"reading {index}: lux must be a non-negative number, got {lux!r}")
        if previous is not None and not t > previous:
            raise NonMonotonicTimestamps(f"reading {index}: t={t!r} does not follow t={previous!r}")
        previous = t
    if meta.departure_t is not None:
        first, last = trace.readings[0].t, trace.readings[-1].t
        if not first <= meta.departure_t <= last:
            raise InvalidTrace(
                f"departure_t={meta.departure_t!r} lies outside the trace span [{first!r}, {last!r}]"
            )
    return trace


def spacing_violations(trace: Trace, tolerance: float = SPACING_TOLERANCE) -> List[int]:
    """Indices i whose spacing t[i] - t[i-1] deviates from 1/f by more than tolerance."""
    period = 1.0 / trace.meta.f
    bad = []
    for i in range(1, len(trace.readings)):
        gap = trace.readings[i].t - trace.readings[i - 1].t
        if abs(gap - period) > tolerance * period:
            bad.append(i)
    return bad


def render_trace(trace: Trace) -> str:
    validate_trace(trace)
    meta = trace.meta
    lines = [
        f"# format={TRACE_FORMAT}",
        f"# session_id={meta.session_id}",
        f"# position={meta.position}",
        f"# f={float(meta.f)!r}",
    ]
    if meta.departure_t is not None:
        lines.append(f"# departure_t={float(meta.departure_t)!r}")
    for key in sorted(meta.tags):
        lines.append(f"# tag.{key}={meta.tags[key]}")
    for t, lux in trace.readings:
        lines.append(f"{float(t)!r},{float(lux)!r}")
    return "\n".join(lines) + "\n"


def write_trace(trace: Trace, destination) -> None:
    """Write a trace to a path or an open text stream."""
    text = render_trace(trace)
    if hasattr(destination, "write"):
        destination.write(text)
        return
    try:
        with open(destination, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write trace to {destination}: {exc}") from exc


def _parse_float(text, what, line, source):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{what} is not a number: {text!r}", line, source) from None
    if not math.isfinite(value):
        raise ParseError(f"{what} must be finite, got {text!r}", line, source)
    return value


def parse_trace(text: str, source: Optional[str] = None) -> Trace:
    headers = {}
    tags = {}
    readings = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if readings:
                raise ParseError("header line after data", line_no, source)
            body = line[1:].strip()
            if "=" not in body:
                raise ParseError(f"malformed header {raw!r}", line_no, source)
            key, value = body.split("=", 1)
            key = key.strip()
            if key.startswith("tag."):
                tags[key[4:]] = value
            elif key in ("format", "session_id", "position", "f", "departure_t"):
                if key in headers:
                    raise ParseError(f"duplicate header {key!r}", line_no, source)
                headers[key] = (value, line_no)
            else:
                raise ParseError(f"unknown header {key!r}", line_no, source)
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"expected 't,lux', got {raw!r}", line_no, source)
        t = _parse_float(parts[0], "t", line_no, source)
        lux = _parse_float(parts[1], "lux", line_no, source)
        if t < 0:
            raise ParseError(f"t must be non-negative, got {t!r}", line_no, source)
        if lux < 0:
            raise ParseError(f"lux must be non-negative, got {lux!r}", line_no, source)
        if readings and not t > readings[-1].t:
            raise NonMonotonicTimestamps(
                f"t={t!r} does not follow t={readings[-1].t!r}", line_no, source
            )
        readings.append(Reading(t, lux))

    if "format" in headers and headers["format"][0] != TRACE_FORMAT:
        value, line_no = headers["format"]
        raise ParseError(f"unsupported format {value!r}, expected {TRACE_FORMAT}", line_no, source)
    if "f" not in headers:
        raise MissingFrequency("missing '# f=' header", None, source)
    for required in ("session_id", "position"):
        if required not in headers:
            raise ParseError(f"missing '# {required}=' header", None, source)

    f_text, f_line = headers["f"]
    f = _parse_float(f_text, "f", f_line, source)
    if f <= 0:
        raise ParseError(f"f must be > 0, got {f!r}", f_line, source)
    departure_t = None
    if "departure_t" in headers:
        dep_text, dep_line = headers["departure_t"]
        departure_t = _parse_float(dep_text, "departure_t", dep_line, source)

    meta = TraceMeta(
        session_id=headers["session_id"][0],
        position=headers["position"][0],
        f=f,
        departure_t=departure_t,
        tags=dict(sorted(tags.items())),
    )
    trace = Trace(meta=meta, readings=tuple(readings))
    try:
        validate_trace(trace)
    except NonMonotonicTimestamps:
        raise
    except InvalidTrace as exc:
        raise ParseError(str(exc), None, source) from exc
    return trace


def read_trace(source) -> Trace:
    """Read a trace from a path or an open text stream."""
    name = getattr(source, "name", None) if hasattr(source, "read") else str(source)
    try:
        if hasattr(source, "read"):
            text = source.read()
        else:
            with open(source, "r", encoding="utf-8") as handle:
                text = handle.read()
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8 text: {exc.reason} at byte {exc.start}", None, name) from exc
    except OSError as exc:
        raise IoFailure(f"cannot read trace {source}: {exc}") from exc
    trace = parse_trace(text, name)
    bad = spacing_violations(trace)
    if bad:
        logger.warning("%s: %d sample gaps deviate more than %d%% from 1/f (first at index %d)",
                       name or trace.meta.session_id, len(bad), int(SPACING_TOLERANCE * 100), bad[0])
    return trace


def load_corpus(directory: PathLike) -> CorpusLoad:
    """Load every *.trace file in a directory, sorted by session id."""
    root = Path(directory)
    if not root.is_dir():
        raise IoFailure(f"corpus directory not found: {root}")
    traces = []
    errors = []
    seen = {}
    for path in sorted(root.glob(f"*{TRACE_SUFFIX}")):
        try:
            trace = read_trace(path)
        except DealError as exc:
            logger.warning("skipping malformed trace %s: %s", path, exc)
            errors.append(CorpusFileError(str(path), exc))
            continue
        session_id = trace.meta.session_id
        if session_id in seen:
            exc = InvalidTrace(f"duplicate session_id {session_id!r} (also in {seen[session_id]})")
            logger.warning("skipping %s: %s", path, exc)
            errors.append(CorpusFileError(str(path), exc))
            continue
        seen[session_id] = str(path)
        traces.append(trace)
    traces.sort(key=lambda trace: trace.meta.session_id)
    return CorpusLoad(traces, errors)


def save_corpus(traces: Sequence[Trace], directory: PathLike) -> List[Path]:
    root = Path(directory)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create corpus directory {root}: {exc}") from exc
    written = []
    for trace in traces:
        path = root / f"{trace.meta.session_id}{TRACE_SUFFIX}"
        write_trace(trace, path)
        written.append(path)
    return written


def dumps(trace: Trace) -> bytes:
    """The exact bytes write_trace produces for this trace."""
    buffer = io.StringIO()
    write_trace(trace, buffer)
    return buffer.getvalue().encode("utf-8")
