"""
Text helpers for command output.
"""

from typing import Dict, Iterable, Mapping

from src.backend.detector import DetectorEvent, EventKind
from src.config.constants import EVENT_NAMES


def format_event(event: DetectorEvent) -> str:
    """One replay line, e.g. 't=24.400 DEAUTH' or 't=9.000 ADAPTED detail=150.000'."""
    line = f"t={event.at:.3f} {EVENT_NAMES[EventKind(event.kind).value]}"
    if event.detail is not None:
        line += f" detail={event.detail:.3f}"
    return line


def format_counts(counts: Mapping[str, int]) -> str:
    return ", ".join(f"{key}={counts[key]}" for key in sorted(counts))


def parse_tags(pairs: Iterable[str]) -> Dict[str, str]:
    """Turn ('k=v', ...) into a dict; raises ValueError on a pair without '='."""
    tags = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ValueError(f"expected key=value, got {pair!r}")
        tags[key] = value.strip()
    return tags
