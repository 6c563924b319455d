"""
Runtime settings: application paths, the key = value config file, and logging.
"""

import logging
import math
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, Mapping, Optional

from ..backend.detector import AdaptPolicy, DetectorConfig, validate_config
from ..backend.errors import ConfigError, ConfigFileError, UnknownPolicy
from ..backend.sources import SourceConfig, SourceKind, validate_source_config
from .constants import DEFAULT_POLL_HZ, DEFAULT_QUEUE_SIZE

APP_NAME = "deal"
CONFIG_ENV_VAR = "DEAL_CONFIG"
EVENT_LOGGER_NAME = "deal.events"


def get_application_paths():
    """Get application paths based on whether we're running as executable or script."""
    if getattr(sys, 'frozen', False):
        # PyInstaller build: keep corpora and reports in the user's data directory
        data_home = os.environ.get("XDG_DATA_HOME") or os.path.join(os.path.expanduser("~"), ".local", "share")
        app_dir = os.path.join(data_home, APP_NAME)
        return {
            'DATA_DIR': os.path.join(app_dir, "data"),
            'REPORTS_DIR': os.path.join(app_dir, "reports"),
            'PROJECT_ROOT': app_dir,
        }
    settings_dir = os.path.dirname(os.path.abspath(__file__))
    project_root = os.path.dirname(os.path.dirname(settings_dir))
    return {
        'DATA_DIR': os.path.join(project_root, "data"),
        'REPORTS_DIR': os.path.join(project_root, "reports"),
        'PROJECT_ROOT': project_root,
    }


paths = get_application_paths()
DATA_DIR = paths['DATA_DIR']
REPORTS_DIR = paths['REPORTS_DIR']
PROJECT_ROOT = paths['PROJECT_ROOT']
CORPUS_DIR = os.path.join(DATA_DIR, "corpus")


def ensure_directories(*directories):
    """Create the given directories (default: data and reports) if missing."""
    for directory in directories or (DATA_DIR, REPORTS_DIR):
        if directory and not os.path.isdir(directory):
            os.makedirs(directory, exist_ok=True)
            logging.getLogger(__name__).info("created directory %s", directory)


# --- Config file ---

def _as_int(text):
    return int(text)


def _as_float(text):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"{text!r} is not finite")
    return value


def _as_bool(text):
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _as_text(text):
    return text


CONFIG_KEYS = {
    "detector.delta": _as_int,
    "detector.omega_s": _as_float,
    "detector.eta_s": _as_float,
    "detector.ell_s": _as_float,
    "detector.adapt_policy": _as_text,
    "detector.cv_max": _as_float,
    "detector.floor_lux": _as_float,
    "source.kind": _as_text,
    "source.path": _as_text,
    "source.poll_hz": _as_float,
    "source.speed": _as_float,
    "source.scale": _as_float,
    "monitor.queue_size": _as_int,
    "action_command": _as_text,
    "dry_run": _as_bool,
    "log_path": _as_text,
}


def parse_config_text(text: str, keys: Mapping[str, Any] = CONFIG_KEYS) -> Dict[str, Any]:
    """Parse 'key = value' lines; '#' starts a comment line."""
    values = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigFileError(f"expected 'key = value', got {raw!r}", line_no)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in keys:
            raise ConfigFileError(f"unknown key {key!r}", line_no)
        if key in values:
            raise ConfigFileError(f"duplicate key {key!r}", line_no)
        try:
            values[key] = keys[key](value)
        except ValueError as exc:
            raise ConfigFileError(f"bad value for {key}: {exc}", line_no) from None
    return values


def resolve_config_path(explicit: Optional[str] = None) -> Optional[str]:
    return explicit or os.environ.get(CONFIG_ENV_VAR) or None


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigFileError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text)


# keys of a corpus generation file (deal generate --spec FILE)
GENERATION_KEYS = {
    "per_position": _as_int,
    "seed": _as_int,
    "preset": _as_text,
    "hz": _as_float,
    "noise_fraction": _as_float,
    "magnitude_min": _as_float,
    "magnitude_max": _as_float,
    "movement_min_s": _as_float,
    "movement_max_s": _as_float,
    "sit_min_s": _as_float,
    "sit_max_s": _as_float,
}


def load_generation_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigFileError(f"cannot read generation spec {path}: {exc}") from exc
    return parse_config_text(text, GENERATION_KEYS)


@dataclass(frozen=True)
class AppConfig:
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    source: Optional[SourceConfig] = None
    action_command: str = ""
    dry_run: bool = False
    log_path: Optional[str] = None
    queue_size: int = DEFAULT_QUEUE_SIZE


def build_app_config(file_values: Mapping[str, Any],
                     overrides: Optional[Mapping[str, Any]] = None) -> AppConfig:
    """Layer defaults < config file < flag overrides (None means 'not given')."""
    merged = dict(file_values)
    for key, value in (overrides or {}).items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown setting {key!r}")
        if value is not None:
            merged[key] = value

    defaults = DetectorConfig()
    policy = merged.get("detector.adapt_policy", defaults.adapt_policy)
    try:
        policy = AdaptPolicy(policy)
    except ValueError:
        raise UnknownPolicy(f"unknown adapt policy {policy!r}") from None
    detector = DetectorConfig(
        delta=merged.get("detector.delta", defaults.delta),
        omega_s=merged.get("detector.omega_s", defaults.omega_s),
        eta_s=merged.get("detector.eta_s", defaults.eta_s),
        ell_s=merged.get("detector.ell_s", defaults.ell_s),
        adapt_policy=policy,
        cv_max=merged.get("detector.cv_max", defaults.cv_max),
        floor_lux=merged.get("detector.floor_lux", defaults.floor_lux),
    )

    source = None
    if "source.path" in merged or "source.kind" in merged:
        source = SourceConfig(
            kind=merged.get("source.kind", SourceKind.LIVE.value),
            path=merged.get("source.path", ""),
            poll_hz=merged.get("source.poll_hz", DEFAULT_POLL_HZ),
            speed=merged.get("source.speed", 0.0),
            scale=merged.get("source.scale", 1.0),
        )

    return AppConfig(
        detector=detector,
        source=source,
        action_command=merged.get("action_command", ""),
        dry_run=bool(merged.get("dry_run", False)),
        log_path=merged.get("log_path"),
        queue_size=merged.get("monitor.queue_size", DEFAULT_QUEUE_SIZE),
    )


def validate_app_config(config: AppConfig, for_monitor: bool = False) -> AppConfig:
    validate_config(config.detector)
    if config.source is not None:
        validate_source_config(config.source)
    if config.queue_size < 1:
        raise ConfigError(f"monitor.queue_size must be >= 1, got {config.queue_size}")
    if for_monitor:
        if config.source is None:
            raise ConfigError("monitor needs a source (source.path)")
        if not config.action_command.strip() and not config.dry_run:
            raise ConfigError("action_command must be set unless dry_run is on")
    return config


# --- Logging ---

class AuditFormatter(logging.Formatter):
    """
    One line per record.

    Detector and action events (records carrying an `event` attribute):
        2024-05-01T10:00:00.123+02:00 | DEAUTH | t=24.400 | detail=-
    Everything else:
        2024-05-01T10:00:00.123+02:00 | WARNING | deal.sources | message
    """

    def format(self, record):
        stamp = datetime.fromtimestamp(record.created, timezone.utc).astimezone()
        stamp = stamp.isoformat(timespec="milliseconds")
        event = getattr(record, "event", None)
        if event is not None:
            detail = getattr(record, "detail", None)
            line = f"{stamp} | {event} | t={record.t:.3f} | detail={'-' if detail is None else detail}"
        else:
            line = f"{stamp} | {record.levelname} | {record.name} | {record.getMessage()}"
        if record.exc_info:
            line += "\n" + self.formatException(record.exc_info)
        return line


def log_event(event: str, t: float, detail=None, level: int = logging.INFO):
    logging.getLogger(EVENT_LOGGER_NAME).log(
        level, "%s t=%.3f", event, t, extra={"event": event, "t": t, "detail": detail}
    )


def configure_logging(log_path: Optional[str] = None, verbose: bool = False):
    """Route all records through AuditFormatter to stderr and, optionally, a file."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_deal_handler", False):
            root.removeHandler(handler)
            handler.close()

    handlers = [logging.StreamHandler(sys.stderr)]
    if log_path:
        ensure_directories(os.path.dirname(os.path.abspath(log_path)))
        handlers.append(logging.FileHandler(log_path, encoding="utf-8"))
    formatter = AuditFormatter()
    for handler in handlers:
        handler.setFormatter(formatter)
        handler._deal_handler = True
        root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    return handlers
