"""
Exception hierarchy for the de-authentication toolkit.

Every error raised on purpose by the backend derives from DealError so the
command line can map it to an exit code in one place.
"""


class DealError(Exception):
    """Base class for all toolkit errors."""


# --- Configuration ---

class ConfigError(DealError, ValueError):
    """Invalid detector, source or application configuration."""


class NonPositiveParam(ConfigError):
    pass


class EtaExceedsEll(ConfigError):
    """eta_s > ell_s: eta seconds of consecutive outliers can never fit inside ell seconds."""


class UnknownPolicy(ConfigError):
    pass


class FrequencyTooLow(ConfigError):
    """The window or the outlier run truncates to zero samples at this frequency."""


class ConfigFileError(ConfigError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidSourceConfig(ConfigError):
    pass


# --- Detector ---

class DetectorError(DealError):
    pass


class OutOfOrderReading(DetectorError):
    pass


class InvalidReading(DetectorError):
    pass


class NotDeauthed(DetectorError):
    pass


# --- Traces and corpora ---

class TraceError(DealError):
    pass


class ParseError(TraceError):
    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        prefix = ""
        if source is not None:
            prefix += f"{source}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class NonMonotonicTimestamps(ParseError):
    pass


class MissingFrequency(ParseError):
    pass


class InvalidTrace(TraceError):
    pass


class IoFailure(TraceError):
    pass


# --- Synthetic generation ---

class InvalidSpec(DealError, ValueError):
    pass


# --- Evaluation ---

class EvalError(DealError):
    pass


class MissingLabel(EvalError):
    pass


class MissingMetaKey(EvalError):
    def __init__(self, key, session_ids):
        self.key = key
        self.session_ids = tuple(session_ids)
        shown = ", ".join(self.session_ids[:10])
        more = "" if len(self.session_ids) <= 10 else f" (+{len(self.session_ids) - 10} more)"
        super().__init__(f"sessions without '{key}': {shown}{more}")


# --- Sources and monitoring ---

class SourceError(DealError):
    pass


class SourceUnavailable(SourceError):
    pass


class ReadFailure(SourceError):
    pass


class ConsumerTooSlow(SourceError):
    """The detector fell behind a live source; dropping samples is not allowed."""


class ActionError(DealError):
    pass
