"""
Background monitoring: a producer thread polls the source and hands readings
to the detector over a bounded queue.
"""

import logging
import queue
import threading
from dataclasses import dataclass
from typing import Iterator, Optional

from ..config.constants import DEFAULT_QUEUE_SIZE
from ..config.settings import log_event
from .actions import ActionHook
from .detector import AdaptPolicy, Detector, DetectorConfig, EventKind
from .errors import ConsumerTooSlow, DealError
from .sources import Source, StreamGap, StreamItem, probe_frequency

logger = logging.getLogger(__name__)

# how long the consumer waits on an empty queue before checking the producer again
_GET_TIMEOUT_S = 0.1


class SensorMonitor:
    """Run a source on a daemon thread and deliver its items in order."""

    def __init__(self, source: Source, queue_size: int = DEFAULT_QUEUE_SIZE):
        self.source = source
        self.queue = queue.Queue(maxsize=queue_size)
        # a live sensor cannot be paused, so a full queue is fatal instead of blocking
        self.live = getattr(source, "is_live", False)
        self.is_running = False
        self.error: Optional[DealError] = None
        self.monitor_thread = None
        self.discarded = 0
        self._finished = threading.Event()
        self._lock = threading.Lock()
        self._paused = False
        # bumped by pause() and resume(); a reading taken in an older epoch is stale
        self._epoch = 0

    def _put(self, item, epoch):
        if self.live:
            with self._lock:
                if self._paused or epoch != self._epoch:
                    self.discarded += 1
                    return
                try:
                    self.queue.put_nowait(item)
                except queue.Full:
                    at = item.at if isinstance(item, StreamGap) else item.t
                    raise ConsumerTooSlow(
                        f"detector fell {self.queue.maxsize} readings behind the source at t={at:.3f}"
                    ) from None
            return
        while self.is_running:
            try:
                self.queue.put(item, timeout=_GET_TIMEOUT_S)
                return
            except queue.Full:
                continue

    def _produce(self):
        try:
            while self.is_running:
                epoch = self._epoch
                item = self.source.next_reading()
                if item is None:
                    logger.info("source exhausted")
                    break
                self._put(item, epoch)
        except DealError as exc:
            logger.error("source stopped: %s", exc)
            self.error = exc
        finally:
            self.is_running = False
            self._finished.set()

    def pause(self):
        """Discard live readings until resume(). Replays keep their timeline."""
        if not self.live:
            return
        with self._lock:
            self._paused = True
            self._epoch += 1

    def resume(self) -> int:
        """Drop readings queued before or during the pause; return how many were lost."""
        if not self.live:
            return 0
        with self._lock:
            drained = 0
            while True:
                try:
                    self.queue.get_nowait()
                except queue.Empty:
                    break
                drained += 1
            self.discarded += drained
            lost, self.discarded = self.discarded, 0
            self._paused = False
            self._epoch += 1
        return lost

    def start_monitoring(self):
        """Start polling the source in a separate thread."""
        if not self.is_running:
            self.is_running = True
            self._finished.clear()
            self.monitor_thread = threading.Thread(target=self._produce, name="deal-source")
            self.monitor_thread.daemon = True
            self.monitor_thread.start()

    def stop_monitoring(self):
        self.is_running = False
        if self.monitor_thread and self.monitor_thread.is_alive():
            self.monitor_thread.join(timeout=1)

    def items(self) -> Iterator[StreamItem]:
        """Yield queued items until the producer finishes; re-raise its error."""
        while True:
            if self.error is not None:
                raise self.error
            try:
                item = self.queue.get(timeout=_GET_TIMEOUT_S)
            except queue.Empty:
                if self._finished.is_set() and self.queue.empty():
                    break
                continue
            yield item
        if self.error is not None:
            raise self.error


@dataclass
class MonitorStats:
    readings: int = 0
    deauths: int = 0
    gaps: int = 0
    adaptations: int = 0
    # live readings discarded while the action command ran
    dropped: int = 0


def run_monitor(source: Source, config: DetectorConfig, hook: ActionHook,
                queue_size: int = DEFAULT_QUEUE_SIZE,
                stop: Optional[threading.Event] = None) -> MonitorStats:
    """
    Feed the source through a detector until it ends or `stop` is set.

    Each de-authentication fires the hook once; the detector is re-armed when
    the hook returns. Live readings taken while the hook runs are dropped, so the
    queue cannot overflow behind a blocking lock command. A stream gap re-warms
    the detector.
    """
    f = probe_frequency(source)
    detector = Detector(config, f)
    stats = MonitorStats()
    monitor = SensorMonitor(source, queue_size)
    logger.info("monitoring at %s Hz (delta=%s omega=%ss eta=%ss ell=%ss policy=%s)",
                f, config.delta, config.omega_s, config.eta_s, config.ell_s,
                AdaptPolicy(config.adapt_policy).value)
    monitor.start_monitoring()
    try:
        for item in monitor.items():
            if stop is not None and stop.is_set():
                break
            if isinstance(item, StreamGap):
                stats.gaps += 1
                log_event("STREAM_GAP", item.at, f"{item.gap_s:.3f}s", logging.WARNING)
                detector.rewarm()
                continue
            stats.readings += 1
            event = detector.feed(item)
            if event.kind is EventKind.OUTLIER:
                log_event("OUTLIER", event.at, item.lux, logging.DEBUG)
            elif event.kind is EventKind.WAVE_RESET:
                log_event("WAVE_RESET", event.at)
            elif event.kind is EventKind.ADAPTED:
                stats.adaptations += 1
                log_event("ADAPTED", event.at, f"{event.detail:.3f}")
            elif event.kind is EventKind.DEAUTHENTICATE:
                stats.deauths += 1
                log_event("DEAUTH", event.at)
                monitor.pause()
                try:
                    hook.fire(event.at)
                finally:
                    stats.dropped += monitor.resume()
                # warm up again on readings taken after the action returned
                detector.rearm()
                log_event("REARM", event.at)
    finally:
        monitor.stop_monitoring()
    return stats
