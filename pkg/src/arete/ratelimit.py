"""Sliding-window request limiter shared by the HTTP clients."""

from __future__ import annotations

import threading
import time
from collections import deque


class Clock:
    """Wall clock; tests substitute a fake with the same two methods."""

    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class SlidingWindowLimiter:
    """Allow at most ``max_requests`` dispatches in any ``window`` seconds.

    The lock is held while waiting, so concurrent callers are dispatched one
    at a time in arrival order.
    """

    # keeps a dispatch exactly one window after another out of a closed window
    _EPSILON = 1e-3

    def __init__(self, max_requests: int, window: float = 60.0, clock: Clock | None = None):
        if max_requests < 1:
            raise ValueError("max_requests must be >= 1")
        if window <= 0:
            raise ValueError("window must be positive")
        self.max_requests = max_requests
        self.window = window
        self.clock = clock or Clock()
        self._sent: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        """Block until a request may be sent; returns the dispatch time."""
        with self._lock:
            while True:
                now = self.clock.now()
                while self._sent and now - self._sent[0] > self.window:
                    self._sent.popleft()
                if len(self._sent) < self.max_requests:
                    self._sent.append(now)
                    return now
                self.clock.sleep(self._sent[0] + self.window + self._EPSILON - now)
