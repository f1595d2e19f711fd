"""Sliding-window request limiter and a virtual clock for tests."""
from __future__ import annotations

import threading
import time
from collections import deque


class SlidingWindowLimiter:
    """At most ``limit`` grants in any ``window`` seconds.

    ``clock`` and ``sleep`` are injectable; every grant time is kept in
    ``history`` so callers can audit the schedule afterwards.
    """

    def __init__(self, limit: int, window: float = 60.0, clock=time.monotonic, sleep=time.sleep):
        if limit < 1:
            raise ValueError("limit must be >= 1")
        self.limit = limit
        self.window = window
        self.clock = clock
        self.sleep = sleep
        self._recent: deque = deque()
        self._lock = threading.Lock()
        self.history: list[float] = []

    def acquire(self) -> float:
        # holding the lock while sleeping serializes waiters, which is what we want
        with self._lock:
            while True:
                now = self.clock()
                # compare against the same sum the sleep below targets so
                # float rounding cannot leave a slot looking unexpired forever
                while self._recent and self._recent[0] + self.window <= now:
                    self._recent.popleft()
                if len(self._recent) < self.limit:
                    self._recent.append(now)
                    self.history.append(now)
                    return now
                self.sleep(self._recent[0] + self.window - now)


def max_in_window(times, window: float = 60.0) -> int:
    """Largest number of timestamps inside any window (t - window, t]."""
    ts = sorted(times)
    best, j = 0, 0
    for i, t in enumerate(ts):
        while ts[j] + window <= t:
            j += 1
        best = max(best, i - j + 1)
    return best


class VirtualClock:
    """Monotonic clock whose ``sleep`` advances time instantly."""

    def __init__(self, start: float = 0.0):
        self._now = start
        self._lock = threading.Lock()
        self.slept: list[float] = []

    def __call__(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        with self._lock:
            self.slept.append(seconds)
            self._now += max(0.0, seconds)
