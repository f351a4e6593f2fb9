"""Injected time source.

Timestamps are integer seconds everywhere, which keeps freshness-window
boundary arithmetic exact.
"""

from __future__ import annotations

import time


class Clock:
    def now(self) -> int:
        raise NotImplementedError


class SystemClock(Clock):
    def now(self) -> int:
        return int(time.time())


class ManualClock(Clock):
    """Settable clock for tests and replayable sessions."""

    def __init__(self, start: int = 1_700_000_000):
        self._now = int(start)

    def now(self) -> int:
        return self._now

    def set(self, t: int) -> None:
        self._now = int(t)

    def advance(self, seconds: int) -> None:
        self._now += int(seconds)
