"""Clocks for the turn engine: real time and deterministic virtual time.

Everything in the engine that waits, sleeps, or schedules goes through a
``Clock`` so the same orchestration code runs against wall time in
production and against a virtual timeline in tests, where a ten-second
backend stall costs nothing and every timestamp is exact.

``VirtualClock`` is a single-threaded discrete-event scheduler: time only
moves when someone sleeps or waits, and moving time fires any callbacks
scheduled in the crossed interval, in timestamp order.  ``WallClock`` maps
the same operations onto ``time.monotonic``, ``time.sleep``,
``threading.Timer`` and condition-variable waits.
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time
from typing import Callable, Protocol


class VirtualTimeDeadlock(Exception):
    """A virtual-time wait can never be satisfied: nothing is scheduled."""


class Clock(Protocol):
    """Time source plus scheduling and waiting capabilities."""

    def now(self) -> float:
        """Seconds on this clock's timeline (monotone non-decreasing)."""
        ...

    def sleep(self, duration: float) -> None:
        """Block the caller for ``duration`` seconds of this timeline."""
        ...

    def call_at(self, when: float, fn: Callable[[], None]) -> None:
        """Schedule ``fn`` to run at absolute time ``when``."""
        ...

    def wait_for(
        self,
        cond: threading.Condition,
        predicate: Callable[[], bool],
        deadline: float | None,
    ) -> bool:
        """Block until ``predicate()`` is true or ``deadline`` passes.

        Returns the final value of the predicate.  ``deadline`` is absolute;
        ``None`` means wait indefinitely.
        """
        ...


class VirtualClock:
    """Deterministic simulated time for scripted runs.

    Not thread-safe by design: a virtual timeline has exactly one driver.
    Scheduled callbacks fire synchronously inside :meth:`sleep` /
    :meth:`wait_for`, with ``now()`` set to their scheduled time, so
    producers stamped off ``now()`` observe exact arrival times.
    """

    def __init__(self, start: float = 0.0) -> None:
        self._now = start
        self._timers: list[tuple[float, int, Callable[[], None]]] = []
        self._tiebreak = itertools.count()

    def now(self) -> float:
        return self._now

    def call_at(self, when: float, fn: Callable[[], None]) -> None:
        heapq.heappush(self._timers, (max(when, self._now), next(self._tiebreak), fn))

    def _fire_next(self) -> None:
        when, _, fn = heapq.heappop(self._timers)
        self._now = when
        fn()

    def sleep(self, duration: float) -> None:
        if duration < 0:
            raise ValueError("cannot sleep a negative duration")
        target = self._now + duration
        while self._timers and self._timers[0][0] <= target:
            self._fire_next()
        self._now = target

    def wait_for(
        self,
        cond: threading.Condition,
        predicate: Callable[[], bool],
        deadline: float | None,
    ) -> bool:
        # The condition variable is unused: virtual runs are single-threaded
        # and "waiting" means advancing time through scheduled callbacks.
        while not predicate():
            if not self._timers:
                if deadline is None:
                    raise VirtualTimeDeadlock(
                        "waiting with no deadline and nothing scheduled"
                    )
                self._now = max(self._now, deadline)
                return predicate()
            if deadline is not None and self._timers[0][0] > deadline:
                self._now = max(self._now, deadline)
                return predicate()
            self._fire_next()
        return True

    def run_until_idle(self) -> None:
        """Fire every scheduled callback in order (test convenience)."""
        while self._timers:
            self._fire_next()


class WallClock:
    """Real time.  ``now()`` is ``time.monotonic`` offset to start near 0."""

    def __init__(self) -> None:
        self._origin = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._origin

    def sleep(self, duration: float) -> None:
        if duration > 0:
            time.sleep(duration)

    def call_at(self, when: float, fn: Callable[[], None]) -> None:
        timer = threading.Timer(max(0.0, when - self.now()), fn)
        timer.daemon = True
        timer.start()

    def wait_for(
        self,
        cond: threading.Condition,
        predicate: Callable[[], bool],
        deadline: float | None,
    ) -> bool:
        with cond:
            while not predicate():
                if deadline is None:
                    cond.wait()
                    continue
                remaining = deadline - self.now()
                if remaining <= 0:
                    return predicate()
                cond.wait(timeout=remaining)
            return True
