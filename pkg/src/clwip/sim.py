"""Discrete-event engine: integer-microsecond clock, event heap, seeded RNG streams."""

from __future__ import annotations

import heapq
import random
from enum import IntEnum
from typing import Any, Callable

import numpy as np

US_PER_MS = 1_000
US_PER_S = 1_000_000


def seconds(s: float) -> int:
    """Convert seconds to simulator ticks (µs)."""
    return int(round(s * US_PER_S))


def ms(x: float) -> int:
    return int(round(x * US_PER_MS))


class SchedulingError(ValueError):
    """Raised when an event is scheduled before the current clock."""


class Stream(IntEnum):
    """One RNG stream per stochastic subsystem."""

    WIFI_BACKOFF = 1
    CHANNEL_ERROR = 2
    TRAFFIC = 3
    SCHEDULER = 4
    PLACEMENT = 5


class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Streams with different ids draw from independent generators, so a change
    in how much one subsystem consumes never shifts another subsystem's draws.
    """

    __slots__ = ("seed", "stream_id", "_rng", "random")

    def __init__(self, seed: int, stream_id: int):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        state = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, self.stream_id]).generate_state(2)
        self._rng = random.Random(int(state[0]) << 32 | int(state[1]))
        self.random = self._rng.random

    def uniform(self, lo: float, hi: float) -> float:
        return draw_uniform(self, lo, hi)

    def randint(self, lo: int, hi: int) -> int:
        """Integer uniform on the closed range [lo, hi]."""
        return self._rng.randint(lo, hi)

    def expovariate(self, rate: float) -> float:
        return self._rng.expovariate(rate)

    def lognormvariate(self, mu: float, sigma: float) -> float:
        return self._rng.lognormvariate(mu, sigma)


def draw_uniform(stream: RngStream, lo: float, hi: float) -> float:
    """Draw from [lo, hi) on ``stream``."""
    if not lo < hi:
        raise ValueError(f"draw_uniform requires lo < hi, got lo={lo}, hi={hi}")
    value = lo + (hi - lo) * stream.random()
    # guard the half-open interval against rounding up to hi
    return value if value < hi else lo


class EventHandle:
    __slots__ = ("fire_at", "sequence", "action", "args", "cancelled")

    def __init__(self, fire_at: int, sequence: int, action: Callable, args: tuple):
        self.fire_at = fire_at
        self.sequence = sequence
        self.action = action
        self.args = args
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True

    def __lt__(self, other: EventHandle) -> bool:
        return (self.fire_at, self.sequence) < (other.fire_at, other.sequence)


class Simulator:
    """Single-threaded event loop.

    Events fire in ``(fire_at, sequence)`` order; ``sequence`` is issued at
    scheduling time so same-time events dispatch in scheduling order.
    """

    def __init__(self, seed: int = 0, trace: bool = False):
        self.now = 0
        self.seed = seed
        self._heap: list[tuple[int, int, EventHandle]] = []
        self._sequence = 0
        self._streams: dict[int, RngStream] = {}
        self.dispatched = 0
        self.trace: list[tuple[int, int, str]] | None = [] if trace else None

    def schedule(self, fire_at: int, action: Callable, *args: Any) -> EventHandle:
        if fire_at < self.now:
            raise SchedulingError(f"cannot schedule at t={fire_at} µs, clock is at {self.now} µs")
        handle = EventHandle(fire_at, self._sequence, action, args)
        heapq.heappush(self._heap, (fire_at, self._sequence, handle))
        self._sequence += 1
        return handle

    def schedule_in(self, delay: int, action: Callable, *args: Any) -> EventHandle:
        return self.schedule(self.now + delay, action, *args)

    def run_until(self, t_end: int) -> int:
        """Dispatch every event with ``fire_at <= t_end``; leave the clock at ``t_end``."""
        heap = self._heap
        count = 0
        trace = self.trace
        while heap and heap[0][0] <= t_end:
            fire_at, seq, handle = heapq.heappop(heap)
            if handle.cancelled:
                continue
            self.now = fire_at
            if trace is not None:
                trace.append((fire_at, seq, getattr(handle.action, "__qualname__", repr(handle.action))))
            handle.action(*handle.args)
            count += 1
        self.now = max(self.now, t_end)
        self.dispatched += count
        return count

    def pending(self) -> int:
        return sum(1 for _, _, h in self._heap if not h.cancelled)

    def rng(self, stream_id: int) -> RngStream:
        stream = self._streams.get(stream_id)
        if stream is None:
            stream = self._streams[stream_id] = RngStream(self.seed, stream_id)
        return stream
