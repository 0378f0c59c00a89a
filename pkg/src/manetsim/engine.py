"""Discrete-event core: integer-microsecond clock, event heap, labeled RNG streams."""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass
from typing import Any, Callable

US_PER_S = 1_000_000


def to_us(seconds: float) -> int:
    """Convert seconds to the engine's fixed-point microsecond ticks."""
    return int(round(seconds * US_PER_S))


def to_s(us: int) -> float:
    return us / US_PER_S


def fmt_time(us: int) -> str:
    """Render microsecond ticks as a decimal seconds string, 6 fractional digits."""
    sign = "-" if us < 0 else ""
    q, r = divmod(abs(us), US_PER_S)
    return f"{sign}{q}.{r:06d}"


class SchedulingInPast(ValueError):
    pass


class EventHandle:
    """Returned by :meth:`Engine.schedule`; pass it to :meth:`Engine.cancel`."""

    __slots__ = ("_entry", "fired")

    def __init__(self, entry: list) -> None:
        self._entry = entry
        self.fired = False

    @property
    def fire_at(self) -> int:
        return self._entry[0]

    @property
    def pending(self) -> bool:
        return self._entry[2] is not None and not self.fired


@dataclass
class EngineStats:
    dispatched: int
    cancelled: int
    pending: int
    clock: int


class RandomStream(random.Random):
    """A ``random.Random`` whose seed is derived from (run seed, label)."""

    def __new__(cls, seed: int, label: str):
        return super().__new__(cls)

    def __init__(self, seed: int, label: str) -> None:
        self.label = label
        digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
        super().__init__(int.from_bytes(digest[:16], "big"))


class Engine:
    """Single-threaded event loop.

    Heap entries are ``[fire_at, sequence, callback, args]``; cancelling
    blanks the callback slot so the entry is skipped when popped. The
    sequence counter is global, so ties on ``fire_at`` dispatch in
    schedule-call order.
    """

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed
        self.now = 0
        self._queue: list[list] = []
        self._seq = 0
        self._streams: dict[str, RandomStream] = {}
        self.dispatched = 0
        self.cancelled = 0

    def schedule(self, at: int, callback: Callable[..., Any], *args: Any) -> EventHandle:
        if at < self.now:
            raise SchedulingInPast(f"cannot schedule at {at} us, clock is {self.now} us")
        entry = [at, self._seq, callback, args, None]
        self._seq += 1
        handle = EventHandle(entry)
        entry[4] = handle
        heapq.heappush(self._queue, entry)
        return handle

    def post(self, at: int, callback: Callable[..., Any], *args: Any) -> None:
        """Handle-less fast path for internal events that are never cancelled."""
        if at < self.now:
            raise SchedulingInPast(f"cannot schedule at {at} us, clock is {self.now} us")
        heapq.heappush(self._queue, [at, self._seq, callback, args, None])
        self._seq += 1

    def cancel(self, handle: EventHandle) -> bool:
        entry = handle._entry
        if handle.fired or entry[2] is None:
            return False
        entry[2] = None
        self.cancelled += 1
        return True

    def run(self, until: int) -> EngineStats:
        if until < self.now:
            raise SchedulingInPast(f"run(until={until}) is before clock {self.now}")
        queue = self._queue
        pop = heapq.heappop
        dispatched = 0
        while queue and queue[0][0] <= until:
            at, _, callback, args, handle = pop(queue)
            if callback is None:
                continue
            if handle is not None:
                handle.fired = True
            self.now = at
            callback(*args)
            dispatched += 1
        self.now = until
        self.dispatched += dispatched
        pending = sum(1 for e in queue if e[2] is not None)
        return EngineStats(self.dispatched, self.cancelled, pending, self.now)

    def rng_stream(self, label: str) -> RandomStream:
        stream = self._streams.get(label)
        if stream is None:
            stream = self._streams[label] = RandomStream(self.seed, label)
        return stream
