"""Deterministic discrete-event engine.

A single Simulator owns the virtual clock, the event queue, and all named
random streams for one run. Events fire in (time, insertion order), so a
run is fully reproducible given the master seed. Nothing here touches wall
time.
"""

from __future__ import annotations

import hashlib
import heapq
from typing import Any, Callable

import numpy as np

DEFAULT_MAX_DISPATCHES = 10**8


class SimError(Exception):
    """Base class for engine misuse."""


class SchedulingInPast(SimError):
    """An event was scheduled before the current clock."""


class LivelockGuard(SimError):
    """The dispatch budget was exhausted; the run is likely spinning."""


_PENDING = 0
_FIRED = 1
_CANCELLED = 2


class EventHandle:
    """Returned by schedule(); lets timer owners cancel pending events."""

    __slots__ = ("fire_at", "seq", "target", "payload", "_status")

    def __init__(self, fire_at: float, seq: int, target: Callable[[Any], None], payload: Any):
        self.fire_at = fire_at
        self.seq = seq
        self.target = target
        self.payload = payload
        self._status = _PENDING

    @property
    def pending(self) -> bool:
        return self._status == _PENDING

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        state = {_PENDING: "pending", _FIRED: "fired", _CANCELLED: "cancelled"}[self._status]
        return f"<EventHandle t={self.fire_at} seq={self.seq} {state}>"


class RngStream:
    """Named random stream derived from (master_seed, label).

    The label is hashed with sha256 so stream separation does not depend on
    Python's per-process hash salt; the same (seed, label) pair always
    yields the same draw sequence.
    """

    def __init__(self, master_seed: int, label: str):
        self.label = label
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([master_seed, *words])))

    def uniform01(self) -> float:
        return float(self._gen.random())

    def bernoulli(self, p: float) -> bool:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"bernoulli p={p} outside [0, 1]")
        if p == 0.0:
            return False
        if p == 1.0:
            return True
        return bool(self._gen.random() < p)

    def shuffle(self, n: int) -> list[int]:
        """Random permutation of range(n)."""
        return [int(i) for i in self._gen.permutation(n)]

    def integers(self, low: int, high: int) -> int:
        return int(self._gen.integers(low, high))

    def numpy(self) -> np.random.Generator:
        """Direct generator access for array-sized draws (dataset synthesis)."""
        return self._gen


class Simulator:
    """Virtual clock plus ordered event queue.

    Targets are plain callables invoked as target(payload). Equal fire
    times dispatch in scheduling order.
    """

    def __init__(self, master_seed: int = 0, max_dispatches: int = DEFAULT_MAX_DISPATCHES):
        self.master_seed = master_seed
        self.max_dispatches = max_dispatches
        self._now = 0.0
        self._seq = 0
        self._heap: list[tuple[float, int, EventHandle]] = []
        self._flags: set[str] = set()
        self._streams: dict[str, RngStream] = {}
        self.dispatched = 0

    def now(self) -> float:
        return self._now

    def stream(self, label: str) -> RngStream:
        """Get (or lazily create) the named random stream."""
        st = self._streams.get(label)
        if st is None:
            st = RngStream(self.master_seed, label)
            self._streams[label] = st
        return st

    def schedule(self, fire_at: float, target: Callable[[Any], None], payload: Any = None) -> EventHandle:
        if fire_at < self._now:
            raise SchedulingInPast(f"fire_at {fire_at} < now {self._now}")
        handle = EventHandle(fire_at, self._seq, target, payload)
        self._seq += 1
        heapq.heappush(self._heap, (fire_at, handle.seq, handle))
        return handle

    def schedule_in(self, delay: float, target: Callable[[Any], None], payload: Any = None) -> EventHandle:
        return self.schedule(self._now + delay, target, payload)

    def cancel(self, handle: EventHandle) -> bool:
        """True if the event was still pending; cancelled events never fire."""
        if handle._status != _PENDING:
            return False
        handle._status = _CANCELLED
        return True

    def set_flag(self, name: str) -> None:
        self._flags.add(name)

    def flag_set(self, name: str) -> bool:
        return name in self._flags

    def run(self, until_time: float | None = None, until_flag: str | None = None) -> float:
        """Dispatch events until the stop condition holds; returns the clock.

        Stops when the queue drains, when the clock reaches until_time, or
        when until_flag has been set. With until_time the clock is advanced
        to that bound even if no event fires there.
        """
        while self._heap:
            if until_flag is not None and until_flag in self._flags:
                break
            fire_at, _, handle = self._heap[0]
            if until_time is not None and fire_at >= until_time:
                self._now = max(self._now, until_time)
                return self._now
            heapq.heappop(self._heap)
            if handle._status != _PENDING:
                continue
            self.dispatched += 1
            if self.dispatched > self.max_dispatches:
                raise LivelockGuard(f"more than {self.max_dispatches} events dispatched")
            self._now = fire_at
            handle._status = _FIRED
            handle.target(handle.payload)
        if until_time is not None and self._now < until_time:
            self._now = until_time
        return self._now
