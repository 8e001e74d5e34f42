"""Deterministic discrete-event kernel, seeded random streams and choice points."""

from __future__ import annotations

import hashlib
import heapq
from typing import Any, Callable, NamedTuple

import numpy as np


class SimulatorBug(RuntimeError):
    """A broken internal precondition; the run cannot continue."""


class LivelockError(RuntimeError):
    pass


class Event(NamedTuple):
    fire_time: int
    tie_seq: int
    target: Callable[..., Any]
    payload: tuple = ()


class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Draw ``i`` of a stream depends only on the seed, the label and ``i``, so
    adding components (new labels) never perturbs existing streams.
    """

    _BLOCK = 512

    def __init__(self, seed: int, stream_id: str):
        self.seed = int(seed)
        self.stream_id = stream_id
        digest = hashlib.blake2b(f"{self.seed}/{stream_id}".encode(), digest_size=16).digest()
        self._bitgen = np.random.Philox(key=int.from_bytes(digest, "little"))
        self._buf: list[int] = []
        self._pos = 0
        self.draws = 0

    def raw(self) -> int:
        if self._pos == len(self._buf):
            self._buf = self._bitgen.random_raw(self._BLOCK).tolist()
            self._pos = 0
        x = self._buf[self._pos]
        self._pos += 1
        self.draws += 1
        return x

    def uniform(self, lo: int, hi: int) -> int:
        if lo > hi:
            raise ValueError(f"empty range [{lo}, {hi}]")
        n = hi - lo + 1
        return lo + ((self.raw() * n) >> 64)

    def random(self) -> float:
        return (self.raw() >> 11) * (1.0 / (1 << 53))


def draw_uniform(stream: RngStream, lo: int, hi: int) -> int:
    return stream.uniform(lo, hi)


class Chooser:
    """Resolves nondeterministic choice points. Subclasses record the path."""

    def __init__(self):
        self.path: list[int] = []
        self.arity: list[int] = []

    def choose(self, n: int, label: str = "") -> int:
        raise NotImplementedError


class RandomChooser(Chooser):
    def __init__(self, rng: RngStream):
        super().__init__()
        self.rng = rng

    def choose(self, n, label=""):
        c = 0 if n <= 1 else self.rng.uniform(0, n - 1)
        self.path.append(c)
        self.arity.append(n)
        return c


class ReplayChooser(Chooser):
    """Follows ``prefix`` then takes branch 0; counts points past ``depth_bound``."""

    def __init__(self, prefix: list[int], depth_bound: int):
        super().__init__()
        self.prefix = prefix
        self.depth_bound = depth_bound
        self.beyond_bound = 0

    def choose(self, n, label=""):
        i = len(self.path)
        if i < len(self.prefix) and i < self.depth_bound:
            c = self.prefix[i]
            if c >= n:
                raise SimulatorBug(f"replay diverged at choice {i} ({label}): {c} >= {n}")
        else:
            c = 0
        if i >= self.depth_bound:
            self.beyond_bound += 1
        self.path.append(c)
        self.arity.append(n)
        return c


class Engine:
    """Single-clock event scheduler ordered by ``(fire_time, tie_seq)``."""

    def __init__(self, seed: int = 0, max_events: int | None = None,
                 chooser: Chooser | None = None, trace: bool = False):
        self.seed = seed
        self.now = 0
        self.max_events = max_events
        self.chooser = chooser
        self.dispatched = 0
        self._q: list[Event] = []
        self._seq = 0
        self._streams: dict[str, RngStream] = {}
        self._trace = hashlib.blake2b(digest_size=16) if trace else None
        self._periodic: tuple[int, Callable[[], None]] | None = None

    def rng(self, stream_id: str) -> RngStream:
        s = self._streams.get(stream_id)
        if s is None:
            s = self._streams[stream_id] = RngStream(self.seed, stream_id)
        return s

    def choose(self, n: int, label: str) -> int:
        """Resolve an ``n``-way choice point; single-option points are not recorded."""
        if n <= 1:
            return 0
        if self.chooser is None:
            return self.rng("choice/" + label).uniform(0, n - 1)
        return self.chooser.choose(n, label)

    def schedule(self, event: Event) -> None:
        if event.fire_time < self.now:
            raise SimulatorBug(
                f"event for {getattr(event.target, '__qualname__', event.target)} scheduled at "
                f"t={event.fire_time} but now={self.now}")
        heapq.heappush(self._q, event)

    def at(self, time: int, fn: Callable[..., Any], *args) -> None:
        if time < self.now:
            raise SimulatorBug(f"{fn.__qualname__} scheduled at t={time} but now={self.now}")
        heapq.heappush(self._q, Event(time, self._seq, fn, args))
        self._seq += 1

    def after(self, delay: int, fn: Callable[..., Any], *args) -> None:
        heapq.heappush(self._q, Event(self.now + delay, self._seq, fn, args))
        self._seq += 1

    def make_event(self, time: int, fn: Callable[..., Any], *args) -> Event:
        ev = Event(time, self._seq, fn, args)
        self._seq += 1
        return ev

    def every(self, n_events: int, fn: Callable[[], None]) -> None:
        self._periodic = (n_events, fn)

    @property
    def pending(self) -> int:
        return len(self._q)

    def trace_digest(self) -> str | None:
        return None if self._trace is None else self._trace.hexdigest()

    def run_until(self, limit: int | None = None) -> int:
        """Dispatch events with ``fire_time <= limit`` (all, if None); return ``now``."""
        q = self._q
        pop = heapq.heappop
        cap = self.max_events
        trace = self._trace
        period, hook = self._periodic or (0, None)
        n = self.dispatched
        while q:
            if limit is not None and q[0][0] > limit:
                break
            t, seq, fn, args = pop(q)
            self.now = t
            n += 1
            if cap is not None and n > cap:
                self.dispatched = n
                raise LivelockError(f"event watchdog exceeded ({cap} events) at t={t}")
            if trace is not None:
                trace.update(f"{t},{seq},{fn.__qualname__};".encode())
            fn(*args)
            if period and n % period == 0:
                self.dispatched = n
                hook()
        self.dispatched = n
        return self.now
