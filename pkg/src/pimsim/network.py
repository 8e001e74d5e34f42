"""Point-to-point links with jittered latency and dependence-key FIFO delivery.

Two messages on the same (src, dst) link keep their send order when they
share a dependence key: the same cache line, or the same scope when either
one is a scope-carrying request. A PIM fence is ordered against everything.
Everything else may overtake.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Callable

from .memtypes import Kind, MemRequest

if TYPE_CHECKING:
    from .config import NetworkConfig
    from .engine import Engine


class _Link:
    __slots__ = ("line", "scope_any", "scope_op", "all_last", "fence_last", "sent")

    def __init__(self):
        self.line: dict[int, int] = {}
        self.scope_any: dict[int, int] = {}
        self.scope_op: dict[int, int] = {}
        self.all_last = 0
        self.fence_last = 0
        self.sent = 0


class Network:
    PRUNE_AT = 4096

    def __init__(self, engine: "Engine", cfg: "NetworkConfig", line_mask: int):
        self.engine = engine
        self.base = cfg.base
        self.jitter = cfg.jitter
        self.levels = cfg.levels
        self.line_mask = line_mask
        self.links: dict[tuple, _Link] = {}
        self.messages = 0
        self._rng = engine.rng("net")

    def _draw(self) -> int:
        if self.levels is not None:
            return self.levels[self.engine.choose(len(self.levels), "net")]
        if self.jitter == 0:
            return 0
        return self._rng.uniform(0, self.jitter)

    def send(self, src, dst, req: MemRequest, fn: Callable, *args, extra: int = 0) -> int:
        """Schedule ``fn(*args)`` at the delivery time of ``req``; return that time."""
        link = self.links.get((src, dst))
        if link is None:
            link = self.links[(src, dst)] = _Link()
        t = self.engine.now + extra + self.base + self._draw()
        kind = req.kind
        s = req.scope
        if kind is Kind.PIM_FENCE:
            if t < link.all_last:
                t = link.all_last
            link.fence_last = t
        else:
            if t < link.fence_last:
                t = link.fence_last
            if kind is Kind.PIM_OP or kind is Kind.SCOPE_FENCE:
                last = link.scope_any.get(s, 0)
                if t < last:
                    t = last
                link.scope_op[s] = t
                link.scope_any[s] = t
            else:
                line = req.addr & self.line_mask
                last = link.line.get(line, 0)
                if t < last:
                    t = last
                if s is not None:
                    last = link.scope_op.get(s, 0)
                    if t < last:
                        t = last
                    if t > link.scope_any.get(s, 0):
                        link.scope_any[s] = t
                link.line[line] = t
        if t > link.all_last:
            link.all_last = t
        link.sent += 1
        if link.sent % self.PRUNE_AT == 0:
            now = self.engine.now
            link.line = {k: v for k, v in link.line.items() if v > now}
        self.messages += 1
        self.engine.at(t, fn, *args)
        return t
