"""Memory controller: bounded queue, dependence-preserving forwarding, PIM acks."""

from __future__ import annotations

from collections import deque
from typing import TYPE_CHECKING, Callable

from .memtypes import Kind, MemRequest

if TYPE_CHECKING:
    from .system import System


def conflicts(a: MemRequest, b: MemRequest, line_mask: int) -> bool:
    """True if ``a`` and ``b`` carry a data dependence the controller must keep."""
    if a.kind is Kind.PIM_FENCE or b.kind is Kind.PIM_FENCE:
        return True
    if a.is_scope_op or b.is_scope_op:
        return a.scope is not None and a.scope == b.scope
    return (a.addr & line_mask) == (b.addr & line_mask)


class MemController:
    """Accepts requests against credits, forwards one eligible request per cycle.

    A request is eligible when no earlier queued request conflicts with it
    and, for a PIM op, the PIM buffer has room. Forwarding a request returns
    its credit to the senders waiting in ``credit_waiters``.
    """

    def __init__(self, system: "System"):
        cfg = system.cfg
        self.sys = system
        self.engine = system.engine
        self.depth = cfg.controller.queue
        self.credits = cfg.controller.queue
        self.dram_latency = cfg.controller.dram_latency
        self.reorder = cfg.controller.reorder_choices
        self.acks = system.model.acks
        self.line_mask = ~(cfg.llc.line - 1)
        self.line_words = cfg.llc.line // 8
        self.queue: list[MemRequest] = []
        self.credit_waiters: deque[Callable[[], None]] = deque()
        self.tick_at = -1
        self.dram: dict[int, list[int]] = {}
        self.forwarded = 0
        self.scan_writebacks = 0

    # -- credits -------------------------------------------------------------
    def reserve(self, waiter: Callable[[], None]) -> bool:
        if self.credits > 0:
            self.credits -= 1
            return True
        if waiter not in self.credit_waiters:
            self.credit_waiters.append(waiter)
        return False

    def _release(self) -> None:
        self.credits += 1
        if self.credit_waiters:
            self.credit_waiters.popleft()()

    # -- arrival ---------------------------------------------------------------
    def receive(self, req: MemRequest) -> None:
        self.queue.append(req)
        if req.state == "scan":
            self.scan_writebacks += 1
        m = self.sys.metrics
        if m is not None:
            m.record_mc(self.engine.now, len(self.queue))
        if req.kind is Kind.PIM_OP and self.acks:
            # acceptance is the point after which the issuer may proceed
            core = self.sys.cores_by_l1[req.core]
            self.sys.net.send("mc", ("core", req.core), req, core.on_pim_ack, req)
        self._schedule(self.engine.now)

    def _schedule(self, t: int) -> None:
        if self.tick_at == -1 or t < self.tick_at:
            self.tick_at = t
            self.engine.at(t, self._tick)

    def _eligible(self) -> list[int]:
        out = []
        lines: set[int] = set()
        scopes_any: set[int] = set()
        scopes_op: set[int] = set()
        fence = False
        pim = self.sys.pim
        mask = self.line_mask
        for i, r in enumerate(self.queue):
            k = r.kind
            s = r.scope
            if k is Kind.PIM_FENCE:
                ok = i == 0
            elif fence:
                ok = False
            elif k is Kind.PIM_OP or k is Kind.SCOPE_FENCE:
                ok = s not in scopes_any and (k is not Kind.PIM_OP or pim.can_accept())
            else:
                line = r.addr & mask
                ok = line not in lines and (s is None or s not in scopes_op)
            if ok:
                out.append(i)
                if not self.reorder:
                    return out
            if k is Kind.PIM_FENCE:
                fence = True
            elif k is Kind.PIM_OP or k is Kind.SCOPE_FENCE:
                scopes_op.add(s)
                scopes_any.add(s)
            else:
                lines.add(r.addr & mask)
                if s is not None:
                    scopes_any.add(s)
        return out

    def _tick(self) -> None:
        if self.tick_at != self.engine.now:
            return
        self.tick_at = -1
        if not self.queue:
            return
        cand = self._eligible()
        if not cand:
            return          # woken by PIM buffer space
        i = cand[self.engine.choose(len(cand), "mc")] if len(cand) > 1 else cand[0]
        req = self.queue.pop(i)
        self.forwarded += 1
        self._forward(req)
        self._release()
        if self.queue:
            self._schedule(self.engine.now + 1)

    def on_pim_space(self) -> None:
        if self.queue:
            self._schedule(self.engine.now)

    # -- forwarding --------------------------------------------------------------
    def _forward(self, req: MemRequest) -> None:
        k = req.kind
        if k is Kind.PIM_OP:
            self.sys.pim.enqueue(req)
            return
        if k is Kind.PIM_FENCE:
            core = self.sys.cores_by_l1[req.core]
            self.sys.net.send("mc", ("core", req.core), req, core.on_fence_ack, req)
            return
        if req.scope is not None:
            self.sys.pim.access(req, self._done)
            return
        line = req.addr & self.line_mask
        if k is Kind.LOAD:
            words = self.dram.get(line)
            words = list(words) if words is not None else [0] * self.line_words
            if req.uncached:
                words = [words[(req.addr - line) >> 3]]
            self.engine.after(self.dram_latency, self._done, req, words)
            return
        if isinstance(req.payload, list):
            self.dram[line] = list(req.payload)
        else:
            words = self.dram.setdefault(line, [0] * self.line_words)
            words[(req.addr - line) >> 3] = req.payload
        self.engine.after(self.dram_latency, self._done, req, None)

    def _done(self, req: MemRequest, words: list[int] | None) -> None:
        if req.reply is None:
            return
        dst, fn = req.reply
        self.sys.net.send("mc", dst, req, fn, req, words)

    @property
    def idle(self) -> bool:
        return not self.queue
