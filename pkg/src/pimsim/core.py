"""Commit-point core with a TSO write buffer and per-model PIM-op issue rules.

One statement commits per cycle. Loads block the core until their value
returns; stores, flushes, PIM ops (except under the atomic model) and scope
fences retire into the write buffer and drain behind the core.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from .config import Model
from .engine import SimulatorBug
from .memtypes import Kind, MemRequest
from .program import Delay, Flush, Load, MemFence, Pim, PimFence, ScopeFence, Statement, Store

if TYPE_CHECKING:
    from .system import System

ST, FL, PIM, SF = "st", "fl", "pim", "sf"
PENDING, ISSUED, AWAIT = "pending", "issued", "await"


class WBEntry:
    __slots__ = ("kind", "req", "addr", "value", "scope", "state", "seq")

    def __init__(self, kind: str, req: MemRequest | None, addr: int, value: int, scope: int | None, seq: int):
        self.kind = kind
        self.req = req
        self.addr = addr
        self.value = value
        self.scope = scope
        self.state = PENDING
        self.seq = seq

    def __repr__(self):
        return f"WB({self.kind}@{self.seq} s={self.scope} {self.state})"


class Core:
    def __init__(self, system: "System", thread: int, idx: int, program: list[Statement], start: int = 0):
        self.sys = system
        self.engine = system.engine
        self.model: Model = system.model
        self.thread = thread
        self.idx = idx
        self.node = ("core", idx)
        self.program = program
        self.start_time = start
        self.l1 = system.l1s[idx]
        self.amap = system.amap
        self.wb: list[WBEntry] = []
        self.wb_cap = system.cfg.write_buffer
        self.pc = 0
        self.regs: dict[str, int] = {}
        self.loads: list[int] = []
        self.load_addrs: list[int] = []
        self.store_inflight = False
        self.flushes_out = 0
        self.waiting = False          # a blocking load / ack / fence is outstanding
        self.atomic_req: MemRequest | None = None
        self.fence_req: MemRequest | None = None
        self.step_at = -1
        self.last_commit = -1
        self.finish_time: int | None = None
        self.on_commit = None
        self.direct_q: list = []
        self.draining = False
        self.redrain = False
        self.in_step = False
        self.uncacheable = self.model is Model.UNCACHEABLE
        self.fifo = self.model not in (Model.SCOPE, Model.SCOPE_RELAXED)

    # -- scheduling ----------------------------------------------------------
    def start(self) -> None:
        self.engine.at(self.start_time, self._step_event)
        self.step_at = self.start_time

    def _wake(self) -> None:
        if self.finish_time is not None or self.waiting or self.in_step:
            return
        t = max(self.engine.now, self.last_commit + 1)
        if self.step_at == -1 or t < self.step_at:
            self.step_at = t
            self.engine.at(t, self._step_event)

    def _step_event(self) -> None:
        if self.step_at != self.engine.now:
            return
        self.step_at = -1
        self._step()

    def _step(self) -> None:
        if self.pc >= len(self.program):
            self._check_done()
            return
        if self.waiting:
            return
        st = self.program[self.pc]
        self.in_step = True
        try:
            r = self._try(st)
        finally:
            self.in_step = False
        if r is True:
            if type(st) is Delay:
                gap = st.alternatives[self.engine.choose(len(st.alternatives), "delay")] if st.alternatives else st.cycles
                self._advance(gap)
            else:
                self._advance(1)

    def _advance(self, gap: int = 1) -> None:
        self.waiting = False
        seq = self.pc
        self.pc += 1
        self.last_commit = self.engine.now
        if self.on_commit is not None:
            self.on_commit(self, seq)
        if self.pc >= len(self.program):
            self._check_done()
            return
        t = self.engine.now + gap
        if self.step_at == -1 or t < self.step_at:
            self.step_at = t
            self.engine.at(t, self._step_event)

    def _check_done(self) -> None:
        if (self.finish_time is None and self.pc >= len(self.program) and not self.wb
                and not self.flushes_out and not self.waiting and not self.store_inflight):
            self.finish_time = self.engine.now
            self.sys.thread_done(self)

    # -- statement semantics ----------------------------------------------------
    def _try(self, st: Statement):
        t = type(st)
        if t is Load:
            return self._load(st)
        if t is Store:
            return self._buffer(ST, st.addr, st.value)
        if t is Pim:
            return self._pim(st.desc)
        if t is Flush:
            return self._buffer(FL, st.addr & ~(self.sys.line_size - 1), 0)
        if t is MemFence:
            return self._mem_fence_ok()
        if t is PimFence:
            return self._pim_fence()
        if t is ScopeFence:
            if self.model is Model.SCOPE_RELAXED:
                return self._buffer(SF, self.amap.scope(st.scope).base, 0, scope=st.scope)
            return True
        if t is Delay:
            return True
        raise SimulatorBug(f"unknown statement {st!r}")

    def _load(self, st: Load):
        addr = st.addr
        s = self.amap.scope_index(addr)
        wb = self.wb
        if wb and s is not None:
            m = self.model
            if m is Model.STORE or m is Model.SCOPE:
                for e in wb:
                    if e.kind is PIM and e.scope == s:
                        return False
            elif m is Model.SCOPE_RELAXED:
                for e in wb:
                    if e.kind is SF and e.scope == s:
                        return False
            elif self.uncacheable:
                return False          # uncached accesses are strongly ordered
        if self.uncacheable and s is not None and (self.flushes_out or self.store_inflight):
            return False
        for e in reversed(wb):
            if e.kind is ST and e.addr == addr:
                self._record(st, e.value)
                return True
        self.waiting = True
        if self.uncacheable and s is not None:
            req = self._request(Kind.LOAD, addr)
            req.uncached = True
            req.reply = (self.node, self._direct_load_reply)
            self._direct(req)
        else:
            self.l1.load(addr, self._load_done)
        return None

    def _record(self, st: Load, value: int) -> None:
        self.loads.append(value)
        self.load_addrs.append(st.addr)
        if st.reg:
            self.regs[st.reg] = value

    def _load_done(self, value: int) -> None:
        st = self.program[self.pc]
        self._record(st, value)
        self._advance()

    def _direct_load_reply(self, req: MemRequest, words) -> None:
        self._load_done(words[0])

    def _buffer(self, kind: str, addr: int, value: int, scope: int | None = None, desc=None) -> bool:
        if len(self.wb) >= self.wb_cap:
            return False
        if scope is None:
            scope = self.amap.scope_index(addr)
        req = None
        if kind is PIM:
            req = self._request(Kind.PIM_OP, 0, payload=desc)
        elif kind is SF:
            req = self._request(Kind.SCOPE_FENCE, 0, scope=scope)
        self.wb.append(WBEntry(kind, req, addr, value, scope, self.pc))
        self._drain()
        return True

    def _pim(self, desc):
        if self.model is Model.ATOMIC:
            if self.wb or self.flushes_out:
                return False
            req = self._request(Kind.PIM_OP, 0, payload=desc)
            self.atomic_req = req
            self.waiting = True
            self.l1.pim(req, None)
            return None
        return self._buffer(PIM, 0, 0, scope=desc.scope, desc=desc)

    def _mem_fence_ok(self) -> bool:
        if self.flushes_out or self.store_inflight:
            return False
        if self.model.acks:
            return not self.wb
        return not any(e.kind is ST or e.kind is FL for e in self.wb)

    def _pim_fence(self):
        m = self.model
        if m.acks:
            if self.sys.cfg.pimfence_orders_all:
                return not self.wb and not self.flushes_out
            return not any(e.kind is PIM for e in self.wb)
        if self.wb or self.flushes_out or self.store_inflight:
            return False
        req = self._request(Kind.PIM_FENCE, 0)
        self.fence_req = req
        self.waiting = True
        if m is Model.SCOPE_RELAXED:
            self.l1.pim_fence(req)
        else:
            self._direct(req)
        return None

    def _request(self, kind: Kind, addr: int, payload=None, scope=None) -> MemRequest:
        req = MemRequest(kind, addr, scope, self.thread, self.idx, self.pc, payload=payload, t=self.engine.now)
        if kind is Kind.PIM_OP:
            req.scope = payload.scope
            req.addr = self.amap.scope(payload.scope).base
            req.pim_enabled = True
        elif kind is Kind.SCOPE_FENCE:
            req.addr = self.amap.scope(scope).base
            req.pim_enabled = True
        elif kind is not Kind.PIM_FENCE:
            req.scope = self.amap.scope_index(addr)
            req.pim_enabled = req.scope is not None
        self.sys.trace_request(req)
        return req

    # -- write-buffer drain ----------------------------------------------------------
    def _drain(self) -> None:
        # an L1 send may retire an entry synchronously and re-enter here
        if self.draining:
            self.redrain = True
            return
        self.draining = True
        try:
            self.redrain = True
            while self.redrain:
                self.redrain = False
                self._drain_once()
        finally:
            self.draining = False

    def _drain_once(self) -> None:
        wb = self.wb
        if not wb:
            return
        m = self.model
        if self.fifo:
            while wb:
                e = wb[0]
                if e.state is not PENDING:
                    return
                if e.kind is ST:
                    if self.store_inflight:
                        return
                    self._issue_store(e)
                    return
                if e.kind is FL:
                    self._issue_flush(e)
                    continue
                if e.kind is PIM:
                    if m is Model.STORE:
                        e.state = AWAIT
                        self.l1.pim(e.req, None)
                        return
                    wb.pop(0)
                    self._direct(e.req)
                    continue
                raise SimulatorBug(f"core {self.idx}: scope fence buffered under {m.value}")
            return
        relaxed = m is Model.SCOPE_RELAXED
        seen: set = set()        # scopes of earlier entries still present
        fenced: set = set()      # scopes of earlier unsent scope fences
        st_blocked = self.store_inflight
        for e in list(wb):
            k = e.kind
            s = e.scope
            if k is ST or k is FL:
                if not st_blocked and e.state is PENDING:
                    ok = s is None or s not in (fenced if relaxed else seen)
                    if ok:
                        if k is ST:
                            self._issue_store(e)
                            st_blocked = True
                        else:
                            self._issue_flush(e)
                            continue
                st_blocked = True
            elif k is PIM:
                if e.state is PENDING:
                    if relaxed:
                        if s not in fenced:
                            e.state = ISSUED
                            self.l1.pim(e.req, lambda e=e: self._retire(e))
                    elif s not in seen:
                        e.state = AWAIT
                        self.l1.pim(e.req, None)
            else:
                if e.state is PENDING and s not in seen:
                    e.state = ISSUED
                    self.l1.scope_fence(e.req, lambda e=e: self._retire(e))
                if e in wb:
                    fenced.add(s)
            if s is not None and e in wb:
                seen.add(s)

    def _issue_store(self, e: WBEntry) -> None:
        e.state = ISSUED
        self.store_inflight = True
        if self.uncacheable and e.scope is not None:
            req = self._request(Kind.STORE, e.addr, payload=e.value)
            req.uncached = True
            req.want_ack = True
            req.reply = (self.node, lambda r, w, e=e: self._store_done(e))
            self._direct(req)
        else:
            self.l1.store(e.addr, e.value, lambda e=e: self._store_done(e))

    def _store_done(self, e: WBEntry) -> None:
        self.store_inflight = False
        self._retire(e)

    def _issue_flush(self, e: WBEntry) -> None:
        self.wb.remove(e)
        self.flushes_out += 1
        req = self._request(Kind.LINE_FLUSH, e.addr)
        if self.uncacheable and e.scope is not None:
            # nothing of an uncacheable page is ever cached
            self.engine.after(1, self.on_flush_ack, req, None)
        else:
            self.l1.flush(req)

    def _retire(self, e: WBEntry) -> None:
        if e in self.wb:
            self.wb.remove(e)
        self._drain()
        self._wake()
        self._check_done()

    # -- responses ------------------------------------------------------------------
    def on_pim_ack(self, req: MemRequest) -> None:
        if self.atomic_req is req:
            self.atomic_req = None
            self._advance()
            return
        for e in self.wb:
            if e.req is req and e.state is AWAIT:
                self._retire(e)
                return
        raise SimulatorBug(f"core {self.idx}: ack for a PIM op that is not awaiting one (seq {req.seq})")

    def on_fence_ack(self, req: MemRequest) -> None:
        if self.fence_req is not req:
            raise SimulatorBug(f"core {self.idx}: unexpected PIM fence ack")
        self.fence_req = None
        self._advance()

    def on_flush_ack(self, req: MemRequest, words) -> None:
        if self.flushes_out <= 0:
            raise SimulatorBug(f"core {self.idx}: flush ack with no flush outstanding")
        self.flushes_out -= 1
        self._wake()
        self._check_done()

    # -- direct path to the memory controller (baselines, uncacheable pages) ----------
    def _direct(self, req: MemRequest) -> None:
        self.direct_q.append(req)
        if len(self.direct_q) == 1:
            self._drain_direct()

    def _drain_direct(self) -> None:
        q = self.direct_q
        mc = self.sys.mc
        while q and mc.reserve(self._drain_direct):
            req = q.pop(0)
            self.sys.net.send(self.node, "mc", req, mc.receive, req)

    @property
    def done(self) -> bool:
        return self.finish_time is not None
