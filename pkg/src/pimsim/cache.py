"""Private L1s and a shared inclusive LLC with blocking stable-state MESI.

The LLC holds the directory. Directory actions on L1 copies (invalidate,
downgrade, dirty-data collection) take effect at the moment the LLC handles
the request; the line then stays busy until the response reaches the
requester, which keeps every transaction atomic per line.
"""

from __future__ import annotations

import json
from collections import deque
from typing import TYPE_CHECKING, Callable

from .memtypes import Kind, MemRequest, SCOPE_KINDS

if TYPE_CHECKING:
    from .config import CacheGeometry, ScanCost, ScopeBufferGeometry
    from .system import System


class Line:
    __slots__ = ("addr", "state", "data", "pim", "scope", "dirty", "sharers", "owner")

    def __init__(self, addr: int, state: str, data: list[int], scope: int | None):
        self.addr = addr
        self.state = state          # L1: M/E/S; LLC: V
        self.data = data
        self.pim = scope is not None
        self.scope = scope
        self.dirty = False          # LLC only
        self.sharers = 0            # LLC only: bitmask of L1s holding the line
        self.owner = -1             # LLC only: L1 holding M/E


class ScopeBuffer:
    """Set-associative LRU set of scopes known to have no lines in the cache."""

    def __init__(self, geom: "ScopeBufferGeometry"):
        self.n_sets = geom.sets
        self.ways = geom.ways
        self.sets: list[dict[int, None]] = [{} for _ in range(geom.sets)]

    def __contains__(self, s: int) -> bool:
        return s in self.sets[s % self.n_sets]

    def lookup(self, s: int) -> bool:
        d = self.sets[s % self.n_sets]
        if s in d:
            del d[s]
            d[s] = None
            return True
        return False

    def insert(self, s: int) -> None:
        d = self.sets[s % self.n_sets]
        if s in d:
            del d[s]
        elif len(d) >= self.ways:
            del d[next(iter(d))]
        d[s] = None

    def erase(self, s: int) -> bool:
        d = self.sets[s % self.n_sets]
        if s in d:
            del d[s]
            return True
        return False

    def scopes(self) -> list[int]:
        return sorted(s for d in self.sets for s in d)


class CacheArray:
    """Tag/data array with LRU sets, the scope bit-vector and an optional scope buffer.

    Set order in each dict is LRU order (oldest first). ``pim_count[s]`` is
    the number of valid PIM lines in set ``s``; the SBV bit is ``pim_count>0``.
    """

    def __init__(self, name: str, geom: "CacheGeometry", sbuf: "ScopeBufferGeometry | None" = None):
        self.name = name
        self.n_sets = geom.sets
        self.ways = geom.ways
        self.line_shift = geom.line.bit_length() - 1
        self.set_mask = self.n_sets - 1
        self.sets: list[dict[int, Line]] = [{} for _ in range(self.n_sets)]
        self.pim_count = [0] * self.n_sets
        self.high = 0
        self.scope_lines: dict[int, set[int]] = {}
        self.sbuf = ScopeBuffer(sbuf) if sbuf is not None else None
        self.sb_hits = 0
        self.sb_misses = 0

    def set_of(self, addr: int) -> int:
        return (addr >> self.line_shift) & self.set_mask

    def get(self, addr: int) -> Line | None:
        return self.sets[(addr >> self.line_shift) & self.set_mask].get(addr)

    def touch(self, ln: Line) -> None:
        d = self.sets[(ln.addr >> self.line_shift) & self.set_mask]
        del d[ln.addr]
        d[ln.addr] = ln

    def is_full(self, addr: int) -> bool:
        return len(self.sets[(addr >> self.line_shift) & self.set_mask]) >= self.ways

    def victim(self, addr: int, skip: Callable[[int], bool] | None = None) -> Line | None:
        for ln in self.sets[(addr >> self.line_shift) & self.set_mask].values():
            if skip is None or not skip(ln.addr):
                return ln
        return None

    def fill(self, ln: Line) -> None:
        idx = (ln.addr >> self.line_shift) & self.set_mask
        d = self.sets[idx]
        if ln.addr in d or len(d) >= self.ways:
            raise AssertionError(f"{self.name}: fill of {ln.addr:#x} into a full or owning set")
        d[ln.addr] = ln
        if ln.pim:
            if self.pim_count[idx] == 0:
                self.high += 1
            self.pim_count[idx] += 1
            self.scope_lines.setdefault(ln.scope, set()).add(ln.addr)
            if self.sbuf is not None:
                self.sbuf.erase(ln.scope)

    def remove(self, addr: int) -> Line:
        idx = (addr >> self.line_shift) & self.set_mask
        ln = self.sets[idx].pop(addr)
        if ln.pim:
            # eviction recheck: the bit drops once no PIM line remains in the set
            self.pim_count[idx] -= 1
            if self.pim_count[idx] == 0:
                self.high -= 1
            lines = self.scope_lines[ln.scope]
            lines.discard(addr)
            if not lines:
                del self.scope_lines[ln.scope]
        return ln

    def sbv(self) -> list[bool]:
        return [c > 0 for c in self.pim_count]

    def lines(self):
        for d in self.sets:
            yield from d.values()

    def dump(self) -> str:
        """JSON image: set index -> [[tag, state, pim_enabled], ...] for non-empty sets."""
        out = {}
        for i, d in enumerate(self.sets):
            if d:
                out[str(i)] = [[ln.addr >> self.line_shift, ln.state, ln.pim] for ln in d.values()]
        return json.dumps(out, sort_keys=True)


def scan_and_flush(arr: CacheArray, scope: int, cost: "ScanCost",
                   on_line: Callable[[Line], None]) -> tuple[int, int, int]:
    """Invalidate every line of ``scope`` in ``arr``, visiting only SBV-high sets.

    ``on_line`` sees each victim before removal (writeback, back-invalidation).
    Returns ``(lines_flushed, sets_visited, latency)``.
    """
    visited = arr.high
    addrs = sorted(arr.scope_lines.get(scope, ()))
    for a in addrs:
        on_line(arr.get(a))
        arr.remove(a)
    return len(addrs), visited, cost.per_set * visited + cost.per_line * len(addrs) + cost.fixed


# ---------------------------------------------------------------------------

class L1:
    """Private L1 controller. Requests to the LLC consume one of ``l1_mshrs``
    credits and leave in order through ``sendq``."""

    def __init__(self, system: "System", idx: int):
        cfg = system.cfg
        self.sys = system
        self.engine = system.engine
        self.idx = idx
        self.node = ("l1", idx)
        relaxed = system.relaxed
        self.arr = CacheArray(f"l1[{idx}]", cfg.l1, cfg.l1_scope_buffer if relaxed else None)
        self.scan_enabled = relaxed
        self.latency = cfg.l1.latency
        self.line_mask = ~(cfg.l1.line - 1)
        self.credits = cfg.l1_mshrs
        self.pending: dict[int, list] = {}
        self.sendq: deque = deque()
        self.inq: deque = deque()
        self.blocked_until = 0
        self.pump_at = -1
        self.deferred: tuple | None = None
        self.hits = 0
        self.misses = 0

    # -- core-facing entry points ------------------------------------------
    def load(self, addr: int, cb: Callable[[int], None]) -> None:
        self._submit(self._load, addr, cb)

    def store(self, addr: int, value: int, cb: Callable[[], None]) -> None:
        self._submit(self._store, addr, value, cb)

    def flush(self, req: MemRequest) -> None:
        self._submit(self._flush, req)

    def pim(self, req: MemRequest, on_sent: Callable[[], None] | None) -> None:
        self._submit(self._send, req, True, on_sent)

    def scope_fence(self, req: MemRequest, on_sent: Callable[[], None]) -> None:
        self._submit(self._scope_fence, req, on_sent)

    def pim_fence(self, req: MemRequest) -> None:
        self._submit(self._send, req, False, None)

    # -- queueing ------------------------------------------------------------
    def _submit(self, fn, *args) -> None:
        if self.inq or self.deferred is not None or self.engine.now < self.blocked_until:
            self.inq.append((fn, args))
            self._schedule_pump()
        else:
            fn(*args)

    def _schedule_pump(self) -> None:
        t = max(self.engine.now, self.blocked_until)
        if self.pump_at < t:
            self.pump_at = t
            self.engine.at(t, self._pump)

    def _pump(self) -> None:
        if self.engine.now < self.blocked_until:
            return
        self.pump_at = -1
        if self.deferred is not None:
            d, self.deferred = self.deferred, None
            self._send(*d)
        while self.inq and self.engine.now >= self.blocked_until:
            fn, args = self.inq.popleft()
            fn(*args)
        if self.inq:
            self._schedule_pump()

    # -- data accesses -------------------------------------------------------
    def _load(self, addr: int, cb) -> None:
        line = addr & self.line_mask
        if line in self.pending:
            self.pending[line].append((self._load, (addr, cb)))
            return
        ln = self.arr.get(line)
        if ln is not None:
            self.hits += 1
            self.arr.touch(ln)
            self.engine.after(self.latency, cb, ln.data[(addr - line) >> 3])
            return
        self.misses += 1
        self.pending[line] = [(self._load, (addr, cb))]
        self._send(self.sys.line_request(Kind.LOAD, line, self.idx), True, None)

    def _store(self, addr: int, value: int, cb) -> None:
        line = addr & self.line_mask
        if line in self.pending:
            self.pending[line].append((self._store, (addr, value, cb)))
            return
        ln = self.arr.get(line)
        if ln is not None and ln.state != "S":
            ln.state = "M"
            ln.data[(addr - line) >> 3] = value
            self.arr.touch(ln)
            self.engine.after(self.latency, cb)
            return
        self.pending[line] = [(self._store, (addr, value, cb))]
        self._send(self.sys.line_request(Kind.STORE, line, self.idx), True, None)

    def _flush(self, req: MemRequest) -> None:
        line = req.addr
        if line in self.pending:
            self.pending[line].append((self._flush, (req,)))
            return
        if self.arr.get(line) is not None:
            self.sys.llc.l1_evict(self.idx, self.arr.remove(line))
        self._send(req, False, None)

    def on_data(self, resp: MemRequest) -> None:
        self.credits += 1
        line = resp.addr
        ln = self.arr.get(line)
        if ln is not None:
            ln.state = resp.state
            ln.data = resp.payload
            self.arr.touch(ln)
        else:
            if self.arr.is_full(line):
                victim = self.arr.victim(line)
                self.sys.llc.l1_evict(self.idx, self.arr.remove(victim.addr))
            self.arr.fill(Line(line, resp.state, resp.payload, resp.scope))
        for fn, args in self.pending.pop(line, ()):
            fn(*args)
        self._drain_sendq()

    # -- scope traffic ----------------------------------------------------------
    def _scope_fence(self, req: MemRequest, on_sent) -> None:
        s = req.scope
        m = self.sys.metrics
        if self.arr.sbuf.lookup(s):
            self._send(req, True, on_sent)
            return
        flushed, visited, lat = scan_and_flush(
            self.arr, s, self.sys.cfg.scan, lambda ln: self.sys.llc.l1_writeback(self.idx, ln))
        self.arr.sbuf.insert(s)
        if m is not None:
            m.record_scan(self.arr.name, self.engine.now, lat, visited, self.arr.n_sets, flushed, fence=True)
        if lat == 0:
            self._send(req, True, on_sent)
            return
        self.blocked_until = self.engine.now + lat
        self.deferred = (req, True, on_sent)
        self._schedule_pump()

    def invalidate(self, line: int) -> Line | None:
        if self.arr.get(line) is None:
            return None
        return self.arr.remove(line)

    # -- link to the LLC -------------------------------------------------------
    def _send(self, req: MemRequest, credit: bool, on_sent) -> None:
        if self.sendq or (credit and self.credits == 0):
            self.sendq.append((req, credit, on_sent))
            return
        self._transmit(req, credit, on_sent)

    def _transmit(self, req, credit, on_sent) -> None:
        if credit:
            self.credits -= 1
        llc = self.sys.llc
        self.sys.net.send(self.node, "llc", req, llc.receive, req)
        if on_sent is not None:
            on_sent()

    def release(self) -> None:
        self.credits += 1
        self._drain_sendq()

    def _drain_sendq(self) -> None:
        q = self.sendq
        while q:
            req, credit, on_sent = q[0]
            if credit and self.credits == 0:
                return
            q.popleft()
            self._transmit(req, credit, on_sent)


# ---------------------------------------------------------------------------

_PENDING = -1


class LLC:
    """Shared inclusive LLC + directory; performs scope scans for PIM ops."""

    def __init__(self, system: "System"):
        cfg = system.cfg
        self.sys = system
        self.engine = system.engine
        self.arr = CacheArray("llc", cfg.llc, cfg.llc_scope_buffer)
        self.latency = cfg.llc.latency
        self.line_size = cfg.llc.line
        self.scan_cost = cfg.scan
        self.inq: deque = deque()
        self.blocked_until = 0
        self.pump_at = -1
        self.busy: dict[int, int] = {}            # line -> release time (_PENDING while filling)
        self.scope_busy: dict[int, int] = {}
        self.waiters: dict[int, deque] = {}
        self.parks: dict[int, deque] = {}
        self.fence_wait: deque = deque()
        self.outbox: deque = deque()
        self.hits = 0
        self.misses = 0

    # -- input -----------------------------------------------------------------
    def receive(self, req: MemRequest) -> None:
        self.inq.append(req)
        if self.engine.now >= self.blocked_until and len(self.inq) == 1:
            self._pump()
        else:
            self._schedule_pump()

    def _schedule_pump(self) -> None:
        t = max(self.engine.now, self.blocked_until)
        if self.pump_at < t:
            self.pump_at = t
            self.engine.at(t, self._pump_event)

    def _pump_event(self) -> None:
        if self.engine.now >= self.blocked_until:
            self.pump_at = -1
        self._pump()

    def _pump(self) -> None:
        q = self.inq
        while q and self.engine.now >= self.blocked_until:
            self._handle(q.popleft())
        if q:
            self._schedule_pump()

    def _requeue_front(self, items) -> None:
        self.inq.extendleft(reversed(list(items)))
        self._schedule_pump()

    def _handle(self, req: MemRequest) -> None:
        k = req.kind
        if k is Kind.PIM_FENCE:
            if self.parks:
                self.fence_wait.append(req)
            else:
                self._push_out(req)
            return
        s = req.scope
        if s is not None and s in self.parks:
            self.parks[s].append(req)
            return
        if k is Kind.PIM_OP or k is Kind.SCOPE_FENCE:
            if self.scope_busy.get(s):
                self.parks[s] = deque([req])
            else:
                self._scope_op(req)
            return
        line = req.addr
        if line in self.busy:
            w = self.waiters.get(line)
            if w is None:
                w = self.waiters[line] = deque()
            w.append(req)
            return
        self._line_req(req)

    # -- busy tracking ------------------------------------------------------------
    def _mark_busy(self, line: int, scope: int | None, until: int) -> None:
        if line not in self.busy and scope is not None:
            self.scope_busy[scope] = self.scope_busy.get(scope, 0) + 1
        self.busy[line] = until
        if until != _PENDING:
            self.engine.at(until, self._unbusy, line, scope, until)

    def _unbusy(self, line: int, scope: int | None, until: int) -> None:
        if self.busy.get(line) != until:
            return
        del self.busy[line]
        front = list(self.waiters.pop(line, ()))
        fences = ()
        if scope is not None:
            n = self.scope_busy[scope] - 1
            if n:
                self.scope_busy[scope] = n
            else:
                del self.scope_busy[scope]
                front.extend(self.parks.pop(scope, ()))
                if not self.parks and self.fence_wait:
                    fences, self.fence_wait = self.fence_wait, deque()
        front.extend(fences)
        if front:
            self._requeue_front(front)

    # -- line requests ------------------------------------------------------------
    def _line_req(self, req: MemRequest) -> None:
        line = req.addr
        ln = self.arr.get(line)
        if req.kind is Kind.LINE_FLUSH:
            self._line_flush(req, ln)
            return
        if ln is None:
            self.misses += 1
            self._mark_busy(line, req.scope, _PENDING)
            fetch = MemRequest(Kind.LOAD, line, req.scope, req.thread, req.core, req.seq,
                               req.pim_enabled, origin=req, reply=("llc", self.on_fill))
            self._push_out(fetch)
            return
        self.hits += 1
        self._serve(req, ln)

    def _serve(self, req: MemRequest, ln: Line) -> None:
        i = req.core
        bit = 1 << i
        l1s = self.sys.l1s
        if req.kind is Kind.LOAD:
            o = ln.owner
            if o != -1 and o != i:
                c = l1s[o].arr.get(ln.addr)
                if c.state == "M":
                    ln.data = list(c.data)
                    ln.dirty = True
                c.state = "S"
                ln.owner = -1
            if ln.sharers & ~bit:
                state = "S"
            else:
                state = "E"
                ln.owner = i
            ln.sharers |= bit
        else:
            others = ln.sharers & ~bit
            j = 0
            while others:
                if others & 1:
                    self._collect(ln, l1s[j].invalidate(ln.addr))
                others >>= 1
                j += 1
            ln.sharers = bit
            ln.owner = i
            state = "M"
        self.arr.touch(ln)
        resp = MemRequest(Kind.DATA, ln.addr, ln.scope, req.thread, i, req.seq, ln.pim,
                          list(ln.data), state=state)
        t = self.sys.net.send("llc", ("l1", i), resp, l1s[i].on_data, resp, extra=self.latency)
        self._mark_busy(ln.addr, ln.scope, t)

    @staticmethod
    def _collect(ln: Line, c: Line | None) -> None:
        if c is not None and c.state == "M":
            ln.data = list(c.data)
            ln.dirty = True

    def _back_invalidate(self, ln: Line) -> None:
        sh = ln.sharers
        j = 0
        l1s = self.sys.l1s
        while sh:
            if sh & 1:
                self._collect(ln, l1s[j].invalidate(ln.addr))
            sh >>= 1
            j += 1
        ln.sharers = 0
        ln.owner = -1

    def on_fill(self, fetch: MemRequest, words: list[int]) -> None:
        line = fetch.addr
        if self.arr.is_full(line):
            victim = self.arr.victim(line, self.busy.__contains__)
            if victim is None:
                # every way is mid-transaction; retry next cycle
                self.engine.after(1, self.on_fill, fetch, words)
                return
            self._evict(victim)
        ln = Line(line, "V", list(words), fetch.scope)
        self.arr.fill(ln)
        self._serve(fetch.origin, ln)

    def _evict(self, ln: Line) -> None:
        self._back_invalidate(ln)
        self.arr.remove(ln.addr)
        if ln.dirty:
            self._writeback(ln, want_ack=False)

    def _writeback(self, ln: Line, want_ack: bool, core: int = -1, reply=None) -> None:
        wb = MemRequest(Kind.WRITEBACK_DATA, ln.addr, ln.scope, core=core, pim_enabled=ln.pim,
                        payload=list(ln.data), want_ack=want_ack, reply=reply)
        self.sys.metrics_writeback(ln.scope)
        self._push_out(wb)

    def _line_flush(self, req: MemRequest, ln: Line | None) -> None:
        core = self.sys.cores_by_l1[req.core]
        if ln is not None:
            self._back_invalidate(ln)
            self.arr.remove(ln.addr)
            if ln.dirty:
                self._writeback(ln, True, req.core, (("core", req.core), core.on_flush_ack))
                return
        self.sys.net.send("llc", ("core", req.core), req, core.on_flush_ack, req, None,
                          extra=self.latency)

    # -- L1 victim / writeback notifications (instantaneous) -------------------
    def l1_evict(self, i: int, c: Line) -> None:
        ln = self.arr.get(c.addr)
        if c.state == "M":
            ln.data = list(c.data)
            ln.dirty = True
        ln.sharers &= ~(1 << i)
        if ln.owner == i:
            ln.owner = -1

    def l1_writeback(self, i: int, c: Line) -> None:
        self.l1_evict(i, c)

    # -- PIM ops and scope fences ---------------------------------------------------
    def _scope_op(self, req: MemRequest) -> None:
        s = req.scope
        m = self.sys.metrics
        is_op = req.kind is Kind.PIM_OP
        if self.arr.sbuf.lookup(s):
            if is_op:
                self.arr.sb_hits += 1
                if m is not None:
                    m.record_scan("llc", self.engine.now, 0, 0, self.arr.n_sets, 0, hit=True)
            self._scope_done(req)
            return
        if is_op:
            self.arr.sb_misses += 1
        flushed, visited, lat = scan_and_flush(self.arr, s, self.scan_cost, self._flush_for_scan)
        self.arr.sbuf.insert(s)
        if m is not None:
            m.record_scan("llc", self.engine.now, lat, visited, self.arr.n_sets, flushed, fence=not is_op)
        self.blocked_until = self.engine.now + lat
        self.engine.at(self.blocked_until, self._scope_done, req)
        # same-scope requests arriving mid-scan park until this one has left
        self._mark_busy(("scan", s), s, self.blocked_until)
        self._schedule_pump()

    def _flush_for_scan(self, ln: Line) -> None:
        self._back_invalidate(ln)
        if ln.dirty:
            wb = MemRequest(Kind.WRITEBACK_DATA, ln.addr, ln.scope, pim_enabled=True,
                            payload=list(ln.data), state="scan")
            self.sys.metrics_writeback(ln.scope, scan=True)
            self._push_out(wb)

    def _scope_done(self, req: MemRequest) -> None:
        if req.kind is Kind.PIM_OP:
            self._push_out(req)
        else:
            self.sys.l1s[req.core].release()

    # -- outbox to the memory controller -----------------------------------------------
    def _push_out(self, req: MemRequest) -> None:
        self.outbox.append(req)
        if len(self.outbox) == 1:
            self.drain_outbox()

    def drain_outbox(self) -> None:
        q = self.outbox
        mc = self.sys.mc
        while q and mc.reserve(self.drain_outbox):
            req = q.popleft()
            self.sys.net.send("llc", "mc", req, mc.receive, req)
            if req.kind is Kind.PIM_OP and req.core >= 0:
                self.sys.l1s[req.core].release()

    @property
    def idle(self) -> bool:
        return not (self.inq or self.busy or self.parks or self.outbox or self.fence_wait)
