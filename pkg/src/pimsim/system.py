"""Assembles cores, caches, network, controller and PIM module into one run."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

from .cache import LLC, L1, CacheArray
from .config import MODELS, Model, SimConfig
from .core import Core
from .engine import Chooser, Engine, SimulatorBug
from .memctrl import MemController
from .memtypes import AddressMap, Kind, MemRequest, PimOpDescriptor, encode
from .network import Network
from .pim import PimModule, ScopeImage
from .program import Statement
from .stats import RunMetrics


class Interloper(NamedTuple):
    """A load of ``addr`` from ``core``'s L1, issued right after ``ref_thread``
    commits a statement chosen at a nondeterministic point."""
    addr: int
    core: int
    ref_thread: int


@dataclass
class RunResult:
    model: Model
    total_cycles: int
    events: int
    metrics: RunMetrics
    images: list[ScopeImage]
    dram: dict[int, list[int]]
    regs: list[dict[str, int]]
    loads: list[list[int]]
    load_addrs: list[list[int]]
    violations: list[str]
    interloper_value: int | None = None
    choice_path: list[int] = field(default_factory=list)
    trace_digest: str | None = None

    def read_word(self, amap: AddressMap, addr: int) -> int:
        s = amap.scope_index(addr)
        if s is not None:
            return self.images[s].read_word(addr - amap.scope(s).base)
        line = addr & ~63
        words = self.dram.get(line)
        return 0 if words is None else words[(addr - line) >> 3]


class System:
    def __init__(self, cfg: SimConfig, amap: AddressMap, programs: list[list[Statement]], *,
                 images: list[ScopeImage] | None = None, records: int = 64,
                 dram: dict[int, list[int]] | None = None, chooser: Chooser | None = None,
                 interloper: Interloper | None = None, skews: tuple[int, ...] | None = None,
                 trace: Callable[[str], None] | None = None, event_trace: bool = False):
        cfg.validate()
        n = len(programs)
        if n > cfg.cores:
            raise ValueError(f"{n} threads need at least {n} cores (config has {cfg.cores})")
        self.cfg = cfg
        self.amap = amap
        self.model = cfg.model
        self.relaxed = cfg.model is Model.SCOPE_RELAXED
        self.line_size = cfg.llc.line
        self.engine = Engine(cfg.seed, cfg.max_events, chooser, trace=event_trace)
        self.metrics = RunMetrics()
        self.trace = trace
        self.net = Network(self.engine, cfg.network, ~(cfg.llc.line - 1))
        self.l1s = [L1(self, i) for i in range(cfg.cores)]
        self.llc = LLC(self)
        self.mc = MemController(self)
        if dram:
            self.mc.dram.update({k: list(v) for k, v in dram.items()})
        if images is None:
            images = [ScopeImage(records) for _ in range(amap.n_scopes)]
        if len(images) != amap.n_scopes:
            raise ValueError("one scope image per scope required")
        self.pim = PimModule(self.engine, cfg.pim, images, lambda s: amap.scope(s).base,
                             self.metrics, cfg.llc.line // 8)
        self.pim.on_space = self.mc.on_pim_space
        self.pim.on_apply = self._on_apply
        self.violations: list[str] = []
        self.check_flush = cfg.model in MODELS

        # choice points in a fixed order: interloper position, start skews, then traffic
        self.interloper = interloper
        self.interloper_at = None
        self.interloper_value = None
        if interloper is not None:
            self.interloper_at = self.engine.choose(len(programs[interloper.ref_thread]) + 1, "interloper") - 1
        starts = [0] * n
        if skews:
            starts = [skews[self.engine.choose(len(skews), "skew")] for _ in range(n)]
        self.cores = [Core(self, t, t, programs[t], starts[t]) for t in range(n)]
        self.cores_by_l1 = self.cores
        self.remaining = n
        if interloper is not None:
            self.cores[interloper.ref_thread].on_commit = self._maybe_interlope

    # -- hooks --------------------------------------------------------------------
    def line_request(self, kind: Kind, line: int, core: int) -> MemRequest:
        s = self.amap.scope_index(line)
        return MemRequest(kind, line, s, core=core, pim_enabled=s is not None, t=self.engine.now)

    def trace_request(self, req: MemRequest) -> None:
        if self.trace is not None:
            self.trace(encode(req))

    def metrics_writeback(self, scope: int | None, scan: bool = False) -> None:
        self.metrics.writebacks += 1
        if scan:
            self.metrics.scan_writebacks_sent += 1

    def thread_done(self, core: Core) -> None:
        self.remaining -= 1

    def _maybe_interlope(self, core: Core, seq: int) -> None:
        if seq == self.interloper_at:
            self._interlope()

    def _interlope(self) -> None:
        il = self.interloper
        if self.model is Model.UNCACHEABLE and self.amap.is_pim(il.addr):
            req = MemRequest(Kind.LOAD, il.addr, self.amap.scope_index(il.addr), core=il.core,
                             pim_enabled=True, uncached=True)
            req.reply = (("core", il.core), lambda r, w: self._interloper_done(w[0]))
            self._send_direct(("core", il.core), req)
        else:
            self.l1s[il.core].load(il.addr, self._interloper_done)

    def _interloper_done(self, value: int) -> None:
        self.interloper_value = value

    def _send_direct(self, src, req: MemRequest) -> None:
        if self.mc.reserve(lambda: self._send_direct(src, req)):
            self.net.send(src, "mc", req, self.mc.receive, req)

    def _on_apply(self, d: PimOpDescriptor, req: MemRequest) -> None:
        self.metrics.pim_ops += 1
        if not self.check_flush:
            return
        s = d.scope
        for arr in self._arrays():
            if s in arr.scope_lines:
                self.violations.append(
                    f"t={self.engine.now}: atomic-flush: {arr.name} holds {len(arr.scope_lines[s])} "
                    f"line(s) of scope {s} when a PIM op applies")

    def _arrays(self) -> list[CacheArray]:
        return [l1.arr for l1 in self.l1s] + [self.llc.arr]

    # -- invariants -------------------------------------------------------------------
    def check_invariants(self) -> list[str]:
        out = []
        t = self.engine.now
        for arr in self._arrays():
            counts = [0] * arr.n_sets
            per_scope: dict[int, int] = {}
            for i, d in enumerate(arr.sets):
                for ln in d.values():
                    if ln.pim:
                        counts[i] += 1
                        per_scope[ln.scope] = per_scope.get(ln.scope, 0) + 1
            bits = [c > 0 for c in counts]
            if bits != arr.sbv() or arr.high != sum(bits):
                bad = [i for i in range(arr.n_sets) if bits[i] != (arr.pim_count[i] > 0)]
                out.append(f"t={t}: SBV exactness: {arr.name} sets {bad[:8]}")
            if arr.sbuf is not None:
                for s in arr.sbuf.scopes():
                    if per_scope.get(s):
                        out.append(f"t={t}: scope buffer: {arr.name} lists scope {s} "
                                   f"but holds {per_scope[s]} of its lines")
        llc = self.llc.arr
        writers: dict[int, int] = {}
        holders: dict[int, int] = {}
        for i, l1 in enumerate(self.l1s):
            for ln in l1.arr.lines():
                up = llc.get(ln.addr)
                if up is None:
                    out.append(f"t={t}: inclusivity: line {ln.addr:#x} in l1[{i}] but not in llc")
                elif not up.sharers >> i & 1:
                    out.append(f"t={t}: directory: llc misses l1[{i}] as sharer of {ln.addr:#x}")
                holders[ln.addr] = holders.get(ln.addr, 0) + 1
                if ln.state in "ME":
                    writers[ln.addr] = writers.get(ln.addr, 0) + 1
        for a, w in writers.items():
            if w > 1 or holders[a] > 1:
                out.append(f"t={t}: single-writer: line {a:#x} has {w} M/E copies, {holders[a]} holders")
        return out

    def _periodic(self) -> None:
        self.violations.extend(self.check_invariants())

    # -- running ----------------------------------------------------------------------------
    def run(self) -> RunResult:
        eng = self.engine
        if self.cfg.check_every:
            eng.every(self.cfg.check_every, self._periodic)
        if self.interloper is not None and self.interloper_at == -1:
            eng.at(0, self._interlope)
        for c in self.cores:
            c.start()
        eng.run_until()
        stuck = [c.thread for c in self.cores if not c.done]
        if stuck or not (self.llc.idle and self.mc.idle and self.pim.quiescent):
            raise SimulatorBug(
                f"deadlock at t={eng.now}: threads {stuck} unfinished "
                + "; ".join(f"core {c.thread}: pc={c.pc} wb={c.wb} waiting={c.waiting}" for c in self.cores if not c.done))
        self.violations.extend(self.check_invariants())
        m = self.metrics
        m.total_cycles = eng.now
        m.thread_cycles = [c.finish_time for c in self.cores]
        m.loads = sum(len(c.loads) for c in self.cores)
        m.messages = self.net.messages
        m.events = eng.dispatched
        m.scan_writebacks_seen = self.mc.scan_writebacks
        self._flush_all()
        return RunResult(self.model, eng.now, eng.dispatched, m, self.pim.images, self.mc.dram,
                         [dict(c.regs) for c in self.cores], [c.loads for c in self.cores],
                         [c.load_addrs for c in self.cores], self.violations, self.interloper_value,
                         list(eng.chooser.path) if eng.chooser is not None else [],
                         eng.trace_digest())

    def _flush_all(self) -> None:
        """Functional write-back of every dirty copy, L1s first."""
        llc = self.llc.arr
        for l1 in self.l1s:
            for ln in l1.arr.lines():
                if ln.state == "M":
                    up = llc.get(ln.addr)
                    up.data = list(ln.data)
                    up.dirty = True
        for ln in llc.lines():
            if not ln.dirty:
                continue
            if ln.scope is not None:
                base = self.amap.scope(ln.scope).base
                self.pim.images[ln.scope].write_line(ln.addr - base, ln.data)
            else:
                self.mc.dram[ln.addr] = list(ln.data)
