"""Outcome exploration (random trials or bounded-exhaustive choice trees) and verdicts."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from ..config import Model, SimConfig
from ..engine import RandomChooser, ReplayChooser, RngStream
from ..experiment import workers_default
from ..pim import ScopeImage
from ..system import Interloper, RunResult, System
from .fmt import LitmusTest

MAX_RUNS = 200_000


@dataclass(frozen=True)
class Witness:
    """Reproduces one execution: a trial seed, or a choice path under a depth bound."""
    seed: int
    path: tuple[int, ...] = ()
    depth: int | None = None

    def __str__(self):
        if self.depth is None:
            return f"seed={self.seed}"
        return f"path={','.join(map(str, self.path[:self.depth]))}"


@dataclass
class OutcomeSet:
    test: str
    model: Model
    mode: str
    keys: list[str]
    counts: dict[tuple, int] = field(default_factory=dict)
    witness: dict[tuple, Witness] = field(default_factory=dict)
    runs: int = 0
    partial: bool = False
    depth: int | None = None
    violations: list[tuple[Witness, str]] = field(default_factory=list)

    def add(self, outcome: tuple, w: Witness) -> None:
        if outcome in self.counts:
            self.counts[outcome] += 1
        else:
            self.counts[outcome] = 1
            self.witness[outcome] = w
        self.runs += 1

    def envs(self):
        for o in sorted(self.counts):
            yield o, dict(zip(self.keys, o))

    def as_dicts(self) -> set[tuple[tuple[str, int], ...]]:
        """Outcomes restricted to register keys, comparable with the TSO reference."""
        out = set()
        for o in self.counts:
            out.add(tuple(sorted((k, v) for k, v in zip(self.keys, o) if ":" in k)))
        return out

    def merge(self, other: "OutcomeSet") -> None:
        for o, c in other.counts.items():
            if o not in self.counts:
                self.witness[o] = other.witness[o]
            self.counts[o] = self.counts.get(o, 0) + c
        self.runs += other.runs
        self.partial |= other.partial
        self.violations += other.violations


def _config(test: LitmusTest, model: Model, seed: int, base: SimConfig | None, exhaustive: bool) -> SimConfig:
    cfg = base if base is not None else SimConfig()
    net = dataclasses.replace(cfg.network, levels=tuple(test.levels) if exhaustive else None)
    ctl = dataclasses.replace(cfg.controller, reorder_choices=test.reorder or cfg.controller.reorder_choices)
    return cfg.replace(model=model, cores=max(cfg.cores if base is not None else 0, test.n_cores),
                       seed=seed, network=net, controller=ctl,
                       pimfence_orders_all=test.pimfence_orders_all)


def run_once(test: LitmusTest, model: Model, chooser, seed: int = 1,
             base: SimConfig | None = None, exhaustive: bool = False) -> tuple[tuple, RunResult]:
    cfg = _config(test, model, seed, base, exhaustive)
    amap = test.amap
    images = [ScopeImage(test.records) for _ in range(test.scopes)]
    dram: dict[int, list[int]] = {}
    for addr, v in test.init.items():
        s = amap.scope_index(addr)
        if s is not None:
            images[s].write_word(addr - amap.scope(s).base, v)
        else:
            line = addr & ~(cfg.llc.line - 1)
            dram.setdefault(line, [0] * (cfg.llc.line // 8))[(addr - line) >> 3] = v
    il = Interloper(*test.interloper) if test.interloper is not None else None
    sysm = System(cfg, amap, test.programs, images=images, dram=dram, chooser=chooser,
                  interloper=il, skews=test.skews if len(test.skews) > 1 else None)
    res = sysm.run()
    vals = []
    for k in test.observed_keys():
        if ":" in k:
            t, r = k.split(":")
            vals.append(res.regs[int(t[1:])].get(r))
        else:
            vals.append(res.read_word(amap, test.symbols[k]))
    return tuple(vals), res


def replay(test: LitmusTest, model: Model, w: Witness, base: SimConfig | None = None) -> tuple:
    if w.depth is None:
        ch = RandomChooser(RngStream(w.seed, "litmus"))
        return run_once(test, model, ch, w.seed, base)[0]
    return run_once(test, model, ReplayChooser(list(w.path), w.depth), w.seed, base, exhaustive=True)[0]


def _random_chunk(args) -> OutcomeSet:
    test, model, seeds, base = args
    os_ = OutcomeSet(test.name, model, "random", test.observed_keys())
    for s in seeds:
        ch = RandomChooser(RngStream(s, "litmus"))
        out, res = run_once(test, model, ch, s, base)
        w = Witness(s)
        os_.add(out, w)
        os_.violations += [(w, v) for v in res.violations]
    return os_


def explore(test: LitmusTest, model: Model, mode: str = "exhaustive", *, depth: int = 10,
            trials: int = 200, seed: int = 1, base: SimConfig | None = None,
            workers: int | None = None) -> OutcomeSet:
    if mode == "random":
        seeds = [seed * 1_000_003 + i for i in range(trials)]
        n = workers or workers_default()
        if n <= 1 or trials < 2 * n:
            return _random_chunk((test, model, seeds, base))
        chunks = [seeds[i::n] for i in range(n)]
        out = OutcomeSet(test.name, model, "random", test.observed_keys())
        with ProcessPoolExecutor(n) as ex:
            for part in ex.map(_random_chunk, [(test, model, c, base) for c in chunks]):
                out.merge(part)
        return out
    if mode != "exhaustive":
        raise ValueError(f"unknown exploration mode {mode!r}")

    out = OutcomeSet(test.name, model, "exhaustive", test.observed_keys(), depth=depth)
    prefix: list[int] = []
    while True:
        ch = ReplayChooser(prefix, depth)
        o, res = run_once(test, model, ch, seed, base, exhaustive=True)
        w = Witness(seed, tuple(ch.path), depth)
        out.add(o, w)
        out.violations += [(w, v) for v in res.violations]
        if ch.beyond_bound:
            out.partial = True
        path, arity = ch.path, ch.arity
        for i in range(min(len(path), depth) - 1, -1, -1):
            if path[i] + 1 < arity[i]:
                prefix = path[:i] + [path[i] + 1]
                break
        else:
            break
        if out.runs >= MAX_RUNS:
            out.partial = True
            break
    return out


# -- verdicts ---------------------------------------------------------------------------
@dataclass
class ClauseResult:
    kind: str
    text: str
    status: str              # pass | fail | warn | info
    witness: Witness | None = None
    note: str = ""


@dataclass
class Verdict:
    test: str
    model: Model
    results: list[ClauseResult]
    outcomes: OutcomeSet

    @property
    def ok(self) -> bool:
        return all(r.status != "fail" for r in self.results)

    @property
    def warnings(self) -> list[ClauseResult]:
        return [r for r in self.results if r.status == "warn"]


def verdict(outcomes: OutcomeSet, test: LitmusTest) -> Verdict:
    res = []
    matches = {}
    for c in test.conditions:
        if not c.applies(outcomes.model):
            continue
        hit = None
        n = 0
        for o, env in outcomes.envs():
            if c.pred(env):
                n += outcomes.counts[o]
                hit = hit or outcomes.witness[o]
        matches[c.text] = n
        if c.kind == "forbidden":
            if hit is not None:
                res.append(ClauseResult(c.kind, c.text, "fail", hit, f"observed {n}x"))
            else:
                note = "partial exploration" if outcomes.partial else ""
                res.append(ClauseResult(c.kind, c.text, "pass", note=note))
        elif c.kind == "exists":
            if hit is not None:
                st = "pass"
                note = f"observed {n}x"
                if outcomes.mode == "random":
                    note += "; random mode cannot establish a required outcome's absence"
                res.append(ClauseResult(c.kind, c.text, st, hit, note))
            elif outcomes.mode == "random":
                res.append(ClauseResult(c.kind, c.text, "warn", note="not observed; required outcomes need exhaustive mode"))
            elif outcomes.partial:
                res.append(ClauseResult(c.kind, c.text, "warn", note="not observed within the depth bound (partial)"))
            else:
                res.append(ClauseResult(c.kind, c.text, "fail", note="never observed"))
        else:
            res.append(ClauseResult(c.kind, c.text, "info", hit, f"observed {n}x" if n else "not observed"))
    for w, v in outcomes.violations[:1]:
        res.append(ClauseResult("invariant", v, "fail", w, f"{len(outcomes.violations)} violation(s)"))
    return Verdict(test.name, outcomes.model, res, outcomes)


def verdict_record(v: Verdict) -> dict:
    """Plain, ordering-stable form of a verdict for JSON reports."""
    o = v.outcomes
    return {
        "test": v.test, "model": v.model.value, "ok": v.ok, "mode": o.mode, "runs": o.runs,
        "depth": o.depth, "partial": o.partial,
        "outcomes": [{"values": dict(zip(o.keys, k)), "count": o.counts[k], "witness": str(o.witness[k])}
                     for k in sorted(o.counts)],
        "clauses": [{"kind": r.kind, "text": r.text, "status": r.status,
                     "witness": None if r.witness is None else str(r.witness), "note": r.note}
                    for r in v.results],
    }


def verdict_lines(v: Verdict) -> list[str]:
    o = v.outcomes
    head = f"{'PASS' if v.ok else 'FAIL'}  {v.test:<22} {v.model.value:<14} {o.mode} runs={o.runs}"
    if o.partial:
        head += " (partial)"
    out = [head]
    for r in v.results:
        line = f"      {r.status:<5} {r.kind:<9} {r.text}"
        if r.witness is not None and r.status in ("fail", "pass"):
            line += f"  [{r.witness}]"
        if r.note:
            line += f"  ({r.note})"
        out.append(line)
    return out
