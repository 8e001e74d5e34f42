"""Bulk-bitwise PIM main memory: scope images, op buffer, per-scope execution."""

from __future__ import annotations

import json
from collections import deque
from pathlib import Path
from typing import TYPE_CHECKING, Callable

import numpy as np

from .memtypes import (AGG_BASE, FIELD_STRIDE, MASK_BASE, MASK_LINE_STRIDE,
                       MASK_WORDS_PER_LINE, MAX_FIELDS, MAX_RECORDS, N_ACCS,
                       N_MASKS, WORD, Kind, MemRequest, Opcode, PimOpDescriptor)

if TYPE_CHECKING:
    from .engine import Engine
    from .config import PimConfig
    from .stats import RunMetrics

U64 = (1 << 64) - 1
EMPTY_KEY = 1 << 62          # key of an unused record slot; never matches a filter


class PimOperandError(ValueError):
    pass


class ScopeImage:
    """Memory contents of one scope, laid out as field columns + mask stripes."""

    def __init__(self, records: int = 1024, n_fields: int = MAX_FIELDS):
        if not 0 < records <= MAX_RECORDS or records % 64:
            raise ValueError("records per scope must be a positive multiple of 64, <= 32768")
        self.records = records
        self.n_fields = n_fields
        self.fields = np.zeros((n_fields, records), dtype=np.uint64)
        self.masks = np.zeros((N_MASKS, records), dtype=bool)
        self.accs = [0] * N_ACCS
        self.other: dict[int, int] = {}

    # -- word access -------------------------------------------------------
    def _decode(self, off: int):
        if off < MASK_BASE:
            f, rem = divmod(off, FIELD_STRIDE)
            r = rem // WORD
            if f < self.n_fields and r < self.records:
                return ("f", f, r)
            return None
        if off < AGG_BASE:
            line, rem = divmod(off - MASK_BASE, MASK_LINE_STRIDE)
            k, w = divmod(rem, 64)
            word = line * MASK_WORDS_PER_LINE + w // WORD
            if k < N_MASKS and word * 64 < self.records:
                return ("m", k, word)
            return None
        k, rem = divmod(off - AGG_BASE, 64)
        if k < N_ACCS and rem == 0:
            return ("a", k, 0)
        return None

    def read_word(self, off: int) -> int:
        d = self._decode(off)
        if d is None:
            return self.other.get(off, 0)
        kind, a, b = d
        if kind == "f":
            return int(self.fields[a, b])
        if kind == "m":
            bits = np.packbits(self.masks[a, b * 64:(b + 1) * 64], bitorder="little")
            return int.from_bytes(bits.tobytes(), "little")
        return self.accs[a]

    def write_word(self, off: int, value: int) -> None:
        value &= U64
        d = self._decode(off)
        if d is None:
            if value:
                self.other[off] = value
            else:
                self.other.pop(off, None)
            return
        kind, a, b = d
        if kind == "f":
            self.fields[a, b] = value
        elif kind == "m":
            raw = np.frombuffer(value.to_bytes(8, "little"), dtype=np.uint8)
            self.masks[a, b * 64:(b + 1) * 64] = np.unpackbits(raw, bitorder="little").astype(bool)
        else:
            self.accs[a] = value

    def read_line(self, off: int, n_words: int) -> list[int]:
        return [self.read_word(off + i * WORD) for i in range(n_words)]

    def write_line(self, off: int, words: list[int]) -> None:
        for i, v in enumerate(words):
            self.write_word(off + i * WORD, v)

    # -- functional semantics ---------------------------------------------
    def execute(self, d: PimOpDescriptor) -> None:
        try:
            d.validate(self.n_fields)
        except ValueError as e:
            raise PimOperandError(str(e)) from None
        op = d.opcode
        if op is Opcode.FILTER_EQ:
            self.masks[d.dst] = self.fields[d.field_id] == np.uint64(d.immediate & U64)
        elif op is Opcode.FILTER_LT:
            self.masks[d.dst] = self.fields[d.field_id] < np.uint64(d.immediate & U64)
        elif op is Opcode.MASK_AND:
            a, b = d.src_masks
            self.masks[d.dst] = self.masks[a] & self.masks[b]
        elif op is Opcode.MASK_OR:
            a, b = d.src_masks
            self.masks[d.dst] = self.masks[a] | self.masks[b]
        elif op is Opcode.MASK_NOT:
            self.masks[d.dst] = ~self.masks[d.src_masks[0]]
        else:
            sel = self.fields[d.field_id][self.masks[d.src_masks[0]]]
            self.accs[d.dst] = sum(int(x) for x in sel) & U64

    # -- import / export ---------------------------------------------------
    def to_json(self) -> dict:
        return {"records": self.records, "n_fields": self.n_fields,
                "fields": [[int(x) for x in col] for col in self.fields],
                "masks": ["".join("1" if b else "0" for b in m) for m in self.masks],
                "accs": list(self.accs),
                "other": {str(k): v for k, v in sorted(self.other.items())}}

    @classmethod
    def from_json(cls, d: dict) -> "ScopeImage":
        img = cls(d["records"], d["n_fields"])
        img.fields[:] = np.array(d["fields"], dtype=np.uint64)
        img.masks[:] = np.array([[c == "1" for c in m] for m in d["masks"]], dtype=bool)
        img.accs = list(d["accs"])
        img.other = {int(k): v for k, v in d["other"].items()}
        return img

    def equals(self, other: "ScopeImage") -> bool:
        return (self.records == other.records and np.array_equal(self.fields, other.fields)
                and np.array_equal(self.masks, other.masks) and self.accs == other.accs
                and self.other == other.other)


def save_images(images: list[ScopeImage], path: str | Path) -> None:
    Path(path).write_text(json.dumps([im.to_json() for im in images]))


def load_images(path: str | Path) -> list[ScopeImage]:
    return [ScopeImage.from_json(d) for d in json.loads(Path(path).read_text())]


class PimModule:
    """Bounded op buffer feeding per-scope FIFOs; scopes execute in parallel.

    Loads/stores to a scope share its FIFO so they never pass an earlier op,
    and wait while the array is busy.
    """

    def __init__(self, engine: "Engine", cfg: "PimConfig", images: list[ScopeImage],
                 base_of: Callable[[int], int], metrics: "RunMetrics | None" = None,
                 line_words: int = 8):
        self.engine = engine
        self.cfg = cfg
        self.images = images
        self.base_of = base_of
        self.metrics = metrics
        self.line_words = line_words
        self.capacity = cfg.buffer
        self.queues: list[deque] = [deque() for _ in images]
        self.busy_until = [0] * len(images)
        self.running = [False] * len(images)   # an op is executing
        self.kick_pending = [False] * len(images)
        self.occupancy = 0                     # PIM ops buffered or executing
        self.scope_ops = [0] * len(images)     # per-scope count of the above
        self.on_space: Callable[[], None] | None = None
        self.on_apply: Callable[[PimOpDescriptor, MemRequest], None] | None = None
        self.busy_windows: list[tuple[int, int, int]] = []
        self.record_windows = False
        self.applied: list[list[PimOpDescriptor]] = [[] for _ in images]

    def can_accept(self) -> bool:
        return self.capacity is None or self.occupancy < self.capacity

    def enqueue(self, req: MemRequest) -> bool:
        if not self.can_accept():
            return False
        s = req.scope
        if self.metrics is not None:
            unique = sum(1 for c in self.scope_ops if c) + (0 if self.scope_ops[s] else 1)
            self.metrics.record_pim_arrival(self.engine.now, self.occupancy, unique)
        self.occupancy += 1
        self.scope_ops[s] += 1
        self.queues[s].append(req)
        self._kick(s)
        return True

    def access(self, req: MemRequest, respond: Callable[[MemRequest, list[int] | None], None]) -> None:
        self.queues[req.scope].append((req, respond))
        self._kick(req.scope)

    def _kick(self, s: int) -> None:
        if not self.kick_pending[s] and not self.running[s]:
            self.kick_pending[s] = True
            self.engine.at(max(self.engine.now, self.busy_until[s]), self._run, s)

    def _run(self, s: int) -> None:
        self.kick_pending[s] = False
        q = self.queues[s]
        now = self.engine.now
        img = self.images[s]
        while q and not self.running[s]:
            if self.busy_until[s] > now:
                self._kick(s)
                return
            item = q.popleft()
            if isinstance(item, MemRequest):
                d: PimOpDescriptor = item.payload
                if self.on_apply is not None:
                    self.on_apply(d, item)
                img.execute(d)
                self.applied[s].append(d)
                lat = self.cfg.op_latency(d.opcode)
                self.busy_until[s] = now + lat
                if self.record_windows:
                    self.busy_windows.append((s, now, now + lat))
                self.running[s] = True
                self.engine.at(now + lat, self._complete, s)
                return
            req, respond = item
            off = req.addr - self.base_of(s)
            if req.kind is Kind.LOAD:
                words = [img.read_word(off)] if req.uncached else img.read_line(off, self.line_words)
                self.engine.after(self.cfg.access_latency, respond, req, words)
            else:
                if isinstance(req.payload, list):
                    img.write_line(off, req.payload)
                else:
                    img.write_word(off, req.payload)
                self.engine.after(self.cfg.access_latency, respond, req, None)

    def _complete(self, s: int) -> None:
        self.running[s] = False
        self.occupancy -= 1
        self.scope_ops[s] -= 1
        if self.queues[s]:
            self._kick(s)
        if self.on_space is not None:
            self.on_space()

    @property
    def quiescent(self) -> bool:
        return self.occupancy == 0 and not any(self.queues)
