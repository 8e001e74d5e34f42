"""Addresses, scopes, the in-scope data layout, and the request vocabulary."""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field
from typing import Any, NamedTuple

WORD = 8
MiB = 1 << 20

# In-scope layout (byte offsets). Field f of record r is a column word; mask
# register k is a strided stripe so result reads land in a subset of sets.
MAX_RECORDS = 32768
MAX_FIELDS = 5
N_MASKS = 8
N_ACCS = 8
FIELD_STRIDE = MAX_RECORDS * WORD              # 256 KiB per column
MASK_BASE = MAX_FIELDS * FIELD_STRIDE          # 1.25 MiB
MASK_LINE_STRIDE = 4096
MASK_WORDS_PER_LINE = 8
AGG_BASE = MASK_BASE + (MAX_RECORDS // 512) * MASK_LINE_STRIDE  # 1.5 MiB
MIN_SCOPE_SIZE = 2 * MiB


class ScopeId(NamedTuple):
    index: int
    base: int
    size_bytes: int


class Kind(enum.IntEnum):
    LOAD = 0
    STORE = 1
    LINE_FLUSH = 2
    PIM_OP = 3
    PIM_ACK = 4
    PIM_FENCE = 5
    SCOPE_FENCE = 6
    INVALIDATE_PROBE = 7
    WRITEBACK_DATA = 8
    # responses internal to the hierarchy
    DATA = 9
    FLUSH_ACK = 10
    FENCE_ACK = 11
    WB_ACK = 12


SCOPE_KINDS = (Kind.PIM_OP, Kind.SCOPE_FENCE)


class Opcode(enum.Enum):
    FILTER_EQ = "filter_eq"
    FILTER_LT = "filter_lt"
    MASK_AND = "mask_and"
    MASK_OR = "mask_or"
    MASK_NOT = "mask_not"
    AGGREGATE = "aggregate"


DEFAULT_LATENCY = {
    Opcode.FILTER_EQ: 1024,
    Opcode.FILTER_LT: 1024,
    Opcode.MASK_AND: 64,
    Opcode.MASK_OR: 64,
    Opcode.MASK_NOT: 64,
    Opcode.AGGREGATE: 2048,
}


@dataclass(frozen=True)
class PimOpDescriptor:
    """One bulk-bitwise operation confined to ``scope``.

    ``field_id``/``immediate`` are used by filters and ``aggregate``;
    ``src_masks`` feed the mask ops and ``aggregate``; ``dst`` is a mask
    register, except for ``aggregate`` where it names an accumulator word.
    """

    scope: int
    opcode: Opcode
    field_id: int = 0
    immediate: int = 0
    dst: int = 0
    src_masks: tuple[int, ...] = ()

    def validate(self, n_fields: int = MAX_FIELDS) -> None:
        op = self.opcode
        if op in (Opcode.FILTER_EQ, Opcode.FILTER_LT, Opcode.AGGREGATE):
            if not 0 <= self.field_id < n_fields:
                raise ValueError(f"{op.value}: field {self.field_id} out of range")
        need = {Opcode.MASK_AND: 2, Opcode.MASK_OR: 2, Opcode.MASK_NOT: 1, Opcode.AGGREGATE: 1}.get(op, 0)
        if len(self.src_masks) != need:
            raise ValueError(f"{op.value}: expects {need} source masks, got {len(self.src_masks)}")
        limit = N_ACCS if op is Opcode.AGGREGATE else N_MASKS
        if not 0 <= self.dst < limit:
            raise ValueError(f"{op.value}: destination {self.dst} out of range")
        for m in self.src_masks:
            if not 0 <= m < N_MASKS:
                raise ValueError(f"{op.value}: mask m{m} out of range")

    def to_json(self) -> dict:
        return {"scope": self.scope, "opcode": self.opcode.value, "field": self.field_id,
                "imm": self.immediate, "dst": self.dst, "src": list(self.src_masks)}

    @classmethod
    def from_json(cls, d: dict) -> "PimOpDescriptor":
        return cls(d["scope"], Opcode(d["opcode"]), d["field"], d["imm"], d["dst"], tuple(d["src"]))


class AddressMap:
    """PIM memory is ``[pim_base, pim_base + n_scopes*scope_size)``; the
    ordinary DRAM region follows it."""

    def __init__(self, n_scopes: int, scope_size: int = 2 * MiB, line_size: int = 64,
                 pim_base: int = 0, dram_size: int = 64 * MiB):
        if scope_size & (scope_size - 1) or scope_size < MIN_SCOPE_SIZE:
            raise ValueError(f"scope size must be a power of two >= {MIN_SCOPE_SIZE}")
        if line_size & (line_size - 1) or scope_size % line_size:
            raise ValueError("line size must be a power of two dividing the scope size")
        if pim_base % scope_size:
            raise ValueError("PIM base must be aligned to the scope size")
        self.n_scopes = n_scopes
        self.scope_size = scope_size
        self.scope_shift = scope_size.bit_length() - 1
        self.line_size = line_size
        self.line_shift = line_size.bit_length() - 1
        self.pim_base = pim_base
        self.pim_end = pim_base + n_scopes * scope_size
        self.dram_base = self.pim_end
        self.mem_size = self.pim_end + dram_size

    def check(self, addr: int) -> None:
        if not 0 <= addr < self.mem_size:
            raise ValueError(f"address {addr:#x} outside physical memory ({self.mem_size:#x})")

    def scope_index(self, addr: int) -> int | None:
        if self.pim_base <= addr < self.pim_end:
            return (addr - self.pim_base) >> self.scope_shift
        return None

    def scope_of(self, addr: int) -> ScopeId | None:
        i = self.scope_index(addr)
        return None if i is None else self.scope(i)

    def scope(self, index: int) -> ScopeId:
        if not 0 <= index < self.n_scopes:
            raise ValueError(f"scope {index} out of range")
        return ScopeId(index, self.pim_base + (index << self.scope_shift), self.scope_size)

    def is_pim(self, addr: int) -> bool:
        return self.pim_base <= addr < self.pim_end

    def line_of(self, addr: int) -> int:
        return addr & ~(self.line_size - 1)

    # layout helpers
    def field_addr(self, scope: int, field_id: int, record: int) -> int:
        return self.scope(scope).base + field_id * FIELD_STRIDE + record * WORD

    def mask_addr(self, scope: int, mask: int, word: int) -> int:
        line, w = divmod(word, MASK_WORDS_PER_LINE)
        return self.scope(scope).base + MASK_BASE + line * MASK_LINE_STRIDE + mask * 64 + w * WORD

    def agg_addr(self, scope: int, acc: int) -> int:
        return self.scope(scope).base + AGG_BASE + acc * 64

    def dram_addr(self, slot: int) -> int:
        return self.dram_base + slot * self.line_size


_uid = itertools.count()


@dataclass(slots=True, eq=False)
class MemRequest:
    """A message travelling between cores, caches, controller and PIM."""

    kind: Kind
    addr: int = 0                 # byte address (line base below the core)
    scope: int | None = None
    thread: int = -1
    core: int = -1
    seq: int = -1                 # program_seq of the originating statement
    pim_enabled: bool = False
    payload: Any = None           # value / line words / PimOpDescriptor
    uncached: bool = False
    exclusive: bool = False
    want_ack: bool = False
    state: str = ""               # granted MESI state on DATA
    origin: "MemRequest | None" = None
    reply: Any = None             # callback for the response, set by the sender
    uid: int = field(default_factory=_uid.__next__)
    t: int = 0

    @property
    def is_scope_op(self) -> bool:
        return self.kind is Kind.PIM_OP or self.kind is Kind.SCOPE_FENCE

    @property
    def is_global(self) -> bool:
        return self.kind is Kind.PIM_FENCE


def same_scope(a: MemRequest, b: MemRequest) -> bool:
    return a.scope is not None and a.scope == b.scope


def make_request(kind: Kind, amap: AddressMap, addr: int = 0, *, thread: int = -1,
                 core: int = -1, seq: int = -1, payload: Any = None,
                 scope: int | None = None, t: int = 0) -> MemRequest:
    """Build a core-level request; scope-carrying kinds never take a raw address."""
    if kind is Kind.PIM_OP:
        if not isinstance(payload, PimOpDescriptor):
            raise TypeError("PIM_OP payload must be a PimOpDescriptor")
        scope = payload.scope
        addr = amap.scope(scope).base
        pim = True
    elif kind is Kind.SCOPE_FENCE:
        if scope is None:
            raise ValueError("SCOPE_FENCE needs a scope")
        addr = amap.scope(scope).base
        pim = True
    elif kind is Kind.PIM_FENCE:
        scope, pim = None, False
    else:
        amap.check(addr)
        scope = amap.scope_index(addr)
        pim = scope is not None
    return MemRequest(kind, addr, scope, thread, core, seq, pim, payload, t=t)


# -- trace lines -----------------------------------------------------------

def encode(req: MemRequest) -> str:
    d: dict[str, Any] = {"t": req.t, "kind": req.kind.name, "thread": req.thread,
                         "core": req.core, "seq": req.seq, "pim": req.pim_enabled}
    if req.kind in SCOPE_KINDS:
        d["scope"] = req.scope
    elif req.kind is not Kind.PIM_FENCE:
        d["addr"] = req.addr
    p = req.payload
    if isinstance(p, PimOpDescriptor):
        d["payload"] = {"pim_op": p.to_json()}
    elif isinstance(p, list):
        d["payload"] = {"words": p}
    elif p is not None:
        d["payload"] = {"value": p}
    return json.dumps(d, sort_keys=True)


def decode(line: str, amap: AddressMap | None = None) -> MemRequest:
    d = json.loads(line)
    kind = Kind[d["kind"]]
    payload = None
    if "payload" in d:
        p = d["payload"]
        if "pim_op" in p:
            payload = PimOpDescriptor.from_json(p["pim_op"])
        elif "words" in p:
            payload = list(p["words"])
        else:
            payload = p["value"]
    scope = d.get("scope")
    addr = d.get("addr", 0)
    if scope is not None and amap is not None:
        addr = amap.scope(scope).base
    elif "addr" in d and amap is not None:
        scope = amap.scope_index(addr)
    return MemRequest(kind, addr, scope, d["thread"], d["core"], d["seq"], d["pim"], payload, t=d["t"])
