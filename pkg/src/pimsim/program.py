"""Thread programs and their one-statement-per-line text form.

    st A 1 | ld A r0 | pim S0 filter_eq f1 42 m0 | pimfence | scopefence S0
    memfence | flush A | delay 100 | delay 0,300

``delay a,b,...`` picks one of the listed cycle counts at a choice point.

Addresses are symbols (bound by the caller), integer literals, or layout
references: ``S3.f1[7]`` (field 1 of record 7 in scope 3), ``S3.m2[0]``
(word 0 of mask register 2), ``S3.a1`` (accumulator 1), ``D[4]`` (DRAM line 4).
"""

from __future__ import annotations

import re
from typing import NamedTuple, Union

from .memtypes import AddressMap, Opcode, PimOpDescriptor


class ProgramError(ValueError):
    pass


class Load(NamedTuple):
    addr: int
    reg: str | None = None


class Store(NamedTuple):
    addr: int
    value: int


class Pim(NamedTuple):
    desc: PimOpDescriptor


class PimFence(NamedTuple):
    pass


class ScopeFence(NamedTuple):
    scope: int


class MemFence(NamedTuple):
    pass


class Flush(NamedTuple):
    addr: int


class Delay(NamedTuple):
    cycles: int
    alternatives: tuple[int, ...] = ()     # when set, one is chosen at run time


Statement = Union[Load, Store, Pim, PimFence, ScopeFence, MemFence, Flush, Delay]

_REF = re.compile(r"^S(\d+)\.(?:([fm])(\d+)\[(\d+)\]|a(\d+))$")
_DRAM = re.compile(r"^D\[(\d+)\]$")


def resolve_addr(tok: str, amap: AddressMap, symbols: dict[str, int] | None = None) -> int:
    if symbols and tok in symbols:
        return symbols[tok]
    m = _REF.match(tok)
    if m:
        scope = int(m.group(1))
        if m.group(5) is not None:
            return amap.agg_addr(scope, int(m.group(5)))
        kind, idx, word = m.group(2), int(m.group(3)), int(m.group(4))
        if kind == "f":
            return amap.field_addr(scope, idx, word)
        return amap.mask_addr(scope, idx, word)
    m = _DRAM.match(tok)
    if m:
        return amap.dram_addr(int(m.group(1)))
    try:
        return int(tok, 0)
    except ValueError:
        raise ProgramError(f"unknown address {tok!r}") from None


def _scope_tok(tok: str) -> int:
    if not re.fullmatch(r"S\d+", tok):
        raise ProgramError(f"expected a scope like S0, got {tok!r}")
    return int(tok[1:])


def _reg(tok: str, prefix: str) -> int:
    if not re.fullmatch(prefix + r"\d+", tok):
        raise ProgramError(f"expected {prefix}<n>, got {tok!r}")
    return int(tok[len(prefix):])


def parse_pim(args: list[str]) -> PimOpDescriptor:
    if len(args) < 2:
        raise ProgramError("pim needs a scope and an opcode")
    scope = _scope_tok(args[0])
    try:
        op = Opcode(args[1])
    except ValueError:
        raise ProgramError(f"unknown PIM opcode {args[1]!r}") from None
    rest = args[2:]
    try:
        if op in (Opcode.FILTER_EQ, Opcode.FILTER_LT):
            f, imm, dst = rest
            d = PimOpDescriptor(scope, op, _reg(f, "f"), int(imm, 0), _reg(dst, "m"))
        elif op in (Opcode.MASK_AND, Opcode.MASK_OR):
            a, b, dst = rest
            d = PimOpDescriptor(scope, op, dst=_reg(dst, "m"), src_masks=(_reg(a, "m"), _reg(b, "m")))
        elif op is Opcode.MASK_NOT:
            a, dst = rest
            d = PimOpDescriptor(scope, op, dst=_reg(dst, "m"), src_masks=(_reg(a, "m"),))
        else:
            f, src, dst = rest
            d = PimOpDescriptor(scope, op, _reg(f, "f"), dst=_reg(dst, "a"), src_masks=(_reg(src, "m"),))
    except ValueError as e:
        raise ProgramError(f"bad operands for {op.value}: {' '.join(rest)} ({e})") from None
    try:
        d.validate()
    except ValueError as e:
        raise ProgramError(str(e)) from None
    return d


def parse_statement(line: str, amap: AddressMap, symbols: dict[str, int] | None = None) -> Statement | None:
    toks = line.split("#", 1)[0].split()
    if not toks:
        return None
    op, args = toks[0].lower(), toks[1:]

    def arity(n):
        if len(args) != n:
            raise ProgramError(f"{op!r} takes {n} operand(s): {line.strip()!r}")

    if op == "ld":
        if len(args) not in (1, 2):
            raise ProgramError(f"'ld' takes an address and an optional register: {line.strip()!r}")
        return Load(resolve_addr(args[0], amap, symbols), args[1] if len(args) == 2 else None)
    if op == "st":
        arity(2)
        try:
            val = int(args[1], 0)
        except ValueError:
            raise ProgramError(f"bad store value {args[1]!r}") from None
        return Store(resolve_addr(args[0], amap, symbols), val)
    if op == "pim":
        return Pim(parse_pim(args))
    if op == "pimfence":
        arity(0)
        return PimFence()
    if op == "scopefence":
        arity(1)
        return ScopeFence(_scope_tok(args[0]))
    if op == "memfence":
        arity(0)
        return MemFence()
    if op == "flush":
        arity(1)
        return Flush(resolve_addr(args[0], amap, symbols))
    if op == "delay":
        arity(1)
        try:
            vals = tuple(int(v, 0) for v in args[0].split(","))
        except ValueError:
            raise ProgramError(f"bad delay {args[0]!r}") from None
        if any(v < 0 for v in vals):
            raise ProgramError("delay must be >= 0")
        return Delay(vals[0], vals if len(vals) > 1 else ())
    raise ProgramError(f"unknown statement {op!r}")


def parse_program(text: str, amap: AddressMap, symbols: dict[str, int] | None = None) -> list[Statement]:
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        try:
            st = parse_statement(line, amap, symbols)
        except ProgramError as e:
            raise ProgramError(f"line {n}: {e}") from None
        if st is not None:
            out.append(st)
    return out


def format_pim(d: PimOpDescriptor) -> str:
    op = d.opcode
    head = f"pim S{d.scope} {op.value}"
    if op in (Opcode.FILTER_EQ, Opcode.FILTER_LT):
        return f"{head} f{d.field_id} {d.immediate} m{d.dst}"
    if op is Opcode.AGGREGATE:
        return f"{head} f{d.field_id} m{d.src_masks[0]} a{d.dst}"
    return f"{head} " + " ".join(f"m{m}" for m in d.src_masks) + f" m{d.dst}"


def format_statement(st: Statement) -> str:
    match st:
        case Load(addr, reg):
            return f"ld {addr:#x}" + (f" {reg}" if reg else "")
        case Store(addr, value):
            return f"st {addr:#x} {value}"
        case Pim(desc):
            return format_pim(desc)
        case PimFence():
            return "pimfence"
        case ScopeFence(scope):
            return f"scopefence S{scope}"
        case MemFence():
            return "memfence"
        case Flush(addr):
            return f"flush {addr:#x}"
        case Delay(cycles, alts):
            return "delay " + (",".join(map(str, alts)) if alts else str(cycles))
    raise TypeError(st)


def format_program(prog: list[Statement]) -> str:
    return "\n".join(format_statement(s) for s in prog) + "\n"
