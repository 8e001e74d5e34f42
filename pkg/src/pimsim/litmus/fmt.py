"""Litmus text format.

    PIM sb
    addr X = D[0]
    addr Y = D[1]
    init X = 0
    option skews = 0, 20
     P0        | P1        ;
     st X 1    | st Y 1    ;
     ld Y r0   | ld X r1   ;
    exists P0:r0=0 /\\ P1:r1=0
    forbidden[atomic,store] P0:r0=1 /\\ P1:r1=1

Clause kinds are ``exists`` (must be observed), ``forbidden`` and
``allowed`` (informational). An optional ``[model,...]`` list restricts a
clause to those models. Atoms are ``P<t>:<reg>=<v>`` or ``<addr>=<v>``
(final memory); values may be prefixed with ``~`` for a 64-bit complement.
Atoms combine with ``/\\``, ``\\/``, ``not`` and parentheses.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from ..config import Model
from ..memtypes import AddressMap
from ..program import Load, ProgramError, Statement, format_statement, parse_statement, resolve_addr

U64 = (1 << 64) - 1


class LitmusError(ValueError):
    pass


# -- predicates ---------------------------------------------------------------------
@dataclass(frozen=True)
class Atom:
    key: str
    value: int
    neg: bool = False          # "!=" atom

    def __call__(self, env: dict[str, int]) -> bool:
        return (env.get(self.key) == self.value) != self.neg

    def keys(self):
        yield self.key


@dataclass(frozen=True)
class Op:
    kind: str                  # "and" | "or" | "not"
    args: tuple

    def __call__(self, env: dict[str, int]) -> bool:
        if self.kind == "and":
            return all(a(env) for a in self.args)
        if self.kind == "or":
            return any(a(env) for a in self.args)
        return not self.args[0](env)

    def keys(self):
        for a in self.args:
            yield from a.keys()


_TOK = re.compile(r"\s*(/\\|\\/|\(|\)|!=|=|not\b|[~\w:.\[\]-]+)")


def _tokens(text: str) -> list[str]:
    out, pos = [], 0
    text = text.strip()
    while pos < len(text):
        m = _TOK.match(text, pos)
        if not m or m.end() == pos:
            raise LitmusError(f"cannot parse condition near {text[pos:]!r}")
        out.append(m.group(1))
        pos = m.end()
    return out


def _value(tok: str) -> int:
    neg = tok.startswith("~")
    try:
        v = int(tok[1:] if neg else tok, 0)
    except ValueError:
        raise LitmusError(f"bad value {tok!r}") from None
    return (~v) & U64 if neg else v & U64


def parse_predicate(text: str):
    toks = _tokens(text)
    pos = 0

    def peek():
        return toks[pos] if pos < len(toks) else None

    def take(expect=None):
        nonlocal pos
        if pos >= len(toks):
            raise LitmusError(f"condition ends early: {text!r}")
        t = toks[pos]
        if expect is not None and t != expect:
            raise LitmusError(f"expected {expect!r}, got {t!r} in {text!r}")
        pos += 1
        return t

    def disj():
        args = [conj()]
        while peek() == "\\/":
            take()
            args.append(conj())
        return args[0] if len(args) == 1 else Op("or", tuple(args))

    def conj():
        args = [unary()]
        while peek() == "/\\":
            take()
            args.append(unary())
        return args[0] if len(args) == 1 else Op("and", tuple(args))

    def unary():
        t = peek()
        if t == "not":
            take()
            return Op("not", (unary(),))
        if t == "(":
            take()
            e = disj()
            take(")")
            return e
        key = take()
        rel = take()
        if rel not in ("=", "!="):
            raise LitmusError(f"expected '=' after {key!r} in {text!r}")
        return Atom(key, _value(take()), rel == "!=")

    e = disj()
    if pos != len(toks):
        raise LitmusError(f"trailing tokens in condition {text!r}")
    return e


@dataclass
class Condition:
    kind: str                          # "exists" | "forbidden" | "allowed"
    text: str
    pred: object
    models: frozenset[Model] | None = None

    def applies(self, model: Model) -> bool:
        return self.models is None or model in self.models


# -- tests -----------------------------------------------------------------------------
@dataclass
class LitmusTest:
    name: str
    programs: list[list[Statement]]
    symbols: dict[str, int] = field(default_factory=dict)
    init: dict[int, int] = field(default_factory=dict)
    conditions: list[Condition] = field(default_factory=list)
    interloper: tuple[int, int, int] | None = None     # (addr, core, ref_thread)
    scopes: int = 2
    records: int = 1024
    skews: tuple[int, ...] = (0,)
    levels: tuple[int, ...] = (0, 16)
    pimfence_orders_all: bool = True
    reorder: bool = False
    cores: int | None = None
    source: str = ""

    @property
    def amap(self) -> AddressMap:
        return AddressMap(self.scopes)

    @property
    def n_cores(self) -> int:
        n = len(self.programs)
        if self.interloper is not None:
            n = max(n, self.interloper[1] + 1)
        return max(n, self.cores or 0)

    def registers(self) -> list[str]:
        regs = []
        for t, prog in enumerate(self.programs):
            for st in prog:
                if type(st) is Load and st.reg and f"P{t}:{st.reg}" not in regs:
                    regs.append(f"P{t}:{st.reg}")
        return regs

    def observed_keys(self) -> list[str]:
        """Registers plus any memory names the conditions mention, in a stable order."""
        keys = self.registers()
        for c in self.conditions:
            for k in c.pred.keys():
                if k not in keys:
                    keys.append(k)
        return keys


_OPTION_INT = {"scopes", "records", "cores"}
_OPTION_TUPLE = {"skews", "levels"}


def parse_litmus(text: str, origin: str = "<string>") -> LitmusTest:
    lines = text.splitlines()
    name = None
    decl: list[tuple[int, str]] = []
    table: list[tuple[int, list[str]]] = []
    clauses: list[tuple[int, str]] = []
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        s = line.strip()
        if name is None:
            if not s.startswith("PIM "):
                raise LitmusError(f"{origin}:{n}: first line must be 'PIM <name>'")
            name = s[4:].strip()
            continue
        if "|" in s or s.endswith(";"):
            cells = [c.strip() for c in s.rstrip(";").split("|")]
            table.append((n, cells))
        elif re.match(r"^(exists|forbidden|allowed)\b", s):
            clauses.append((n, s))
        else:
            decl.append((n, s))
    if name is None:
        raise LitmusError(f"{origin}: empty test")
    if not table:
        raise LitmusError(f"{origin}: no thread table")

    t = LitmusTest(name, [], source=text)
    interloper_src = None
    for n, s in decl:
        toks = s.split()
        try:
            if toks[0] == "addr" and len(toks) == 4 and toks[2] == "=":
                if not re.fullmatch(r"[A-Za-z_]\w*", toks[1]):
                    raise LitmusError(f"bad symbol name {toks[1]!r}")
                t.symbols[toks[1]] = toks[3]           # resolved once scopes are known
            elif toks[0] == "init" and len(toks) == 4 and toks[2] == "=":
                t.init[toks[1]] = _value(toks[3])
            elif toks[0] == "option" and len(toks) >= 4 and toks[2] == "=":
                key, val = toks[1], " ".join(toks[3:])
                if key in _OPTION_INT:
                    setattr(t, key, int(val, 0))
                elif key in _OPTION_TUPLE:
                    setattr(t, key, tuple(int(x, 0) for x in val.replace(",", " ").split()))
                elif key == "pimfence":
                    if val not in ("all", "pim"):
                        raise LitmusError("option pimfence must be 'all' or 'pim'")
                    t.pimfence_orders_all = val == "all"
                elif key == "reorder":
                    t.reorder = val in ("1", "true", "yes")
                else:
                    raise LitmusError(f"unknown option {key!r}")
            elif toks[0] == "interloper":
                interloper_src = toks
            else:
                raise LitmusError(f"cannot parse {s!r}")
        except (ValueError, IndexError) as e:
            raise LitmusError(f"{origin}:{n}: {e}") from None

    amap = t.amap
    try:
        t.symbols = {k: resolve_addr(v, amap) for k, v in t.symbols.items()}
        t.init = {resolve_addr(k, amap, t.symbols): v for k, v in t.init.items()}
    except ProgramError as e:
        raise LitmusError(f"{origin}: {e}") from None

    hn, header = table[0]
    for i, h in enumerate(header):
        if h != f"P{i}":
            raise LitmusError(f"{origin}:{hn}: thread columns must be named P0, P1, ... (got {h!r})")
    t.programs = [[] for _ in header]
    for n, cells in table[1:]:
        if len(cells) != len(header):
            raise LitmusError(f"{origin}:{n}: expected {len(header)} columns, got {len(cells)}")
        for i, c in enumerate(cells):
            try:
                st = parse_statement(c, amap, t.symbols)
            except ProgramError as e:
                raise LitmusError(f"{origin}:{n}: P{i}: {e}") from None
            if st is not None:
                t.programs[i].append(st)

    if interloper_src is not None:
        # interloper ld <addr> on <Pn|Cn> after <Pm>
        toks = interloper_src
        if len(toks) != 7 or toks[1] != "ld" or toks[3] != "on" or toks[5] != "after":
            raise LitmusError(f"{origin}: interloper syntax is 'interloper ld <addr> on C<n> after P<m>'")
        m1, m2 = re.fullmatch(r"[CP](\d+)", toks[4]), re.fullmatch(r"P(\d+)", toks[6])
        if not m1 or not m2 or int(m2.group(1)) >= len(t.programs):
            raise LitmusError(f"{origin}: bad interloper placement {' '.join(toks[3:])!r}")
        t.interloper = (resolve_addr(toks[2], amap, t.symbols), int(m1.group(1)), int(m2.group(1)))

    regs = set(t.registers())
    for n, s in clauses:
        m = re.match(r"^(exists|forbidden|allowed)(?:\[([\w,\s-]*)\])?\s+(.*)$", s)
        if not m:
            raise LitmusError(f"{origin}:{n}: bad clause {s!r}")
        models = None
        if m.group(2) is not None:
            try:
                models = frozenset(Model.parse(x) for x in m.group(2).split(",") if x.strip())
            except ValueError as e:
                raise LitmusError(f"{origin}:{n}: {e}") from None
        pred = parse_predicate(m.group(3))
        for k in pred.keys():
            if ":" in k:
                if k not in regs:
                    raise LitmusError(f"{origin}:{n}: condition names undeclared register {k!r}")
            elif k not in t.symbols:
                raise LitmusError(f"{origin}:{n}: condition names undeclared address {k!r}")
        t.conditions.append(Condition(m.group(1), m.group(3).strip(), pred, models))
    return t


def load_litmus(path: str | Path) -> LitmusTest:
    p = Path(path)
    return parse_litmus(p.read_text(), str(p))


def format_programs(t: LitmusTest) -> str:
    """Thread table with resolved addresses, for reports."""
    cols = [[format_statement(st) for st in prog] for prog in t.programs]
    rows = max(len(c) for c in cols)
    width = [max([len(f"P{i}")] + [len(s) for s in c]) for i, c in enumerate(cols)]
    out = [" | ".join(f"P{i}".ljust(width[i]) for i in range(len(cols))) + " ;"]
    for r in range(rows):
        out.append(" | ".join((c[r] if r < len(c) else "").ljust(width[i]) for i, c in enumerate(cols)) + " ;")
    return "\n".join(out)
