"""Reference x86-TSO outcome enumerator for plain load/store programs.

Independent of the simulator: an operational machine with one FIFO store
buffer per thread, exhaustively interleaved. Used to cross-check the host
ordering the timing model produces.
"""

from __future__ import annotations

from ..program import Delay, Flush, Load, MemFence, Statement, Store


def tso_outcomes(programs: list[list[Statement]], init: dict[int, int] | None = None,
                 ) -> set[tuple[tuple[str, int], ...]]:
    """All final register valuations, as sorted ``(("P<t>:<reg>", value), ...)`` tuples."""
    progs = []
    for t, prog in enumerate(programs):
        ops = []
        for st in prog:
            if isinstance(st, (Load, Store)) or type(st) is MemFence:
                ops.append(st)
            elif isinstance(st, (Delay, Flush)):
                continue
            else:
                raise ValueError(f"thread {t}: {type(st).__name__} has no TSO reference semantics")
        progs.append(tuple(ops))
    n = len(progs)
    mem0 = tuple(sorted((init or {}).items()))
    start = (tuple([0] * n), tuple(() for _ in range(n)), mem0, tuple(() for _ in range(n)))
    seen = set()
    finals = set()
    stack = [start]
    while stack:
        state = stack.pop()
        if state in seen:
            continue
        seen.add(state)
        pcs, bufs, mem, regs = state
        moved = False
        memd = dict(mem)
        for t in range(n):
            # drain the oldest buffered store
            if bufs[t]:
                (a, v), rest = bufs[t][0], bufs[t][1:]
                m2 = dict(memd)
                m2[a] = v
                stack.append((pcs, _put(bufs, t, rest), tuple(sorted(m2.items())), regs))
                moved = True
            if pcs[t] >= len(progs[t]):
                continue
            st = progs[t][pcs[t]]
            npcs = _put(pcs, t, pcs[t] + 1)
            if type(st) is Store:
                stack.append((npcs, _put(bufs, t, bufs[t] + ((st.addr, st.value),)), mem, regs))
                moved = True
            elif type(st) is Load:
                v = None
                for a, bv in reversed(bufs[t]):
                    if a == st.addr:
                        v = bv
                        break
                if v is None:
                    v = memd.get(st.addr, 0)
                r = regs[t] + ((st.reg, v),) if st.reg else regs[t]
                stack.append((npcs, bufs, mem, _put(regs, t, r)))
                moved = True
            elif not bufs[t]:
                stack.append((npcs, bufs, mem, regs))
                moved = True
        if not moved:
            finals.add(tuple(sorted((f"P{t}:{r}", v) for t in range(n) for r, v in regs[t])))
    return finals


def _put(tup: tuple, i: int, v) -> tuple:
    return tup[:i] + (v,) + tup[i + 1:]
