import pytest
from hypothesis import given, settings, strategies as st

from pimsim.config import Model
from pimsim.litmus import (LitmusError, builtin, builtin_names, explore, parse_litmus, tso_outcomes, verdict,
                           verdict_record)
from pimsim.memtypes import AddressMap
from pimsim.program import Load, MemFence, Store, parse_program

FOUR = [Model.ATOMIC, Model.STORE, Model.SCOPE, Model.SCOPE_RELAXED]


def _tso(text):
    am = AddressMap(1)
    progs = [parse_program(p.replace(";", "\n"), am, {"X": am.dram_addr(0), "Y": am.dram_addr(1)})
             for p in text.split("|")]
    return {tuple(v for _, v in o) for o in tso_outcomes(progs)}


def test_tso_reference_sb_mp():
    sb = _tso("st X 1; ld Y r0 | st Y 1; ld X r1")
    assert sb == {(0, 0), (0, 1), (1, 0), (1, 1)}
    assert _tso("st X 1; memfence; ld Y r0 | st Y 1; memfence; ld X r1") == {(0, 1), (1, 0), (1, 1)}
    assert (1, 0) not in _tso("st X 1; st Y 1 | ld Y r0; ld X r1")
    # a load reads its own buffered store, or a later store that overwrote it
    assert _tso("st X 2; ld X r0") == {(2,)}
    assert _tso("st X 2; ld X r0 | st X 1") == {(1,), (2,)}


def test_tso_rejects_pim_statements():
    am = AddressMap(1)
    with pytest.raises(ValueError, match="no TSO reference"):
        tso_outcomes([parse_program("pimfence", am)])


SRC = """\
PIM demo
addr X = D[0]
addr A = S1.m2[3]
init X = 7
option skews = 0, 10
 P0        | P1        ;
 st X 1    | ld A r0   ;
           | ld X r1   ;
exists P1:r1=7
forbidden[naive] P1:r1=5
allowed X=1
"""


def test_parse_declarations_and_clauses():
    t = parse_litmus(SRC)
    am = t.amap
    assert t.symbols == {"X": am.dram_addr(0), "A": am.mask_addr(1, 2, 3)}
    assert t.init == {am.dram_addr(0): 7}
    assert t.skews == (0, 10)
    assert [len(p) for p in t.programs] == [1, 2]
    assert [c.kind for c in t.conditions] == ["exists", "forbidden", "allowed"]
    assert t.conditions[1].applies(Model.NAIVE) and not t.conditions[1].applies(Model.SCOPE)


@pytest.mark.parametrize("edit, msg", [
    (lambda s: s.replace("PIM demo", "TEST demo"), "first line"),
    (lambda s: s.replace(" P0        | P1", " Q0        | P1"), "P0, P1"),
    (lambda s: s.replace("ld X r1   ;", "ld X r1 | x ;"), "expected 2 columns"),
    (lambda s: s.replace("P1:r1=7", "P1:r9=7"), "undeclared register"),
    (lambda s: s.replace("[naive]", "[weak]"), "unknown model"),
    (lambda s: s.replace("S1.m2[3]", "S1.z2[3]"), "unknown address"),
    (lambda s: s.replace("option skews", "option skew"), "unknown option"),
    (lambda s: s.replace("ld A r0", "ld A r0 r1"), "P1"),
])
def test_parse_errors(edit, msg):
    with pytest.raises(LitmusError, match=msg):
        parse_litmus(edit(SRC))


def test_unknown_builtin():
    with pytest.raises(LitmusError, match="unknown litmus test"):
        builtin("nope")


def test_builtins_parse():
    names = builtin_names()
    assert {"sb", "mp", "fig1-cycle", "pim-same-scope", "scopefence-order"} <= set(names)
    for n in names:
        assert builtin(n).name == n


def test_exists_fails_only_when_exploration_was_complete():
    t = parse_litmus("PIM one\naddr X = D[0]\n P0 ;\n st X 1 ;\n ld X r0 ;\nexists P0:r0=3\n")
    v = verdict(explore(t, Model.SCOPE, depth=12), t)
    assert not v.outcomes.partial
    assert [r.status for r in v.results][0] == "fail"
    v = verdict(explore(t, Model.SCOPE, "random", trials=4), t)
    assert v.results[0].status == "warn" and v.ok


def test_forbidden_failure_carries_a_replayable_witness():
    from pimsim.litmus import replay
    t = builtin("pim-same-scope")
    o = explore(t, Model.SCOPE_RELAXED, depth=6)
    bad = next(k for k in o.counts if dict(zip(o.keys, k))["P0:r1"] == 0)
    assert replay(t, Model.SCOPE_RELAXED, o.witness[bad]) == bad


def test_exploration_is_deterministic():
    t = builtin("sb")
    a = verdict_record(verdict(explore(t, Model.STORE, depth=6), t))
    b = verdict_record(verdict(explore(t, Model.STORE, depth=6), t))
    assert a == b
    r1 = explore(t, Model.STORE, "random", trials=10, seed=4).counts
    assert r1 == explore(t, Model.STORE, "random", trials=10, seed=4).counts


@pytest.mark.parametrize("name", ["pim-other-scope", "pim-same-scope", "cross-scope", "sb"])
def test_outcomes_grow_as_models_weaken(name):
    t = builtin(name)
    sets = [set(explore(t, m, depth=6).counts) for m in FOUR]
    for strong, weak in zip(sets, sets[1:]):
        assert strong <= weak


# random two-thread load/store programs: every simulated outcome must be TSO-legal
_stmt = st.one_of(
    st.builds(lambda a, v: ("st", a, v), st.sampled_from("XY"), st.integers(1, 3)),
    st.builds(lambda a: ("ld", a), st.sampled_from("XY")),
    st.just(("memfence",)),
)


def _thread(ops, t):
    out, r = [], 0
    for op in ops:
        if op[0] == "st":
            out.append(f"st {op[1]} {op[2]}")
        elif op[0] == "ld":
            out.append(f"ld {op[1]} r{r}")
            r += 1
        else:
            out.append("memfence")
    return out


@settings(max_examples=25)
@given(st.lists(_stmt, min_size=1, max_size=3), st.lists(_stmt, min_size=1, max_size=3),
       st.sampled_from(FOUR), st.integers(0, 1000))
def test_simulated_host_outcomes_are_tso_legal(p0, p1, model, seed):
    a, b = _thread(p0, 0), _thread(p1, 1)
    rows = [f" {a[i] if i < len(a) else '':<10}| {b[i] if i < len(b) else '':<10};" for i in range(max(len(a), len(b)))]
    t = parse_litmus("PIM rnd\naddr X = D[0]\naddr Y = D[1]\noption skews = 0, 20\n P0 | P1 ;\n" + "\n".join(rows))
    ref = tso_outcomes(t.programs, t.init)
    got = explore(t, model, "random", trials=6, seed=seed).as_dicts()
    assert got <= ref


def test_memfence_statement_kinds():
    assert type(parse_program("memfence", AddressMap(1))[0]) is MemFence
    assert isinstance(parse_program("st D[0] 1", AddressMap(1))[0], Store)
    assert isinstance(parse_program("ld D[0]", AddressMap(1))[0], Load)
