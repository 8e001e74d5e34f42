import pytest
from hypothesis import given, strategies as st

from pimsim.cache import CacheArray, Line, ScopeBuffer, scan_and_flush
from pimsim.config import CacheGeometry, Model, ScanCost, ScopeBufferGeometry, SimConfig
from pimsim.memtypes import AddressMap, Opcode, PimOpDescriptor
from pimsim.program import Pim
from pimsim.system import System


def _array(size=4096, ways=2, sbuf=None):
    return CacheArray("t", CacheGeometry(size, ways, 64, 1), sbuf)


def test_scope_buffer_lru_per_set():
    sb = ScopeBuffer(ScopeBufferGeometry(2, 2))
    for s in (0, 2, 4):          # all map to set 0
        sb.insert(s)
    assert 0 not in sb and 2 in sb and 4 in sb
    assert sb.lookup(2)          # refresh: 4 becomes LRU
    sb.insert(6)
    assert sb.scopes() == [2, 6]
    assert sb.erase(2) and not sb.erase(2)


ops = st.lists(st.tuples(st.sampled_from(["fill", "remove"]), st.integers(0, 63), st.sampled_from([None, 0, 1])),
               max_size=80)


@given(ops)
def test_sbv_and_scope_index_stay_exact(plan):
    arr = _array(sbuf=ScopeBufferGeometry(4, 2))
    for act, ln_no, scope in plan:
        addr = ln_no * 64
        have = arr.get(addr)
        if act == "fill" and have is None and not arr.is_full(addr):
            arr.fill(Line(addr, "V", [0] * 8, scope))
        elif act == "remove" and have is not None:
            arr.remove(addr)
    lines = list(arr.lines())
    want = [any(ln.pim and arr.set_of(ln.addr) == i for ln in lines) for i in range(arr.n_sets)]
    assert arr.sbv() == want
    assert arr.high == sum(want)
    for s in (0, 1):
        assert arr.scope_lines.get(s, set()) == {ln.addr for ln in lines if ln.scope == s}
        if s in arr.sbuf:
            assert not arr.scope_lines.get(s)


def test_fill_clears_scope_buffer_entry():
    arr = _array(sbuf=ScopeBufferGeometry(4, 2))
    arr.sbuf.insert(1)
    arr.fill(Line(0, "V", [0] * 8, 1))
    assert 1 not in arr.sbuf


def test_fill_into_full_set_is_rejected():
    arr = _array(size=128, ways=2)      # one set
    arr.fill(Line(0, "V", [], None))
    arr.fill(Line(64, "V", [], None))
    with pytest.raises(AssertionError):
        arr.fill(Line(128, "V", [], None))


def test_scan_flushes_only_the_scope_and_charges_high_sets():
    arr = _array(size=4096, ways=2)     # 32 sets
    arr.fill(Line(0, "V", [0] * 8, 0))
    arr.fill(Line(64, "V", [0] * 8, 1))
    arr.fill(Line(128, "V", [0] * 8, None))
    seen = []
    cost = ScanCost(per_set=3, per_line=5, fixed=7)
    flushed, visited, lat = scan_and_flush(arr, 0, cost, lambda ln: seen.append(ln.addr))
    assert (flushed, visited, seen) == (1, 2, [0])
    assert lat == 3 * 2 + 5 + 7
    assert arr.get(0) is None and arr.get(64) is not None and arr.high == 1


@pytest.mark.parametrize("model", [Model.ATOMIC, Model.STORE, Model.SCOPE, Model.SCOPE_RELAXED])
@pytest.mark.parametrize("k, m", [(1, 4), (2, 8), (4, 16), (8, 3), (5, 100)])
def test_scope_buffer_hit_rate_on_runs(model, k, m):
    prog = [Pim(PimOpDescriptor(s, Opcode.MASK_NOT, dst=1, src_masks=(0,))) for s in range(m) for _ in range(k)]
    r = System(SimConfig(model=model).validate(), AddressMap(m), [prog]).run()
    assert r.metrics.hit_rate("llc") == (k - 1) / k
    assert r.violations == []
