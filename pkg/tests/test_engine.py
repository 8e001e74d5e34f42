import pytest
from hypothesis import given, strategies as st

from pimsim.engine import Engine, LivelockError, RandomChooser, ReplayChooser, RngStream, SimulatorBug


def test_events_fire_in_time_then_insertion_order():
    e = Engine()
    seen = []
    e.at(5, seen.append, "b")
    e.at(3, seen.append, "a")
    e.at(5, seen.append, "c")
    e.after(0, seen.append, "first")
    assert e.run_until() == 5
    assert seen == ["first", "a", "b", "c"]


def test_run_until_limit_leaves_later_events():
    e = Engine()
    seen = []
    for t in (1, 2, 10):
        e.at(t, seen.append, t)
    e.run_until(5)
    assert seen == [1, 2] and e.pending == 1


def test_scheduling_into_the_past_is_a_bug():
    e = Engine()
    e.at(10, lambda: e.at(3, print))
    with pytest.raises(SimulatorBug):
        e.run_until()


def test_watchdog():
    e = Engine(max_events=100)

    def again():
        e.after(1, again)
    e.after(0, again)
    with pytest.raises(LivelockError):
        e.run_until()


def test_periodic_hook_runs_every_n_events():
    e = Engine()
    ticks = []
    e.every(10, lambda: ticks.append(e.dispatched))
    for t in range(35):
        e.at(t, lambda: None)
    e.run_until()
    assert ticks == [10, 20, 30]


@given(st.integers(0, 2**63), st.text(min_size=1, max_size=12))
def test_streams_are_reproducible(seed, label):
    a, b = RngStream(seed, label), RngStream(seed, label)
    assert [a.raw() for _ in range(5)] == [b.raw() for _ in range(5)]


def test_new_streams_do_not_perturb_old_ones():
    e1, e2 = Engine(seed=7), Engine(seed=7)
    x = [e1.rng("net").raw() for _ in range(3)]
    e2.rng("other").raw()
    assert [e2.rng("net").raw() for _ in range(3)] == x


@given(st.integers(0, 1000), st.integers(-50, 50), st.integers(0, 50))
def test_uniform_in_range(seed, lo, span):
    r = RngStream(seed, "u")
    for _ in range(20):
        assert lo <= r.uniform(lo, lo + span) <= lo + span


def test_uniform_rejects_empty_range():
    with pytest.raises(ValueError):
        RngStream(1, "u").uniform(3, 2)


def test_replay_chooser_follows_prefix_then_zero():
    ch = ReplayChooser([1, 2], depth_bound=3)
    assert [ch.choose(3), ch.choose(3), ch.choose(2), ch.choose(2)] == [1, 2, 0, 0]
    assert ch.beyond_bound == 1
    assert ch.arity == [3, 3, 2, 2]


def test_replay_divergence_detected():
    ch = ReplayChooser([4], depth_bound=3)
    with pytest.raises(SimulatorBug):
        ch.choose(2)


def test_single_option_points_are_not_recorded():
    ch = RandomChooser(RngStream(1, "c"))
    e = Engine(chooser=ch)
    assert e.choose(1, "x") == 0
    assert ch.path == []
    e.choose(4, "x")
    assert len(ch.path) == 1
