import pytest

from pimsim.config import ConfigError, Model, SimConfig
from pimsim.experiment import failures, point_setup, run_point, sweep
from pimsim.workloads import YcsbConfig, generate_ycsb

SMALL = {"kind": "ycsb", "n_ops": 4, "n_scopes": 4, "slots_per_scope": 256}


def test_point_setup_axes():
    cfg = SimConfig()
    c, wl = point_setup(cfg, SMALL, "threads", 8)
    assert c.cores == 16 and wl["n_threads"] == 8
    c, _ = point_setup(cfg, SMALL, "llc", "8MiB")
    assert c.llc.sets == 8192 and cfg.llc.sets == 2048
    with pytest.raises(ConfigError):
        point_setup(cfg, SMALL, "llc", "3MiB")
    with pytest.raises(ConfigError):
        point_setup(cfg, SMALL, "ways", 4)


def test_sweep_rows_normalized_to_naive():
    rows = sweep(SimConfig(), SMALL, "scopes", [2, 4], [Model.NAIVE, Model.SCOPE], workers=1)
    assert [(r["point"], r["model"]) for r in rows] == [(2, "naive"), (2, "scope"), (4, "naive"), (4, "scope")]
    assert rows[0]["total_cycles_norm"] == 1.0
    assert rows[1]["oracle_match"] is True and rows[0]["oracle_match"] is None
    assert failures(rows) == []


def test_failures_lists_violations_and_oracle_problems():
    rows = [{"model": "scope", "axis": None, "violations": 7, "violation_samples": ["x"],
             "oracle_match": False, "oracle_problems": ["scope 1: differs"]}]
    assert failures(rows) == ["scope: x", "scope: 7 violations in total", "scope: scope 1: differs"]


def test_oracle_catches_a_corrupted_image():
    w = generate_ycsb(YcsbConfig(n_ops=3, n_scopes=2, slots_per_scope=128, n_threads=2))
    rep, res = run_point(SimConfig(), w, Model.SCOPE)
    assert rep["oracle_match"]
    from pimsim.experiment import oracle_check
    res.images[1].masks[2, 5] ^= True
    ok, problems = oracle_check(w, res)
    assert not ok and problems == ["scope 1: final image differs from oracle"]
