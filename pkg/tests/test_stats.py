import csv
import io
import json

import pytest

from pimsim.stats import CSV_COLUMNS, BaselineMismatch, RunMetrics, normalize, summarize, to_csv, write_reports


def _report(model, cycles, wh="w1"):
    m = RunMetrics()
    m.total_cycles = cycles
    m.record_scan("llc", 10, 40, 2, 2048, 3)
    m.record_scan("llc", 20, 0, 0, 2048, 0, hit=True)
    return summarize(m, model=model, config_digest="c", workload_hash=wh)


def test_summary_fields():
    r = _report("scope", 100)
    assert r["sb_hit_rate"] == 0.5 and r["mean_scan_latency"] == 20
    assert r["scan_lines_flushed"] == 3


def test_normalize_against_baseline():
    b = _report("naive", 50)
    assert normalize(_report("scope", 100), b)["total_cycles_norm"] == 2.0
    with pytest.raises(BaselineMismatch):
        normalize(_report("scope", 100, wh="w2"), b)


def test_csv_has_stable_columns(tmp_path):
    rows = [dict(_report("scope", 100), axis="scopes", point=4, extra_key=[1])]
    text = to_csv(rows)
    head, row = list(csv.reader(io.StringIO(text)))
    assert head == CSV_COLUMNS
    assert row[CSV_COLUMNS.index("total_cycles")] == "100"
    jp, cp = write_reports(rows, tmp_path / "out", "x")
    assert json.loads(jp.read_text())[0]["extra_key"] == [1]
    assert cp.read_text() == text
