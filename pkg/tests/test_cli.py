import json

import pytest

from pimsim.cli import main

WL = {"kind": "ycsb", "n_ops": 3, "n_scopes": 4, "slots_per_scope": 128}


@pytest.fixture
def wl(tmp_path):
    p = tmp_path / "wl.json"
    p.write_text(json.dumps(WL))
    return str(p)


def test_run_writes_reports_and_is_reproducible(tmp_path, wl, capsys):
    out = tmp_path / "r"
    args = ["run", "--workload", wl, "--model", "scope,naive", "--out", str(out), "--seed", "3"]
    assert main(args) == 0
    first = (out / "run.json").read_bytes(), (out / "run.csv").read_bytes()
    assert main(args) == 0
    assert ((out / "run.json").read_bytes(), (out / "run.csv").read_bytes()) == first
    rows = json.loads(first[0])
    assert [r["model"] for r in rows] == ["scope", "naive"]
    assert rows[0]["total_cycles_norm"] == rows[0]["total_cycles"] / rows[1]["total_cycles"]
    assert "oracle=True" in capsys.readouterr().out


def test_run_with_bad_config_key(tmp_path, capsys):
    c = tmp_path / "c.json"
    c.write_text(json.dumps({"pim": {"bufer": 4}}))
    assert main(["run", "--config", str(c), "--out", str(tmp_path)]) == 2
    assert "pim.bufer: unknown key" in capsys.readouterr().err


def test_run_overrides(tmp_path, wl):
    assert main(["run", "--workload", wl, "--pim-latency", "zero", "--pim-buffer", "unbounded",
                 "--out", str(tmp_path), "--no-oracle"]) == 0
    row = json.loads((tmp_path / "run.json").read_text())[0]
    assert row["oracle_match"] is None


def test_litmus_single_test(tmp_path, capsys):
    assert main(["litmus", "--test", "sb", "--model", "store", "--depth", "6", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "PASS  sb" in out and "1/1 verdicts pass" in out
    rec = json.loads((tmp_path / "litmus.json").read_text())
    assert rec[0]["test"] == "sb" and rec[0]["ok"]


def test_litmus_unknown_test(capsys):
    assert main(["litmus", "--test", "nope"]) == 2
    assert "unknown litmus test" in capsys.readouterr().err


def test_litmus_failing_file(tmp_path, capsys):
    p = tmp_path / "x.litmus"
    p.write_text("PIM x\naddr X = D[0]\n P0 ;\n st X 1 ;\n ld X r0 ;\nforbidden P0:r0=1\n")
    assert main(["litmus", "--file", str(p), "--model", "atomic", "--depth", "12"]) == 1
    assert "FAIL  x" in capsys.readouterr().out


def test_sweep_with_plot(tmp_path, wl):
    assert main(["sweep", "--workload", wl, "--axis", "scopes", "--values", "2,4", "--model", "naive,scope",
                 "--out", str(tmp_path), "--plot"]) == 0
    assert (tmp_path / "sweep.png").stat().st_size > 0
    assert len(json.loads((tmp_path / "sweep.json").read_text())) == 4


def test_sweep_argument_errors(tmp_path, capsys):
    assert main(["sweep", "--out", str(tmp_path)]) == 2
    assert main(["sweep", "--axis", "scopes", "--values", "a,b", "--out", str(tmp_path)]) == 2
    assert main(["sweep", "--axis", "llc", "--values", "3MiB", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "--values" in err and "llc.size" in err


def test_recipes_list(capsys):
    assert main(["recipes", "--list"]) == 0
    assert "uc-vs-flush" in capsys.readouterr().out


def test_sweep_recipe_smoke(tmp_path, capsys):
    assert main(["sweep", "--recipe", "ycsb-scopes", "--scale", "smoke", "--out", str(tmp_path)]) == 0
    assert "PASS  no invariant violations" in capsys.readouterr().out
