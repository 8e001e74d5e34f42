import copy
import json
from pathlib import Path

import pytest

from pimsim.recipes import RecipeError, builtin_recipe_names, check_recipe, evaluate, load_recipe, run_recipe

FIXTURES = Path(__file__).parent / "fixtures"

SWEEP = {
    "name": "t", "kind": "sweep",
    "workload": {"kind": "ycsb", "n_ops": 2, "n_scopes": 2, "slots_per_scope": 128},
    "sweep": {"axis": "scopes", "values": [2, 4], "models": ["naive", "scope"]},
    "expect": [{"check": "at_least", "metric": "total_cycles", "a": "scope", "b": "naive"}],
}


def test_builtin_recipes_are_well_formed():
    names = builtin_recipe_names()
    assert {"fig1-cycle", "uc-vs-flush", "zero-latency", "interleaving"} <= set(names)
    for n in names:
        check_recipe(load_recipe(n), n)


def test_bad_fixture_rejected_with_path():
    with pytest.raises(RecipeError, match=r"sweep\.values.*3MiB"):
        check_recipe(load_recipe(FIXTURES / "bad-recipe.json"), "bad-recipe.json")


@pytest.mark.parametrize("edit, path", [
    (lambda r: r.update(extra=1), "extra"),
    (lambda r: r.update(kind="bench"), "kind"),
    (lambda r: r["workload"].update(n_opz=3), "workload.n_opz"),
    (lambda r: r["sweep"].update(axis="ways"), "sweep.axis"),
    (lambda r: r["sweep"].update(models=["weak"]), "sweep.models"),
    (lambda r: r["expect"][0].update(check="between"), "expect[0].check"),
    (lambda r: r["expect"][0].update(b="weak"), "expect[0].b"),
    (lambda r: r["expect"][0].update(scales=["huge"]), "expect[0].scales"),
    (lambda r: r.update(config={"pim": {"bufer": 2}}), "config.pim.bufer"),
    (lambda r: r.update(smoke={"workload": {"n_ops": -1}}), "smoke.workload"),
])
def test_malformed_recipes(edit, path):
    r = copy.deepcopy(SWEEP)
    edit(r)
    with pytest.raises(RecipeError) as e:
        check_recipe(r, "t.json")
    assert str(e.value).startswith(f"t.json: {path}") or f"t.json: full.{path}" in str(e.value) \
        or f"t.json: smoke.{path}" in str(e.value)


def test_unknown_recipe_name():
    with pytest.raises(RecipeError):
        load_recipe("no-such-recipe")


def _rows(axis_vals, table):
    return [{"axis": "scopes", "point": p, "model": m, "x": v}
            for p, per in zip(axis_vals, table) for m, v in per.items()]


@pytest.mark.parametrize("check, ok", [
    ({"check": "order", "metric": "x", "models": ["naive", "sw_flush", "uncacheable"]}, True),
    ({"check": "order", "metric": "x", "models": ["naive", "sw_flush"], "points": [64]}, True),
    ({"check": "ratio_grows", "metric": "x", "num": "uncacheable", "den": "naive"}, False),
    ({"check": "at_least", "metric": "x", "a": "sw_flush", "b": "naive"}, True),
    ({"check": "within", "metric": "x", "models": ["naive", "sw_flush"], "tol": 0.5}, True),
    ({"check": "within", "metric": "x", "models": ["naive", "uncacheable"], "tol": 0.5}, False),
    ({"check": "increases", "metric": "x", "models": ["naive"]}, True),
])
def test_evaluate(check, ok):
    rows = _rows([4, 16, 64], [{"naive": 10, "sw_flush": 12, "uncacheable": 40},
                               {"naive": 20, "sw_flush": 22, "uncacheable": 60},
                               {"naive": 30, "sw_flush": 33, "uncacheable": 100}])
    assert evaluate(check, rows).ok is ok


def test_smoke_block_overrides_full(tmp_path):
    r = copy.deepcopy(SWEEP)
    r["smoke"] = {"sweep": {"values": [2]}}
    p = tmp_path / "r.json"
    p.write_text(json.dumps(r))
    res = run_recipe(load_recipe(p), "smoke")
    assert [row["point"] for row in res.rows] == [2, 2]
    assert res.ok


@pytest.mark.parametrize("name", builtin_recipe_names())
def test_shipped_recipes_pass_at_smoke_scale(name):
    res = run_recipe(load_recipe(name), "smoke")
    assert res.ok, [(c.text, c.detail) for c in res.checks if not c.ok]
