"""Experiment recipes: JSON files naming a config, a workload or litmus set, and
the properties the results must satisfy.

Two kinds exist. ``litmus`` recipes explore litmus tests and require every
verdict to pass. ``sweep`` recipes run one simulation per (axis value,
model) and evaluate checks over the report rows. A ``smoke`` block holds
overrides for the smallest scale, used by :func:`validate_recipes`.

Checks (all run over the rows of one sweep):

``order``        metric strictly (or weakly) increasing over ``models`` at each point
``ratio_grows``  metric(num) / metric(den) strictly increasing along the axis
``at_least``     metric(a) >= metric(b) at each point
``within``       max / min - 1 <= tol over ``models`` at each point
``increases``    metric strictly increasing along the axis for each of ``models``

Every sweep also requires zero invariant violations and oracle agreement.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .config import ConfigError, Model, config_from_dict
from .experiment import AXES, DEFAULT_MODELS, failures, point_setup, sweep
from .workloads import workload_config

SCALES = ("smoke", "full")
_TOP = {"name", "description", "criteria", "kind", "config", "workload", "sweep", "litmus", "smoke", "expect"}
_CHECKS = {
    "order": {"metric", "models", "strict", "points"},
    "ratio_grows": {"metric", "num", "den"},
    "at_least": {"metric", "a", "b"},
    "within": {"metric", "models", "tol"},
    "increases": {"metric", "models"},
}


class RecipeError(ValueError):
    pass


@dataclass
class CheckResult:
    text: str
    ok: bool
    detail: str = ""


@dataclass
class RecipeResult:
    name: str
    scale: str
    rows: list[dict] = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)


# -- loading and validation ------------------------------------------------------------
def _recipe_dir():
    return resources.files("pimsim") / "data" / "recipes"


def builtin_recipe_names() -> list[str]:
    return sorted(p.name[:-5] for p in _recipe_dir().iterdir() if p.name.endswith(".json"))


def load_recipe(name_or_path: str | Path) -> dict:
    p = Path(name_or_path)
    if p.suffix == ".json" and p.exists():
        text, origin = p.read_text(), str(p)
    else:
        r = _recipe_dir() / f"{name_or_path}.json"
        if not r.is_file():
            raise RecipeError(f"unknown recipe {name_or_path!r} (built-in: {', '.join(builtin_recipe_names())})")
        text, origin = r.read_text(), f"builtin:{name_or_path}"
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise RecipeError(f"{origin}: invalid JSON: {e}") from None
    check_recipe(data, origin)
    return data


def _fail(origin: str, path: str, msg: str):
    raise RecipeError(f"{origin}: {path}: {msg}")


def _models(origin: str, path: str, names) -> list[Model]:
    if names == "all":
        return list(Model)
    if not isinstance(names, list) or not names:
        _fail(origin, path, "expected a non-empty list of model names or 'all'")
    try:
        return [Model.parse(n) for n in names]
    except (ValueError, AttributeError) as e:
        _fail(origin, path, str(e))


def check_recipe(data: dict, origin: str = "<recipe>") -> None:
    """Reject malformed recipes before anything runs; messages name the offending path."""
    if not isinstance(data, dict):
        _fail(origin, "<root>", "expected an object")
    for k in data:
        if k not in _TOP:
            _fail(origin, k, "unknown key")
    if not isinstance(data.get("name"), str):
        _fail(origin, "name", "required string")
    kind = data.get("kind")
    if kind not in ("litmus", "sweep"):
        _fail(origin, "kind", "must be 'litmus' or 'sweep'")
    smoke = data.get("smoke", {})
    if not isinstance(smoke, dict):
        _fail(origin, "smoke", "expected an object")
    for scale in SCALES:
        r = _scaled(data, scale)
        try:
            config_from_dict(r.get("config", {}))
        except ConfigError as e:
            _fail(origin, f"{scale}.config.{e.path}", e.msg)
        if kind == "litmus":
            lit = r.get("litmus")
            if not isinstance(lit, dict):
                _fail(origin, "litmus", "required object")
            for k in lit:
                if k not in ("tests", "models", "mode", "depth", "trials", "seed"):
                    _fail(origin, f"litmus.{k}", "unknown key")
            _models(origin, "litmus.models", lit.get("models", "all"))
            if lit.get("mode", "exhaustive") not in ("exhaustive", "random"):
                _fail(origin, "litmus.mode", "must be 'exhaustive' or 'random'")
            from .litmus import builtin_names
            tests = lit.get("tests", "builtin")
            if tests != "builtin":
                if not isinstance(tests, list):
                    _fail(origin, "litmus.tests", "expected a list of test names or 'builtin'")
                for t in tests:
                    if t not in builtin_names():
                        _fail(origin, "litmus.tests", f"unknown litmus test {t!r}")
            continue
        try:
            workload_config(r.get("workload", {}))
        except ConfigError as e:
            _fail(origin, f"{scale}.{e.path}", e.msg)
        sw = r.get("sweep")
        if not isinstance(sw, dict):
            _fail(origin, "sweep", "required object")
        for k in sw:
            if k not in ("axis", "values", "models"):
                _fail(origin, f"sweep.{k}", "unknown key")
        if sw.get("axis") not in AXES:
            _fail(origin, "sweep.axis", f"must be one of {', '.join(AXES)}")
        if not isinstance(sw.get("values"), list) or not sw["values"]:
            _fail(origin, "sweep.values", "required non-empty list")
        if sw["axis"] == "model":
            _models(origin, "sweep.values", sw["values"])
        else:
            _models(origin, "sweep.models", sw.get("models", [m.value for m in DEFAULT_MODELS]))
            base = config_from_dict(r.get("config", {}))
            for v in sw["values"]:
                try:
                    point_setup(base, r.get("workload", {}), sw["axis"], v)
                except ConfigError as e:
                    _fail(origin, "sweep.values", f"{v!r}: {e}")
    for i, c in enumerate(data.get("expect", [])):
        where = f"expect[{i}]"
        if not isinstance(c, dict) or c.get("check") not in _CHECKS:
            _fail(origin, f"{where}.check", f"must be one of {', '.join(sorted(_CHECKS))}")
        if kind == "litmus":
            _fail(origin, where, "litmus recipes take no checks (every verdict must pass)")
        allowed = _CHECKS[c["check"]] | {"check", "scales", "criterion"}
        for k in c:
            if k not in allowed:
                _fail(origin, f"{where}.{k}", "unknown key")
        for k in ("models", "num", "den", "a", "b"):
            if k in c:
                _models(origin, f"{where}.{k}", c[k] if isinstance(c[k], list) else [c[k]])
        if any(s not in SCALES for s in c.get("scales", SCALES)):
            _fail(origin, f"{where}.scales", f"entries must be in {SCALES}")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _scaled(data: dict, scale: str) -> dict:
    return _merge(data, data.get("smoke", {})) if scale == "smoke" else copy.deepcopy(data)


# -- running ----------------------------------------------------------------------------
def run_recipe(data: dict, scale: str = "full", workers: int | None = None) -> RecipeResult:
    if scale not in SCALES:
        raise RecipeError(f"scale must be one of {SCALES}")
    check_recipe(data, data.get("name", "<recipe>"))
    r = _scaled(data, scale)
    res = RecipeResult(r["name"], scale)
    cfg = config_from_dict(r.get("config", {}))
    if r["kind"] == "litmus":
        from .litmus import builtin, builtin_names, explore, verdict
        lit = r["litmus"]
        names = builtin_names() if lit.get("tests", "builtin") == "builtin" else lit["tests"]
        for n in names:
            t = builtin(n)
            for m in _models(r["name"], "litmus.models", lit.get("models", "all")):
                o = explore(t, m, lit.get("mode", "exhaustive"), depth=lit.get("depth", 10),
                            trials=lit.get("trials", 200), seed=lit.get("seed", 1), base=cfg,
                            workers=workers)
                v = verdict(o, t)
                res.verdicts.append(v)
                res.checks.append(CheckResult(f"litmus {n} under {m.value}", v.ok,
                                              "; ".join(f"{c.kind} {c.text}: {c.status}"
                                                        for c in v.results if c.status == "fail")))
        return res
    sw = r["sweep"]
    models = sw.get("models", [m.value for m in DEFAULT_MODELS])
    res.rows = sweep(cfg, r.get("workload", {}), sw["axis"], sw["values"], models, workers)
    bad = failures(res.rows)
    res.checks.append(CheckResult("no invariant violations; oracle agrees", not bad, "; ".join(bad[:5])))
    for c in r.get("expect", []):
        if scale in c.get("scales", SCALES):
            res.checks.append(evaluate(c, res.rows))
    return res


def _groups(rows: list[dict]) -> dict[str, dict[str, dict]]:
    """point -> model -> row; a model-axis sweep is one group."""
    out: dict[str, dict[str, dict]] = {}
    for row in rows:
        key = "-" if row["axis"] == "model" else str(row["point"])
        out.setdefault(key, {})[row["model"]] = row
    return out


def _name(m) -> str:
    return Model.parse(m).value


def evaluate(c: dict, rows: list[dict]) -> CheckResult:
    kind, metric = c["check"], c["metric"]
    groups = _groups(rows)
    tag = f"[{c['criterion']}] " if "criterion" in c else ""
    if kind == "order":
        models = [_name(m) for m in c["models"]]
        strict = c.get("strict", True)
        rel = " < " if strict else " <= "
        text = f"{tag}{metric}: {rel.join(models)}"
        pts = [str(p) for p in c["points"]] if "points" in c else list(groups)
        bad = []
        for p in pts:
            vals = [groups[p][m][metric] for m in models]
            if not all((a < b) if strict else (a <= b) for a, b in zip(vals, vals[1:])):
                bad.append(f"{p}: {vals}")
        return CheckResult(text, not bad, "; ".join(bad))
    if kind == "ratio_grows":
        num, den = _name(c["num"]), _name(c["den"])
        ratios = [groups[p][num][metric] / groups[p][den][metric] for p in groups]
        ok = all(a < b for a, b in zip(ratios, ratios[1:]))
        return CheckResult(f"{tag}{metric} {num}/{den} grows along the axis", ok,
                           ", ".join(f"{p}: {x:.3f}" for p, x in zip(groups, ratios)))
    if kind == "at_least":
        a, b = _name(c["a"]), _name(c["b"])
        vals = {p: (g[a][metric], g[b][metric]) for p, g in groups.items()}
        ok = all(x is not None and y is not None and x >= y for x, y in vals.values())
        return CheckResult(f"{tag}{metric}: {a} >= {b}", ok,
                           ", ".join(f"{p}: {x} vs {y}" for p, (x, y) in vals.items()))
    if kind == "within":
        models = [_name(m) for m in c["models"]]
        tol = c["tol"]
        spreads = {}
        for p, g in groups.items():
            vals = [g[m][metric] for m in models]
            spreads[p] = max(vals) / min(vals) - 1
        ok = all(s <= tol for s in spreads.values())
        return CheckResult(f"{tag}{metric} of {', '.join(models)} within {tol:.0%}", ok,
                           ", ".join(f"{p}: spread {s:.2%}" for p, s in spreads.items()))
    models = [_name(m) for m in c["models"]]
    bad = []
    for m in models:
        vals = [g[m][metric] for g in groups.values()]
        if any(v is None for v in vals) or not all(x < y for x, y in zip(vals, vals[1:])):
            bad.append(f"{m}: {vals}")
    return CheckResult(f"{tag}{metric} increases along the axis for {', '.join(models)}", not bad, "; ".join(bad))


def validate_recipes(paths=None, scale: str = "smoke", workers: int | None = None) -> list[RecipeResult]:
    """Load, check and run every shipped recipe (or ``paths``) at ``scale``.

    Malformed recipes raise :class:`RecipeError` before anything runs.
    """
    recipes = [load_recipe(p) for p in (paths if paths is not None else builtin_recipe_names())]
    return [run_recipe(r, scale, workers) for r in recipes]
