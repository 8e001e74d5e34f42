"""``sim`` command line: run, litmus, sweep, recipes."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, Model, load_config
from .engine import SimulatorBug
from .experiment import AXES, DEFAULT_MODELS, failures, normalize_rows, run_point, sweep
from .stats import write_reports
from .workloads import YcsbConfig, generate_ycsb, load_workload


def _models(spec: str, default=DEFAULT_MODELS) -> list[Model]:
    if spec == "all":
        return list(Model)
    if spec == "default":
        return list(default)
    return [Model.parse(s) for s in spec.split(",") if s.strip()]


def _base_config(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "pim_latency", None) == "zero":
        cfg.pim.zero_latency = True
    if getattr(args, "pim_buffer", None) is not None:
        cfg.pim.buffer = None if args.pim_buffer == "unbounded" else int(args.pim_buffer)
    return cfg.validate()


def _workload_dict(path: str | None) -> dict:
    if path is None:
        return {"kind": "ycsb"}
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(path, f"invalid JSON: {e}") from None


# -- run -------------------------------------------------------------------------------
def cmd_run(args) -> int:
    cfg = _base_config(args)
    w = load_workload(args.workload) if args.workload else generate_ycsb(YcsbConfig())
    rows = []
    for m in _models(args.model, default=(cfg.model,)):
        try:
            rep, _ = run_point(cfg, w, m, check_oracle=not args.no_oracle)
        except SimulatorBug as e:
            print(f"{m.value}: simulator error: {e}", file=sys.stderr)
            print(f"repro: sim run --model {m.value} --seed {cfg.seed}"
                  + (f" --config {args.config}" if args.config else "")
                  + (f" --workload {args.workload}" if args.workload else ""), file=sys.stderr)
            return 3
        rows.append(rep)
        print(f"{m.value:<14} cycles={rep['total_cycles']} violations={rep['violations']} "
              f"oracle={'n/a' if rep['oracle_match'] is None else rep['oracle_match']}")
    rows = normalize_rows([{**r, "axis": "model", "point": r["model"]} for r in rows])
    jp, cp = write_reports(rows, args.out, args.stem)
    print(f"wrote {jp} and {cp}")
    bad = failures(rows)
    if bad:
        for b in bad[:10]:
            print(f"FAIL {b}", file=sys.stderr)
        print(f"repro: rerun with --seed {cfg.seed} (workload {rows[0]['workload_hash']}, "
              f"config {rows[0]['config_digest']})", file=sys.stderr)
        return 1
    return 0


# -- litmus ------------------------------------------------------------------------------
def cmd_litmus(args) -> int:
    from .litmus import builtin, builtin_names, explore, load_litmus, verdict, verdict_lines, verdict_record
    if args.file:
        tests = [load_litmus(f) for f in args.file]
    elif args.test:
        tests = [builtin(n) for n in args.test]
    elif args.suite == "builtin":
        tests = [builtin(n) for n in builtin_names()]
    else:
        raise ConfigError("--suite", f"unknown suite {args.suite!r} (only 'builtin')")
    cfg = load_config(args.config)
    models = _models(args.model, default=list(Model))
    records, ok = [], True
    for t in tests:
        for m in models:
            o = explore(t, m, args.mode, depth=args.depth, trials=args.trials, seed=args.seed, base=cfg)
            v = verdict(o, t)
            ok &= v.ok
            records.append(verdict_record(v))
            print("\n".join(verdict_lines(v) if args.verbose or not v.ok else verdict_lines(v)[:1]))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        p = out / f"{args.stem}.json"
        p.write_text(json.dumps(records, indent=2, sort_keys=True) + "\n")
        print(f"wrote {p}")
    n_bad = sum(not r["ok"] for r in records)
    print(f"{len(records) - n_bad}/{len(records)} verdicts pass")
    return 0 if ok else 1


# -- sweep -----------------------------------------------------------------------------------
def _values(axis: str, raw: str) -> list:
    vals = [v.strip() for v in raw.split(",") if v.strip()]
    if axis in ("scopes", "threads"):
        try:
            return [int(v) for v in vals]
        except ValueError:
            raise ConfigError("--values", f"{axis} values must be integers") from None
    return vals


def cmd_sweep(args) -> int:
    if args.recipe:
        return _run_recipe(args.recipe, args)
    if args.axis is None or args.values is None:
        raise ConfigError("sweep", "--axis and --values are required (or --recipe)")
    cfg = _base_config(args)
    rows = sweep(cfg, _workload_dict(args.workload), args.axis, _values(args.axis, args.values),
                 _models(args.model), args.workers)
    return _finish_rows(rows, args, f"{args.axis} sweep")


def _finish_rows(rows: list[dict], args, title: str) -> int:
    for r in rows:
        norm = r.get("total_cycles_norm")
        print(f"{r['axis']}={r['point']!s:<8} {r['model']:<14} cycles={r['total_cycles']:<10} "
              f"norm={'' if norm is None else f'{norm:.3f}'}")
    jp, cp = write_reports(rows, args.out, args.stem)
    print(f"wrote {jp} and {cp}")
    if args.plot:
        from .plots import plot_sweep
        print(f"wrote {plot_sweep(rows, Path(args.out) / f'{args.stem}.png', title)}")
    bad = failures(rows)
    for b in bad[:10]:
        print(f"FAIL {b}", file=sys.stderr)
    return 1 if bad else 0


def _run_recipe(name: str, args) -> int:
    from .litmus import verdict_lines
    from .recipes import load_recipe, run_recipe
    res = run_recipe(load_recipe(name), args.scale, args.workers)
    if res.rows:
        _finish_rows(res.rows, args, res.name)
    for v in res.verdicts:
        print("\n".join(verdict_lines(v)[: None if not v.ok else 1]))
    for c in res.checks:
        print(f"{'PASS' if c.ok else 'FAIL'}  {c.text}" + (f"  ({c.detail})" if c.detail else ""))
    return 0 if res.ok else 1


def cmd_recipes(args) -> int:
    from .recipes import RecipeError, builtin_recipe_names, load_recipe, run_recipe
    names = args.names or builtin_recipe_names()
    if args.list:
        for n in builtin_recipe_names():
            r = load_recipe(n)
            print(f"{n:<18} {r.get('description', '')}")
        return 0
    ok = True
    for n in names:
        try:
            res = run_recipe(load_recipe(n), args.scale, args.workers)
        except RecipeError as e:
            print(f"FAIL  {n}: {e}")
            ok = False
            continue
        ok &= res.ok
        print(f"{'PASS' if res.ok else 'FAIL'}  {n} ({args.scale})")
        for c in res.checks:
            if not c.ok:
                print(f"      {c.text}: {c.detail}")
    return 0 if ok else 1


# -- parser -----------------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sim", description="PIM ordering and coherence simulator")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, out_stem):
        sp.add_argument("--config", help="SimConfig JSON (defaults if omitted)")
        sp.add_argument("--seed", type=int, help="top-level seed (overrides the config)")
        sp.add_argument("--out", default="reports", help="report directory (default: reports)")
        sp.add_argument("--stem", default=out_stem, help="report file name stem")

    r = sub.add_parser("run", help="one simulation per model; JSON+CSV report")
    common(r, "run")
    r.add_argument("--workload", help="workload JSON (default: YCSB defaults)")
    r.add_argument("--model", default="default",
                   help="model name, comma list, 'all', or 'default' (the config's model)")
    r.add_argument("--pim-latency", choices=("default", "zero"), default="default")
    r.add_argument("--pim-buffer", help="PIM buffer entries or 'unbounded'")
    r.add_argument("--no-oracle", action="store_true", help="skip the reference-oracle comparison")
    r.set_defaults(fn=cmd_run)

    lt = sub.add_parser("litmus", help="explore litmus tests and print verdicts")
    lt.add_argument("--suite", default="builtin")
    lt.add_argument("--file", action="append", help="litmus file (repeatable)")
    lt.add_argument("--test", action="append", help="built-in test name (repeatable)")
    lt.add_argument("--model", default="all")
    lt.add_argument("--mode", choices=("random", "exhaustive"), default="exhaustive")
    lt.add_argument("--depth", type=int, default=10, help="choice-tree depth bound (exhaustive)")
    lt.add_argument("--trials", type=int, default=200, help="trials (random)")
    lt.add_argument("--seed", type=int, default=1)
    lt.add_argument("--config", help="SimConfig JSON")
    lt.add_argument("--out", help="write verdicts as JSON into this directory")
    lt.add_argument("--stem", default="litmus")
    lt.add_argument("-v", "--verbose", action="store_true", help="print every clause")
    lt.set_defaults(fn=cmd_litmus)

    sw = sub.add_parser("sweep", help="one run per (axis value, model); CSV with normalized columns")
    common(sw, "sweep")
    sw.add_argument("--workload", help="workload JSON (default: YCSB defaults)")
    sw.add_argument("--axis", choices=AXES)
    sw.add_argument("--values", help="comma-separated axis values, e.g. 4,16,64 or 2MiB,8MiB")
    sw.add_argument("--model", default="default",
                    help="comma list, 'all', or 'default' (four models plus naive and sw_flush)")
    sw.add_argument("--pim-latency", choices=("default", "zero"), default="default")
    sw.add_argument("--pim-buffer", help="PIM buffer entries or 'unbounded'")
    sw.add_argument("--workers", type=int, help="parallel worker processes (env PIMSIM_WORKERS)")
    sw.add_argument("--plot", action="store_true", help="also render a PNG next to the CSV")
    sw.add_argument("--recipe", help="run a recipe (name or JSON path) instead of --axis/--values")
    sw.add_argument("--scale", choices=("smoke", "full"), default="full", help="recipe scale")
    sw.set_defaults(fn=cmd_sweep)

    rc = sub.add_parser("recipes", help="validate shipped recipes (or run named ones)")
    rc.add_argument("names", nargs="*")
    rc.add_argument("--scale", choices=("smoke", "full"), default="smoke")
    rc.add_argument("--workers", type=int)
    rc.add_argument("--list", action="store_true")
    rc.set_defaults(fn=cmd_recipes)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    from .litmus import LitmusError
    from .recipes import RecipeError
    try:
        return args.fn(args)
    except (ConfigError, LitmusError, RecipeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
