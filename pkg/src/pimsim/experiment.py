"""Single runs and sweeps over workloads, with oracle checking and report rows."""

from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor

from .config import BASELINES, MODELS, ConfigError, Model, SimConfig, parse_size
from .stats import normalize, summarize
from .system import RunResult, System
from .workloads import Workload, reference_execute, workload_from_dict

WORKERS_ENV = "PIMSIM_WORKERS"
AXES = ("scopes", "threads", "llc", "model")
# the six configurations compared in most experiments
DEFAULT_MODELS = tuple(MODELS) + (Model.NAIVE, Model.SW_FLUSH)


def workers_default() -> int:
    v = os.environ.get(WORKERS_ENV)
    return max(1, int(v)) if v else 1


def oracle_check(w: Workload, res: RunResult) -> tuple[bool | None, list[str]]:
    """Compare final images and per-thread loads with the reference execution.

    Naive gives no correctness guarantee, so it is not checked (``None``).
    """
    if res.model is Model.NAIVE:
        return None, []
    ref = reference_execute(w)
    problems = [f"scope {s}: final image differs from oracle" for s in ref.image_matches(res.images)]
    for t, (want, got) in enumerate(zip(ref.loads, res.loads)):
        if want != got:
            i = next((i for i, (a, b) in enumerate(zip(want, got)) if a != b), min(len(want), len(got)))
            problems.append(f"thread {t}: load #{i} differs from oracle")
    return not problems, problems


def run_point(cfg: SimConfig, w: Workload, model: Model, *, axis: str | None = None,
              point=None, check_oracle: bool = True) -> tuple[dict, RunResult]:
    cfg = cfg.replace(model=model)
    res = System(cfg, w.amap, w.programs(model), images=w.images()).run()
    match, problems = oracle_check(w, res) if check_oracle else (None, [])
    rep = summarize(res.metrics, model=model.value, config_digest=cfg.digest(),
                    workload_hash=w.hash(), extra={
                        "axis": axis, "point": point, "seed": cfg.seed, "workload": w.name,
                        "violations": len(res.violations), "violation_samples": res.violations[:5],
                        "oracle_match": match, "oracle_problems": problems[:5],
                    })
    return rep, res


# -- sweeps -----------------------------------------------------------------------------
def point_setup(cfg: SimConfig, workload: dict, axis: str, value) -> tuple[SimConfig, dict]:
    """Config and workload description for one sweep point."""
    wl = dict(workload)
    if axis == "scopes":
        wl["n_scopes"] = int(value)
    elif axis == "threads":
        n = int(value)
        wl["n_threads"] = n
        # the default host runs 4 threads on 6 cores; wider runs double the cores
        if n > cfg.cores - 2:
            cfg = cfg.replace(cores=max(cfg.cores, 2 * n))
    elif axis == "llc":
        size = parse_size(value, "llc.size")
        cfg = cfg.replace(llc=dataclasses.replace(cfg.llc, size=size))
        cfg.validate()
    elif axis != "model":
        raise ConfigError("axis", f"unknown sweep axis {axis!r} (choose from {', '.join(AXES)})")
    return cfg, wl


def _task(args) -> dict:
    cfg, workload, axis, value, model = args
    pcfg, wl = point_setup(cfg, workload, axis, value)
    rep, _ = run_point(pcfg, workload_from_dict(wl), model, axis=axis, point=value)
    return rep


def sweep(cfg: SimConfig, workload: dict, axis: str, values: list, models=DEFAULT_MODELS,
          workers: int | None = None) -> list[dict]:
    """One row per (value, model), normalized to Naive at the same point when it ran."""
    if axis not in AXES:
        raise ConfigError("axis", f"unknown sweep axis {axis!r} (choose from {', '.join(AXES)})")
    models = [Model.parse(m) if isinstance(m, str) else m for m in models]
    if axis == "model":
        tasks = [(cfg, workload, axis, v, Model.parse(v)) for v in values]
    else:
        for v in values:
            point_setup(cfg, workload, axis, v)          # reject bad values before running
        tasks = [(cfg, workload, axis, v, m) for v in values for m in models]
    n = workers or workers_default()
    if n > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(min(n, len(tasks))) as ex:
            rows = list(ex.map(_task, tasks))
    else:
        rows = [_task(t) for t in tasks]
    return normalize_rows(rows)


def normalize_rows(rows: list[dict]) -> list[dict]:
    base = {}
    for r in rows:
        if r["model"] == Model.NAIVE.value:
            base[(r["axis"], str(r["point"]) if r["axis"] != "model" else None)] = r
    out = []
    for r in rows:
        key = (r["axis"], str(r["point"]) if r["axis"] != "model" else None)
        b = base.get(key)
        out.append(normalize(r, b) if b is not None else {**r, "total_cycles_norm": None})
    return out


def failures(rows: list[dict]) -> list[str]:
    """Invariant violations and oracle mismatches across report rows."""
    out = []
    for r in rows:
        where = f"{r['model']}" + (f" @ {r['axis']}={r['point']}" if r.get("axis") else "")
        for v in r.get("violation_samples", []):
            out.append(f"{where}: {v}")
        if r.get("violations", 0) > len(r.get("violation_samples", [])):
            out.append(f"{where}: {r['violations']} violations in total")
        if r.get("oracle_match") is False:
            out.extend(f"{where}: {p}" for p in r.get("oracle_problems", []))
    return out


__all__ = ["AXES", "BASELINES", "DEFAULT_MODELS", "WORKERS_ENV", "failures", "normalize_rows",
           "oracle_check", "point_setup", "run_point", "sweep", "workers_default"]
