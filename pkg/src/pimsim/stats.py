"""Run metrics, report summaries, normalization and CSV/JSON output."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean


@dataclass
class RunMetrics:
    total_cycles: int = 0
    thread_cycles: list[int] = field(default_factory=list)
    sb_hits: dict[str, int] = field(default_factory=dict)
    sb_misses: dict[str, int] = field(default_factory=dict)
    # (time, cycles) per PIM op at the LLC; scope-buffer hits count as zero
    scan_latency: list[tuple[int, int]] = field(default_factory=list)
    # (time, sets skipped / sets total) per performed scan
    skip_ratio: list[tuple[int, float]] = field(default_factory=list)
    scan_lines: int = 0
    fence_scans: int = 0
    pim_occupancy: list[tuple[int, int]] = field(default_factory=list)
    unique_scopes: list[tuple[int, int]] = field(default_factory=list)
    mc_occupancy: list[tuple[int, int]] = field(default_factory=list)
    scan_writebacks_sent: int = 0
    scan_writebacks_seen: int = 0
    writebacks: int = 0
    pim_ops: int = 0
    loads: int = 0
    messages: int = 0
    events: int = 0

    # -- hooks -----------------------------------------------------------------
    def record_scan(self, cache: str, t: int, latency: int, visited: int, total: int,
                    flushed: int, hit: bool = False, fence: bool = False) -> None:
        if fence:
            self.fence_scans += 1
            return
        if hit:
            self.sb_hits[cache] = self.sb_hits.get(cache, 0) + 1
        else:
            self.sb_misses[cache] = self.sb_misses.get(cache, 0) + 1
            self.skip_ratio.append((t, (total - visited) / total))
            self.scan_lines += flushed
        self.scan_latency.append((t, latency))

    def record_pim_arrival(self, t: int, occupancy: int, unique: int) -> None:
        self.pim_occupancy.append((t, occupancy))
        self.unique_scopes.append((t, unique))

    def record_mc(self, t: int, occupancy: int) -> None:
        self.mc_occupancy.append((t, occupancy))

    def hit_rate(self, cache: str = "llc") -> float | None:
        h = self.sb_hits.get(cache, 0)
        n = h + self.sb_misses.get(cache, 0)
        return None if n == 0 else h / n


def _mean(samples) -> float | None:
    vals = [v for _, v in samples]
    return fmean(vals) if vals else None


def summarize(m: RunMetrics, *, model: str, config_digest: str, workload_hash: str,
              extra: dict | None = None) -> dict:
    occ = [v for _, v in m.pim_occupancy]
    rep = {
        "model": model,
        "config_digest": config_digest,
        "workload_hash": workload_hash,
        "total_cycles": m.total_cycles,
        "thread_cycles": list(m.thread_cycles),
        "sb_hit_rate": m.hit_rate("llc"),
        "sb_hits": m.sb_hits.get("llc", 0),
        "sb_misses": m.sb_misses.get("llc", 0),
        "mean_scan_latency": _mean(m.scan_latency),
        "mean_skip_ratio": _mean(m.skip_ratio),
        "scan_lines_flushed": m.scan_lines,
        "mean_pim_occupancy": fmean(occ) if occ else None,
        "max_pim_occupancy": max(occ) if occ else 0,
        "mean_unique_scopes": _mean(m.unique_scopes),
        "mean_mc_occupancy": _mean(m.mc_occupancy),
        "pim_ops": m.pim_ops,
        "loads": m.loads,
        "writebacks": m.writebacks,
        "messages": m.messages,
        "events": m.events,
    }
    if extra:
        rep.update(extra)
    return rep


class BaselineMismatch(ValueError):
    pass


def normalize(report: dict, baseline: dict, keys=("total_cycles",)) -> dict:
    """Add ``<key>_norm`` = report/baseline columns; workloads must match."""
    if report["workload_hash"] != baseline["workload_hash"]:
        raise BaselineMismatch(
            f"workload {report['workload_hash']} differs from baseline {baseline['workload_hash']}")
    out = dict(report)
    for k in keys:
        b = baseline.get(k)
        out[f"{k}_norm"] = None if not b else report[k] / b
    return out


# Stable CSV column order. Extra keys in a report are ignored.
CSV_COLUMNS = [
    "axis", "point", "model", "workload_hash", "config_digest", "total_cycles", "total_cycles_norm",
    "sb_hit_rate", "mean_scan_latency", "mean_skip_ratio", "scan_lines_flushed",
    "mean_pim_occupancy", "max_pim_occupancy", "mean_unique_scopes", "mean_mc_occupancy",
    "pim_ops", "loads", "writebacks", "violations", "oracle_match",
]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, dict)):
        return json.dumps(v)
    return str(v)


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_reports(rows: list[dict], out_dir: str | Path, stem: str) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jp = out / f"{stem}.json"
    cp = out / f"{stem}.csv"
    jp.write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    cp.write_text(to_csv(rows))
    return jp, cp
