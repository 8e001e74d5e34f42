"""Sweep figures: absolute and Naive-normalized run time per model along the swept axis."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {"naive": "--", "sw_flush": "--", "uncacheable": ":"}


def _series(rows: list[dict], key: str) -> dict[str, tuple[list, list]]:
    points = list(dict.fromkeys(str(r["point"]) for r in rows))
    out: dict[str, tuple[list, list]] = {}
    for r in rows:
        v = r.get(key)
        if v is None:
            continue
        xs, ys = out.setdefault(r["model"], ([], []))
        xs.append(points.index(str(r["point"])))
        ys.append(v)
    return out


def plot_sweep(rows: list[dict], path: str | Path, title: str | None = None) -> Path:
    """Two panels (cycles, cycles / Naive) with one line per model; returns the file written."""
    path = Path(path)
    axis = rows[0]["axis"] if rows else ""
    points = list(dict.fromkeys(str(r["point"]) for r in rows))
    fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
    for ax, key, label in ((a, "total_cycles", "cycles"), (b, "total_cycles_norm", "relative to naive")):
        for model, (xs, ys) in sorted(_series(rows, key).items()):
            ax.plot(xs, ys, _STYLE.get(model, "-"), marker="o", label=model)
        ax.set_xticks(range(len(points)))
        ax.set_xticklabels(points)
        ax.set_xlabel(axis)
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    a.legend(fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path
