"""Litmus tests for host and PIM ordering: format, exploration, verdicts."""

from __future__ import annotations

from importlib import resources

from .explore import (ClauseResult, OutcomeSet, Verdict, Witness, explore, replay, run_once, verdict,
                      verdict_lines, verdict_record)
from .fmt import Condition, LitmusError, LitmusTest, load_litmus, parse_litmus
from .tso import tso_outcomes


def builtin_names() -> list[str]:
    d = resources.files("pimsim") / "data" / "litmus"
    return sorted(p.name[:-7] for p in d.iterdir() if p.name.endswith(".litmus"))


def builtin(name: str) -> LitmusTest:
    p = resources.files("pimsim") / "data" / "litmus" / f"{name}.litmus"
    if not p.is_file():
        raise LitmusError(f"unknown litmus test {name!r} (built-in: {', '.join(builtin_names())})")
    return parse_litmus(p.read_text(), f"builtin:{name}")


def builtin_suite() -> list[LitmusTest]:
    return [builtin(n) for n in builtin_names()]


__all__ = [
    "ClauseResult", "Condition", "LitmusError", "LitmusTest", "OutcomeSet", "Verdict", "Witness",
    "builtin", "builtin_names", "builtin_suite", "explore", "load_litmus", "parse_litmus",
    "replay", "run_once", "tso_outcomes", "verdict", "verdict_lines", "verdict_record",
]
