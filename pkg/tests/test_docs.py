"""docs/models.md and the built-in litmus suite must move together."""
import re
from pathlib import Path

from pimsim.litmus import builtin_names

DOC = Path(__file__).resolve().parents[1] / "docs" / "models.md"
TAG = re.compile(r"\[litmus: ([\w-]+)\]")


def _rule_lines():
    text = DOC.read_text()
    body = text.split("## Litmus format")[0]
    return [ln for ln in body.splitlines() if ln.startswith("- ")]


def test_every_rule_has_a_tag():
    missing = [ln for ln in _rule_lines() if not TAG.search(ln)]
    assert not missing


def test_every_tag_names_a_builtin_test():
    names = set(builtin_names())
    tags = {t for ln in _rule_lines() for t in TAG.findall(ln)}
    assert tags <= names, tags - names


def test_every_builtin_test_is_documented():
    tags = {t for ln in _rule_lines() for t in TAG.findall(ln)}
    assert set(builtin_names()) <= tags
