"""Versioned prompt templates shipped as text assets.

Each template is a ``str.format`` skeleton; its id (the filename stem) is
recorded in traces so runs stay attributable to an exact prompt version.
Custom templates can be loaded from a directory containing files with the
same stems (``rerank*.txt``, ``reasoning*.txt``, ...).
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

_ROLES = ("rerank", "reasoning", "confidence", "revision")


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    text: str

    def render(self, **fields: str) -> str:
        return self.text.format(**fields)


@dataclass(frozen=True)
class PromptLibrary:
    rerank: PromptTemplate
    reasoning: PromptTemplate
    confidence: PromptTemplate
    revision: PromptTemplate

    @property
    def ids(self) -> dict[str, str]:
        return {role: getattr(self, role).template_id for role in _ROLES}


def _template_from_text(path_stem: str, text: str) -> PromptTemplate:
    return PromptTemplate(template_id=path_stem, text=text)


def load_default_library() -> PromptLibrary:
    """Load the templates packaged with this distribution."""
    pkg = resources.files(__package__)
    found: dict[str, PromptTemplate] = {}
    for entry in sorted(pkg.iterdir(), key=lambda e: e.name):
        if not entry.name.endswith(".txt"):
            continue
        stem = entry.name[: -len(".txt")]
        role = stem.split("_")[0]
        if role in _ROLES:
            found[role] = _template_from_text(stem, entry.read_text(encoding="utf-8"))
    return _build(found, origin="packaged templates")


def load_library(templates_dir: str | Path) -> PromptLibrary:
    """Load templates from a directory, e.g. for prompt experiments."""
    root = Path(templates_dir)
    found: dict[str, PromptTemplate] = {}
    for path in sorted(root.glob("*.txt")):
        role = path.stem.split("_")[0]
        if role in _ROLES:
            found[role] = _template_from_text(path.stem, path.read_text(encoding="utf-8"))
    return _build(found, origin=str(root))


def _build(found: dict[str, PromptTemplate], origin: str) -> PromptLibrary:
    missing = [role for role in _ROLES if role not in found]
    if missing:
        raise FileNotFoundError(f"missing prompt template(s) {missing} in {origin}")
    return PromptLibrary(**found)
